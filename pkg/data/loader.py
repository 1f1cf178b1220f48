"""
Manifest-driven dataset ingest.

A manifest is a JSON file with ``name``, ``feature_dims`` and ``samples``;
each sample points at two headerless CSV files (audio rows = features,
video rows = time steps), resolved relative to the manifest's directory.
"""

import json
import logging
import re
import warnings
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import ValidationError

from data.schema import DatasetManifest, FeatureDims, MultimodalSample, SampleEntry
from utils.errors import IngestError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MANIFEST_NAME = "manifest.json"


def read_manifest(path: PathLike) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IngestError(f"manifest {path} is not valid JSON: {e}")
    try:
        return DatasetManifest.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(p) for p in err.get("loc", ()))
        raise IngestError(f"manifest {path} is invalid at {where or 'root'}: {err.get('msg')}")


def read_feature_matrix(path: Path, sample_id: str) -> np.ndarray:
    """Headerless CSV of decimal floats as a 2-D float64 array."""
    if not path.is_file():
        raise IngestError(f"feature file not found: {path}", sample_id)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty-file warning
            values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2, encoding="utf-8")
    except ValueError as e:
        raise IngestError(f"cannot parse {path.name}: {e}", sample_id)
    if values.size == 0:
        raise IngestError(f"{path.name} holds no values", sample_id)
    if not np.all(np.isfinite(values)):
        raise IngestError(f"{path.name} contains non-finite values", sample_id)
    return values


def _load_sample(entry: SampleEntry, root: Path, dims: FeatureDims) -> MultimodalSample:
    audio = read_feature_matrix(root / entry.audio, entry.id)
    video = read_feature_matrix(root / entry.video, entry.id)
    if audio.shape[0] != dims.audio:
        raise IngestError(f"audio file has {audio.shape[0]} feature rows, manifest declares {dims.audio}", entry.id)
    if video.shape[1] != dims.video:
        raise IngestError(f"video file has {video.shape[1]} feature columns, manifest declares {dims.video}", entry.id)
    return MultimodalSample(id=entry.id, audio=audio, video=video, label=int(entry.label))


def load_dataset(manifest_path: PathLike, n_jobs: Optional[int] = 1) -> List[MultimodalSample]:
    """Every sample of a manifest, validated against its declared dims and ordered by id."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent
    logger.info("Loading %d samples of %r from %s", len(manifest.samples), manifest.name, manifest_path)

    if not manifest.samples:
        return []
    samples = Parallel(n_jobs=n_jobs or 1, prefer="threads")(
        delayed(_load_sample)(entry, root, manifest.feature_dims) for entry in manifest.samples
    )
    return sorted(samples, key=lambda s: s.id)


def _file_stem(sample_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", sample_id)


def save_dataset(samples: Sequence[MultimodalSample], out_dir: PathLike, name: str) -> Path:
    """
    Writes ``audio/<id>.csv``, ``video/<id>.csv`` and the manifest; values use
    17 significant digits so a reload is bit-exact.
    """
    out_dir = Path(out_dir)
    if not samples:
        raise IngestError("cannot save an empty dataset without feature dims")
    dims = FeatureDims(audio=samples[0].audio_dim, video=samples[0].video_dim)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "video").mkdir(parents=True, exist_ok=True)

    entries = []
    stems = set()
    for sample in sorted(samples, key=lambda s: s.id):
        if sample.audio_dim != dims.audio or sample.video_dim != dims.video:
            raise IngestError("feature dims differ from the first sample", sample.id)
        stem = _file_stem(sample.id)
        if stem in stems:
            raise IngestError(f"file name {stem!r} collides with another sample", sample.id)
        stems.add(stem)
        audio_rel, video_rel = f"audio/{stem}.csv", f"video/{stem}.csv"
        np.savetxt(out_dir / audio_rel, sample.audio, fmt="%.17g", delimiter=",")
        np.savetxt(out_dir / video_rel, sample.video, fmt="%.17g", delimiter=",")
        entries.append(SampleEntry(id=sample.id, audio=audio_rel, video=video_rel, label=sample.label))

    manifest = DatasetManifest(name=name, feature_dims=dims, samples=entries)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    logger.info("Saved %d samples of %r to %s", len(entries), name, out_dir)
    return path

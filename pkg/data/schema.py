from dataclasses import dataclass
from typing import Dict, List, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from utils.errors import IngestError

Length = Union[int, Tuple[int, int]]
SYNTH_MODES = ("audio-informative", "video-informative", "both-redundant", "xor-crossmodal")


@dataclass(frozen=True)
class MultimodalSample:
    """One subject: audio [F, T_a] (feature x time), video [T_v, C] (time x feature), binary label."""

    id: str
    audio: np.ndarray
    video: np.ndarray
    label: int

    def __post_init__(self):
        for name in ("audio", "video"):
            values = getattr(self, name)
            if values.ndim != 2 or values.size == 0:
                raise IngestError(f"{name} features must be a non-empty matrix, got shape {values.shape}", self.id)
            if not np.all(np.isfinite(values)):
                raise IngestError(f"{name} features contain non-finite values", self.id)
        if self.label not in (0, 1):
            raise IngestError(f"label must be 0 or 1, got {self.label!r}", self.id)

    @property
    def audio_dim(self) -> int:
        return self.audio.shape[0]

    @property
    def video_dim(self) -> int:
        return self.video.shape[1]


class FeatureDims(BaseModel):
    audio: int = Field(..., ge=1, description="Acoustic feature dim F (rows of each audio file)")
    video: int = Field(..., ge=1, description="Visual feature dim C (columns of each video file)")


class SampleEntry(BaseModel):
    id: str = Field(..., min_length=1)
    audio: str = Field(..., description="Audio CSV path, relative to the manifest")
    video: str = Field(..., description="Video CSV path, relative to the manifest")
    label: Literal[0, 1]


class DatasetManifest(BaseModel):
    name: str
    feature_dims: FeatureDims
    samples: List[SampleEntry] = Field(default_factory=list)

    @field_validator("samples")
    @classmethod
    def _unique_ids(cls, samples):
        seen = set()
        for entry in samples:
            if entry.id in seen:
                raise ValueError(f"duplicate sample id {entry.id!r}")
            seen.add(entry.id)
        return samples


class SynthSpec(BaseModel):
    """Class-conditional Gaussian sequences for desk-scale experiments."""

    name: str = Field("synth", min_length=1)
    n_samples: int = Field(..., ge=1)
    audio_dim: int = Field(..., ge=1)
    video_dim: int = Field(..., ge=1)
    audio_length: Length = Field(..., description="T_a, fixed or an inclusive (low, high) range")
    video_length: Length = Field(..., description="T_v, fixed or an inclusive (low, high) range")
    mode: str = Field(..., description=f"One of: {', '.join(SYNTH_MODES)}; checked by generate_synthetic")
    separation: float = Field(..., ge=0, description="Mean shift in units of the noise std")
    seed: int = Field(0, ge=0, lt=2 ** 64)
    signal_fraction: float = Field(0.5, gt=0, le=1, description="Leading share of time steps carrying the shift")

    @model_validator(mode="after")
    def _lengths(self):
        for name in ("audio_length", "video_length"):
            value = getattr(self, name)
            low, high = (value, value) if isinstance(value, int) else value
            if low < 1 or high < low:
                raise ValueError(f"{name} must be >= 1 with low <= high, got {value}")
        return self


class FoldPlan(BaseModel):
    k: int = Field(..., ge=2)
    assignments: Dict[str, int] = Field(..., description="sample id -> fold index")

    def fold_ids(self, fold: int) -> List[str]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def folds(self) -> List[List[str]]:
        return [self.fold_ids(f) for f in range(self.k)]

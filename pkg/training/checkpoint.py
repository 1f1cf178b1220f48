"""
Binary checkpoint container.

Layout (little-endian):

    b"MMFF"  u32 version
    u32 metadata length, UTF-8 JSON metadata (config echo, training state)
    records until EOF: u32 name length, UTF-8 name, u32 rank, rank x u64 dims, f64 payload

Parameters are stored under their model names; Adam moments under
``optim.m/<name>`` and ``optim.v/<name>``.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, Union

import numpy as np

from models.mmfformer import MMFformer
from models.schema import ModelConfig
from utils.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"MMFF"
FORMAT_VERSION = 1
MOMENT_PREFIXES = ("optim.m/", "optim.v/")


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    parameters: Dict[str, np.ndarray]
    epoch: int = 0
    best_metric: float = 0.0
    optimizer_step: int = 0
    moments_m: Dict[str, np.ndarray] = field(default_factory=dict)
    moments_v: Dict[str, np.ndarray] = field(default_factory=dict)

    def model_config(self) -> ModelConfig:
        keys = set(ModelConfig.model_fields)
        return ModelConfig(**{k: v for k, v in self.config.items() if k in keys})

    def build_model(self) -> MMFformer:
        model = MMFformer(self.model_config())
        model.load_state_dict(self.parameters)
        return model


def _write_record(f: BinaryIO, name: str, values: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    values = np.ascontiguousarray(values, dtype="<f8")
    f.write(struct.pack("<I", len(encoded)))
    f.write(encoded)
    f.write(struct.pack("<I", values.ndim))
    f.write(struct.pack(f"<{values.ndim}Q", *values.shape))
    f.write(values.tobytes(order="C"))


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = json.dumps(
        {
            "config": checkpoint.config,
            "epoch": checkpoint.epoch,
            "best_metric": checkpoint.best_metric,
            "optimizer_step": checkpoint.optimizer_step,
        },
        sort_keys=True,
    ).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(metadata)))
        f.write(metadata)
        for name in sorted(checkpoint.parameters):
            _write_record(f, name, checkpoint.parameters[name])
        for prefix, moments in zip(MOMENT_PREFIXES, (checkpoint.moments_m, checkpoint.moments_v)):
            for name in sorted(moments):
                _write_record(f, prefix + name, moments[name])
    logger.debug("Wrote checkpoint %s (%d tensors)", path, len(checkpoint.parameters))
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint {self.path} is truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has unsupported checkpoint version {version}")
    try:
        metadata = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has unreadable metadata: {e}")

    parameters: Dict[str, np.ndarray] = {}
    moments = ({}, {})
    while not reader.exhausted:
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = struct.unpack(f"<{rank}Q", reader.take(8 * rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        for prefix, target in zip(MOMENT_PREFIXES, moments):
            if name.startswith(prefix):
                target[name[len(prefix):]] = values
                break
        else:
            parameters[name] = values

    return Checkpoint(
        config=metadata.get("config", {}),
        parameters=parameters,
        epoch=int(metadata.get("epoch", 0)),
        best_metric=float(metadata.get("best_metric", 0.0)),
        optimizer_step=int(metadata.get("optimizer_step", 0)),
        moments_m=moments[0],
        moments_v=moments[1],
    )

"""Binary checkpoint files exchanged between the cloud, edge, and device tiers.

Layout (little-endian):

    magic      4s   b"DCPR"
    version    u16
    kind       u8   1 = global, 2 = region, 3 = patch
    meta_len   u32  then meta_len bytes of UTF-8 JSON (ids, scalars, config)
    count      u32  then per tensor:
                      name_len u16, name, rank u8, rank x u32 dims,
                      prod(dims) x float32 values
    sha256     32s  over every preceding byte

Usage:
    save_checkpoint(model, "out/checkpoints/global.ckpt", config=cfg.model_dump())
    model = load_checkpoint("out/checkpoints/global.ckpt", expected_kind="global")
"""

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ..denoisers import BASE_PREFIX, GlobalModel, PatchModel, RegionModel
from ..errors import (
    CheckpointError,
    CheckpointFormatError,
    CheckpointHashError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)

MAGIC = b"DCPR"
FORMAT_VERSION = 1
HASH_SIZE = 32

KIND_TAGS = {"global": 1, "region": 2, "patch": 3}
KIND_NAMES = {tag: name for name, tag in KIND_TAGS.items()}

GLOBAL_FILE = "global.ckpt"

_HEADER = struct.Struct("<4sHB")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")
_VALUE = np.dtype("<f4")

Model = Union[GlobalModel, RegionModel, PatchModel]


@dataclass
class Checkpoint:
    """A decoded checkpoint file."""

    kind: str
    metadata: dict[str, Any]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def config(self) -> dict[str, Any]:
        return self.metadata.get("config", {})


class _Underflow(Exception):
    pass


class _Reader:
    def __init__(self, data: memoryview) -> None:
        self.data = data
        self.offset = 0

    def take(self, n: int) -> memoryview:
        if self.offset + n > len(self.data):
            raise _Underflow(f"need {n} bytes at offset {self.offset}, file has {len(self.data)}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset


def _model_metadata(model: Model) -> tuple[str, dict[str, Any]]:
    if isinstance(model, GlobalModel):
        return "global", _global_metadata(model)
    if isinstance(model, RegionModel):
        return "region", {
            "base": _global_metadata(model.base),
            "region_id": model.region_id,
            "poi_ids": list(model.poi_ids),
            "poi_categories": list(model.poi_categories),
            "poi_coords": [[float(lat), float(lon)] for lat, lon in model.poi_coords],
            "gamma_cat": float(model.gamma_cat),
            "spatial_clip_km": float(model.spatial_clip_km),
            "temporal_clip_h": float(model.temporal_clip_h),
            "dtype": model.dtype.name,
        }
    if isinstance(model, PatchModel):
        return "patch", {"user_id": model.user_id, "region_id": model.region_id, "dtype": model.dtype.name}
    raise CheckpointFormatError(f"cannot checkpoint a {type(model).__name__}")


def _global_metadata(m: GlobalModel) -> dict[str, Any]:
    return {
        "category_ids": list(m.category_ids),
        "lam": float(m.lam),
        "dropout": float(m.dropout),
        "dtype": m.dtype.name,
    }


def encode_checkpoint(model: Model, config: Optional[dict[str, Any]] = None) -> bytes:
    """Serialize ``model``; tensors are stored as float32."""
    kind, metadata = _model_metadata(model)
    metadata["config"] = config or {}
    meta_bytes = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")

    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, KIND_TAGS[kind]), _U32.pack(len(meta_bytes)), meta_bytes]
    tensors = model.tensors()
    parts.append(_U32.pack(len(tensors)))
    for name, value in tensors.items():
        name_bytes = name.encode("utf-8")
        parts.append(_U16.pack(len(name_bytes)))
        parts.append(name_bytes)
        parts.append(_U8.pack(value.ndim))
        parts.extend(_U32.pack(dim) for dim in value.shape)
        parts.append(np.ascontiguousarray(value, dtype=_VALUE).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: Model, path: Union[str, Path], config: Optional[dict[str, Any]] = None) -> Path:
    """Write ``model`` to ``path`` (atomically, via a temporary file)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(model, config))
    os.replace(tmp, path)
    return path


def _parse_body(body: memoryview) -> Checkpoint:
    reader = _Reader(body)
    _, version, tag = reader.unpack(_HEADER)
    (meta_len,) = reader.unpack(_U32)
    metadata = json.loads(bytes(reader.take(meta_len)).decode("utf-8"))
    (count,) = reader.unpack(_U32)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack(_U16)
        name = bytes(reader.take(name_len)).decode("utf-8")
        (rank,) = reader.unpack(_U8)
        dims = tuple(reader.unpack(_U32)[0] for _ in range(rank))
        size = int(np.prod(dims)) * _VALUE.itemsize
        tensors[name] = np.frombuffer(bytes(reader.take(size)), dtype=_VALUE).reshape(dims).astype(np.float32)
    if reader.remaining:
        raise CheckpointFormatError(f"{reader.remaining} unexpected trailing bytes before the hash")
    return Checkpoint(kind=KIND_NAMES[tag], metadata=metadata, tensors=tensors, version=version)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Validate and decode checkpoint bytes.

    Raises:
        CheckpointFormatError: Bad magic or unknown kind.
        CheckpointVersionError: Unsupported format version.
        CheckpointTruncatedError: The data ends before its declared structure.
        CheckpointHashError: The stored SHA-256 does not match.
    """
    if len(data) >= len(MAGIC) and data[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic bytes)")
    if len(data) < _HEADER.size + _U32.size + HASH_SIZE:
        raise CheckpointTruncatedError(f"file is only {len(data)} bytes long")
    _, version, tag = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"format version {version} is not supported (expected {FORMAT_VERSION})")
    if tag not in KIND_NAMES:
        raise CheckpointFormatError(f"unknown model kind tag {tag}")

    body = memoryview(data)[:-HASH_SIZE]
    if hashlib.sha256(body).digest() != bytes(data[-HASH_SIZE:]):
        try:
            _parse_body(body)
        except _Underflow as e:
            raise CheckpointTruncatedError(f"checkpoint is truncated: {e}") from None
        except (CheckpointError, ValueError):
            pass
        raise CheckpointHashError("content hash mismatch; the file is corrupted")
    try:
        return _parse_body(body)
    except _Underflow as e:
        raise CheckpointTruncatedError(f"checkpoint is truncated: {e}") from None
    except ValueError as e:
        raise CheckpointFormatError(f"malformed checkpoint: {e}") from None


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def _global_from(meta: dict[str, Any], tensors: dict[str, np.ndarray], prefix: str = "") -> GlobalModel:
    dtype = np.dtype(meta.get("dtype", "float32"))
    return GlobalModel(
        category_ids=[int(c) for c in meta["category_ids"]],
        lam=float(meta["lam"]),
        dropout=float(meta["dropout"]),
        **{name: tensors[prefix + name].astype(dtype) for name in GlobalModel.TENSORS},
    )


def model_from_checkpoint(ckpt: Checkpoint) -> Model:
    meta, tensors = ckpt.metadata, ckpt.tensors
    try:
        if ckpt.kind == "global":
            return _global_from(meta, tensors)
        dtype = np.dtype(meta.get("dtype", "float32"))
        if ckpt.kind == "region":
            return RegionModel(
                base=_global_from(meta["base"], tensors, BASE_PREFIX),
                region_id=int(meta["region_id"]),
                poi_ids=[int(p) for p in meta["poi_ids"]],
                poi_categories=[int(c) for c in meta["poi_categories"]],
                poi_coords=np.array(meta["poi_coords"], dtype=np.float64).reshape(-1, 2),
                gamma_cat=float(meta["gamma_cat"]),
                spatial_clip_km=float(meta["spatial_clip_km"]),
                temporal_clip_h=float(meta["temporal_clip_h"]),
                **{name: tensors[name].astype(dtype) for name in RegionModel.TRAINABLE},
            )
        return PatchModel(
            user_id=int(meta["user_id"]),
            region_id=int(meta["region_id"]),
            **{name: tensors[name].astype(dtype) for name in PatchModel.TENSORS},
        )
    except KeyError as e:
        raise CheckpointFormatError(f"{ckpt.kind} checkpoint lacks {e.args[0]!r}") from None


def load_checkpoint(path: Union[str, Path], expected_kind: Optional[str] = None) -> Model:
    """Read a checkpoint file back into its model.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        CheckpointFormatError: Also when the kind differs from ``expected_kind``.
    """
    ckpt = read_checkpoint(path)
    if expected_kind is not None and ckpt.kind != expected_kind:
        raise CheckpointFormatError(f"{path} holds a {ckpt.kind} model, expected {expected_kind}")
    return model_from_checkpoint(ckpt)


def region_file(region_id: int) -> str:
    return f"region_{region_id}.ckpt"


def patch_file(job_id: str) -> str:
    return f"patch_{job_id}.ckpt"

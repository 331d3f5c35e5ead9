"""Embedding-set storage, subsampling and moment summaries.

All workload data enters the descriptor kernels through this module.  Sets
are stored on disk as ``.fsemb`` files: a fixed binary header followed by the
row-major float32 payload, with a ``.fsemb.json`` sidecar duplicating the
human-relevant manifest fields.

File layout (little-endian):

    magic   8 bytes  b"FSEMB\\0\\0\\0"
    version u32      currently 1
    count   u64      number of rows
    dim     u32      embedding dimension
    dtype   u8       1 = float32
    payload count * dim * 4 bytes of float32, row-major
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    IoFailure,
    MissingFile,
    NonFiniteValue,
    SizeExceedsPopulation,
    TruncatedPayload,
)
from .seeding import rng_for

MAGIC = b"FSEMB\x00\x00\x00"
VERSION = 1
_DTYPE_CODES = {"f32": 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_HEADER = struct.Struct("<8sIQIB")

# Epoch placeholder keeps artifact bytes reproducible; callers that want real
# wall-clock provenance set created_at explicitly.
EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"

DEFAULT_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class Manifest:
    count: int
    dim: int
    dtype: str = "f32"
    pooling: str = "unspecified"
    source_id: str = ""
    created_at: str = EPOCH_TIMESTAMP

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.dtype not in _DTYPE_CODES:
            raise ValueError(f"unrecognized dtype code {self.dtype!r}")

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "dim": self.dim,
            "dtype": self.dtype,
            "pooling": self.pooling,
            "source_id": self.source_id,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class EmbeddingSet:
    """An n x D matrix of pooled representation vectors plus its manifest.

    Immutable after construction; safe for concurrent reads.
    """

    data: np.ndarray
    manifest: Manifest = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError("data must be a 2-D matrix")
        n, dim = data.shape
        if n < 1 or dim < 1:
            raise ValueError("need at least one row and one column")
        # One cheap reduction screens for NaN/Inf; only on failure is the
        # full scan run to locate the offending cell.
        if not np.isfinite(data.min() + data.max()):
            bad = np.argwhere(~np.isfinite(data))
            raise NonFiniteValue(int(bad[0, 0]), int(bad[0, 1]))
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        manifest = self.manifest
        if manifest is None:
            manifest = Manifest(count=n, dim=dim)
            object.__setattr__(self, "manifest", manifest)
        if manifest.count != n or manifest.dim != dim:
            raise ValueError(
                f"manifest says {manifest.count}x{manifest.dim}, data is {n}x{dim}"
            )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MomentSummary:
    """Element-wise mean and floored population variance of one set."""

    mean: np.ndarray
    var: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.var, dtype=np.float64)
        if mean.ndim != 1 or var.shape != mean.shape:
            raise ValueError("mean/var must be equal-length vectors")
        if self.count < 1:
            raise ValueError("count must be positive")
        if np.any(var <= 0):
            raise ValueError("variances must be positive (floor applied at construction)")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def save_embedding_set(es: EmbeddingSet, path: str | os.PathLike) -> None:
    """Write the binary file plus its JSON sidecar, atomically.

    ``load_embedding_set(save path)`` reproduces the payload bit-exactly.
    """
    path = os.fspath(path)
    header = _HEADER.pack(MAGIC, VERSION, es.n, es.dim, _DTYPE_CODES[es.manifest.dtype])
    payload = es.data.astype("<f4", copy=False).tobytes(order="C")
    sidecar = json.dumps(es.manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    try:
        _atomic_write(path, header + payload)
        _atomic_write(path + ".json", sidecar.encode("utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_embedding_set(path: str | os.PathLike) -> EmbeddingSet:
    """Read a ``.fsemb`` file, verifying header, length, and finiteness."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise BadMagic(f"{path}: file shorter than header")
    magic, version, count, dim, code = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise BadMagic(f"{path}: unknown dtype code {code}")
    expected = count * dim * 4
    got = len(raw) - _HEADER.size
    if got != expected:
        raise TruncatedPayload(f"{path}: payload {got} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    manifest = _read_sidecar(path, count, dim, _CODE_DTYPES[code])
    return EmbeddingSet(data=data, manifest=manifest)


def _read_sidecar(path: str, count: int, dim: int, dtype: str) -> Manifest:
    sidecar_path = path + ".json"
    fields = {}
    if os.path.isfile(sidecar_path):
        try:
            with open(sidecar_path, "r", encoding="utf-8") as fh:
                fields = json.load(fh)
        except (OSError, json.JSONDecodeError):
            fields = {}
    return Manifest(
        count=count,
        dim=dim,
        dtype=dtype,
        pooling=fields.get("pooling", "unspecified"),
        source_id=fields.get("source_id", ""),
        created_at=fields.get("created_at", EPOCH_TIMESTAMP),
    )


def _atomic_write(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def moments(es: EmbeddingSet, variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> MomentSummary:
    """Element-wise mean and population variance (divide by n), floored.

    The floor guards downstream whitening against zero-variance coordinates.
    """
    if variance_floor <= 0:
        raise ValueError("variance_floor must be positive")
    x = es.data.astype(np.float64)
    mean = x.mean(axis=0)
    var = np.maximum(x.var(axis=0), variance_floor)
    return MomentSummary(mean=mean, var=var, count=es.n)


def subsample(es: EmbeddingSet, size: int, seed: int) -> EmbeddingSet:
    """Draw ``size`` rows without replacement, deterministically per seed."""
    if not 1 <= size <= es.n:
        raise SizeExceedsPopulation(f"requested {size} rows from a set of {es.n}")
    idx = rng_for(seed).choice(es.n, size=size, replace=False)
    manifest = replace(es.manifest, count=size)
    return EmbeddingSet(data=es.data[idx], manifest=manifest)


def check_same_dim(a_dim: int, b_dim: int, what: str) -> None:
    if a_dim != b_dim:
        raise DimensionMismatch(f"{what}: {a_dim} vs {b_dim}")

"""Feature and latent volumes: the N x H x W x d token grids everything else consumes.

A volume stores one d-dimensional token per spatial location per frame, in
float32, row-major (frame, row, col, channel). Volumes are immutable value
objects: the wrapped array is marked read-only at construction so they can be
shared freely across threads.

File format ("COVF", version 1), all little-endian:

    magic   4 bytes  b"COVF"
    version u32      1
    N,H,W,d u32 each
    payload N*H*W*d float32 values, (frame, row, col, channel) row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataError, ParameterError

VOLUME_MAGIC = b"COVF"
VOLUME_VERSION = 1
_HEADER = struct.Struct("<4s5I")


class TokenCoord(NamedTuple):
    """Location of one token: frame index, row, column."""

    frame: int
    row: int
    col: int


def _as_token_grid(data: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 4:
        raise ParameterError(f"{what} must be 4-D (frames, rows, cols, channels), got shape {arr.shape}")
    if arr.dtype != np.float32:
        raise ParameterError(f"{what} must be float32, got {arr.dtype}")
    if any(s < 1 for s in arr.shape):
        raise ParameterError(f"{what} dimensions must all be >= 1, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise DataError(f"{what} contains a non-finite value at flat index {bad}")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FeatureVolume:
    """Immutable N x H x W x d float32 token volume.

    Attributes:
        data: token array, shape (frames, height, width, dim), read-only.
        normalized: True once every token has been scaled to unit L2 norm
            (zero tokens excepted; they stay zero).
        zero_tokens: coordinates of tokens whose norm was zero when the
            volume was normalized. Empty for unnormalized volumes.
    """

    data: np.ndarray
    normalized: bool = False
    zero_tokens: tuple[TokenCoord, ...] = field(default=())

    def __post_init__(self) -> None:
        arr = _as_token_grid(self.data, "feature volume")
        object.__setattr__(self, "data", arr)
        if self.normalized:
            norms = np.linalg.norm(arr, axis=-1)
            off = np.abs(norms - 1.0) > 1e-5
            bad = off & (norms != 0.0)
            if bad.any():
                where = tuple(int(v) for v in np.argwhere(bad)[0])
                raise DataError(f"volume flagged normalized but token {where} has norm {norms[bad][0]!r}")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return self.data.shape[3]

    def token(self, coord: TokenCoord) -> np.ndarray:
        """Return the d-vector at ``coord`` (a read-only view)."""
        return self.data[coord.frame, coord.row, coord.col]


@dataclass(frozen=True)
class LatentVolume:
    """Token volume gathered and rewritten by attention; not unit-normalized.

    Same layout as :class:`FeatureVolume`; ``timestep`` is an opaque integer
    label carried through untouched.
    """

    data: np.ndarray
    timestep: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _as_token_grid(self.data, "latent volume"))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return self.data.shape[3]


def normalize(volume: FeatureVolume) -> FeatureVolume:
    """Scale every token to unit L2 norm, in float32 arithmetic.

    Tokens whose float32 norm is exactly zero (including tokens whose squared
    entries underflow to zero) are set to all-zeros and reported in the
    returned volume's ``zero_tokens`` instead of producing NaNs.

    Raises:
        ParameterError: if ``volume`` is already normalized.
    """
    if volume.normalized:
        raise ParameterError("volume is already normalized")
    data = volume.data
    norms = np.sqrt(np.sum(data * data, axis=-1, dtype=np.float32))
    zero = norms == np.float32(0.0)
    safe = np.where(zero, np.float32(1.0), norms)
    out = data / safe[..., None]
    if zero.any():
        out[zero] = 0.0
    report = tuple(TokenCoord(int(f), int(r), int(c)) for f, r, c in np.argwhere(zero))
    return FeatureVolume(out, normalized=True, zero_tokens=report)


def feature_volume_bytes(volume: FeatureVolume | LatentVolume) -> bytes:
    """The COVF serialization of a volume (bit-exact float32 payload)."""
    n, h, w, d = volume.data.shape
    header = _HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, n, h, w, d)
    return header + np.ascontiguousarray(volume.data, dtype="<f4").tobytes()


def save_feature_volume(path: str | Path, volume: FeatureVolume | LatentVolume) -> None:
    """Write a volume in the COVF format."""
    Path(path).write_bytes(feature_volume_bytes(volume))


def load_feature_volume(path: str | Path) -> FeatureVolume:
    """Read a COVF file into an (unnormalized) :class:`FeatureVolume`.

    Raises:
        DataError: on a malformed header, a payload whose length does not
            match the header, or any non-finite value (the message carries
            the flat index of the first offender).
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: file too short for a COVF header ({len(raw)} bytes)")
    magic, version, n, h, w, d = _HEADER.unpack_from(raw)
    if magic != VOLUME_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {VOLUME_MAGIC!r}")
    if version != VOLUME_VERSION:
        raise DataError(f"{path}: unsupported COVF version {version}")
    if min(n, h, w, d) < 1:
        raise DataError(f"{path}: header dimensions must be >= 1, got {(n, h, w, d)}")
    expected = n * h * w * d * 4
    actual = len(raw) - _HEADER.size
    if actual != expected:
        raise DataError(
            f"{path}: payload length mismatch, header implies {expected} bytes "
            f"({n * h * w * d} floats) but file carries {actual}"
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if not np.isfinite(flat).all():
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise DataError(f"{path}: non-finite value at flat index {bad}")
    data = flat.reshape(n, h, w, d)
    return FeatureVolume(data, normalized=False)


def load_latent_volume(path: str | Path, timestep: int = 0) -> LatentVolume:
    """Read a COVF file as a :class:`LatentVolume` (same bytes, no norm claim)."""
    return LatentVolume(load_feature_volume(path).data, timestep=timestep)

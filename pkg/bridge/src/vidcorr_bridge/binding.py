"""Boundary layer handing caller-owned float32 buffers to the vidcorr engine.

The host pipeline keeps ownership of its arrays. A C-contiguous float32
buffer is wrapped zero-copy behind a fresh read-only view; anything
non-contiguous is copied once, announced through :class:`ContiguityWarning`.
No call here ever writes to caller memory or flips caller array flags, and
every returned array is freshly allocated and writable.

Dtype is strict: the engine computes in float32, so a float64 (or other)
buffer is rejected at the boundary rather than silently cast. Validation
failures of the buffer itself raise :class:`BridgeBoundaryError`; anything
the engine rejects (bad ratio, bad window, non-finite values) propagates as
the engine's own exception with its message intact.

Both entry points are safe to call concurrently from host threads: inputs
are frozen before compute, and the heavy kernels run inside numpy, outside
the interpreter lock.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from vidcorr import (
    CorrespondenceMap,
    FeatureVolume,
    LatentVolume,
    apply_frame_attention,
    normalize,
    trace_trajectories,
)

_I32_MAX = np.iinfo(np.int32).max


class BridgeBoundaryError(TypeError):
    """A caller-provided buffer failed validation at the binding boundary."""


class ContiguityWarning(UserWarning):
    """A non-contiguous input buffer had to be copied before compute."""


@dataclass(frozen=True)
class ArrayView:
    """A validated, read-only window onto an (N, H, W, d) float32 buffer.

    ``data`` aliases the caller's memory when that memory was already
    C-contiguous (``copied`` is False); otherwise it is a private contiguous
    copy. Either way ``data`` is marked read-only, leaving the caller's own
    array flags untouched.
    """

    data: np.ndarray
    copied: bool

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def as_array_view(buffer, what: str = "buffer") -> ArrayView:
    """Validate and wrap a host buffer without taking ownership of it."""
    arr = np.asarray(buffer)
    if arr.dtype != np.float32:
        raise BridgeBoundaryError(f"{what} must be float32, got {arr.dtype}")
    if arr.ndim != 4:
        raise BridgeBoundaryError(
            f"{what} must be 4-D (frames, rows, cols, channels), got shape {arr.shape}"
        )
    copied = not arr.flags.c_contiguous
    if copied:
        warnings.warn(
            f"{what} is not C-contiguous; the engine receives a copy",
            ContiguityWarning,
            stacklevel=3,
        )
        arr = np.ascontiguousarray(arr)
    else:
        # A fresh view lets us freeze our handle while the caller's array
        # object keeps its writeable flag.
        arr = arr.view()
    arr.flags.writeable = False
    return ArrayView(arr, copied)


def bridge_trace(buffer, k: int, window: int | None) -> np.ndarray:
    """Chained top-``k`` correspondences for a raw (N, H, W, d) f32 buffer.

    The buffer is treated as raw features and unit-normalized per token
    before matching — the same preparation the ``corr`` command applies to a
    loaded file — so the returned coordinates are interchangeable with
    natively produced maps for the same input bytes. ``window`` is the
    square search-window edge length, or None for a full-frame search.

    Returns a fresh writable int32 array of shape (N, H, W, N, K, 2) whose
    own-frame rows carry the anchor coordinate itself.
    """
    view = as_array_view(buffer, what="feature buffer")
    volume = normalize(FeatureVolume(view.data))
    cmap = trace_trajectories(volume, k, window=window)
    return cmap.coords.copy()


def bridge_attend(latent, correspondence, ratio: float = 0.5, d_k: int | None = None) -> np.ndarray:
    """Correspondence-guided attention over a raw (N, H, W, d) f32 latent.

    ``correspondence`` is an integer (N, H, W, N, K, 2) coordinate array as
    produced by :func:`bridge_trace` (or parsed from a stored map); it is
    fully validated before use. The result is a freshly allocated float32
    array of the latent's shape; neither input is written to.
    """
    view = as_array_view(latent, what="latent buffer")
    coords = np.asarray(correspondence)
    if not np.issubdtype(coords.dtype, np.integer):
        raise BridgeBoundaryError(
            f"correspondence array must be integer-typed, got {coords.dtype}"
        )
    if coords.ndim != 6 or coords.shape[5] != 2:
        raise BridgeBoundaryError(
            f"correspondence array must have shape (N, H, W, N, K, 2), got {coords.shape}"
        )
    if coords.size and (int(coords.min()) < 0 or int(coords.max()) > _I32_MAX):
        raise BridgeBoundaryError("correspondence coordinates out of int32 range")
    cmap = CorrespondenceMap(coords.astype(np.int32), k=coords.shape[4], window=None)
    cmap.validate()
    result = apply_frame_attention(LatentVolume(view.data), cmap, ratio=ratio, d_k=d_k)
    return result.data.copy()

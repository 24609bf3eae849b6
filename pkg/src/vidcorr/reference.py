"""Scalar-loop reference tracer.

An independent re-implementation of the chained matcher built from literal
nested loops over tokens, channels, and window cells — no vectorized
similarity blocks, no shared precomputation. It exists to cross-check the
production tracer: both must produce identical coordinates, rank for rank.

The loops are compiled with numba (cached to disk) so exhaustive comparisons
over many random volumes stay affordable, but the code is written exactly as
the naive algorithm reads: for each anchor, walk the frames one hop at a
time, score every candidate token against the current query token by an
explicit channel loop, and keep the K best with an insertion scan. Scores
accumulate in float64 over the float32 inputs, matching the production path,
and ties keep the earlier candidate in row-major window order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .correspondence import CorrespondenceMap
from .errors import ParameterError
from .volume import FeatureVolume


@njit(cache=True)
def _chase_all(data, k, length):  # pragma: no cover - exercised via wrapper
    n, h, w, d = data.shape
    wr = min(length, h)
    wc = min(length, w)
    half = (length - 1) // 2
    out = np.empty((n, h, w, n, k, 2), dtype=np.int32)
    best_s = np.empty(k, dtype=np.float64)
    best_f = np.empty(k, dtype=np.int64)
    for i in range(n):
        for ar in range(h):
            for ac in range(w):
                for kk in range(k):
                    out[i, ar, ac, i, kk, 0] = ar
                    out[i, ar, ac, i, kk, 1] = ac
                for direction in range(2):
                    cr, cc = ar, ac
                    hops = (n - 1 - i) if direction == 0 else i
                    for step in range(hops):
                        if direction == 0:
                            j = i + 1 + step
                            qf = j - 1
                        else:
                            j = i - 1 - step
                            qf = j + 1
                        r0 = cr - half
                        if r0 < 0:
                            r0 = 0
                        if r0 > h - wr:
                            r0 = h - wr
                        c0 = cc - half
                        if c0 < 0:
                            c0 = 0
                        if c0 > w - wc:
                            c0 = w - wc
                        for kk in range(k):
                            best_s[kk] = -np.inf
                            best_f[kk] = -1
                        for rr in range(wr):
                            for xx in range(wc):
                                s = 0.0
                                for ch in range(d):
                                    s += np.float64(data[qf, cr, cc, ch]) * np.float64(
                                        data[j, r0 + rr, c0 + xx, ch]
                                    )
                                pos = -1
                                for p in range(k):
                                    if s > best_s[p]:
                                        pos = p
                                        break
                                if pos >= 0:
                                    for p in range(k - 1, pos, -1):
                                        best_s[p] = best_s[p - 1]
                                        best_f[p] = best_f[p - 1]
                                    best_s[pos] = s
                                    best_f[pos] = rr * wc + xx
                        for kk in range(k):
                            out[i, ar, ac, j, kk, 0] = r0 + best_f[kk] // wc
                            out[i, ar, ac, j, kk, 1] = c0 + best_f[kk] % wc
                        cr = r0 + best_f[0] // wc
                        cc = c0 + best_f[0] % wc
    return out


def _reference_map(volume: FeatureVolume, k: int, window: int | None) -> CorrespondenceMap:
    if not volume.normalized:
        raise ParameterError("volume must be normalized before tracing")
    n, h, w = volume.frames, volume.height, volume.width
    if n < 2:
        raise ParameterError(f"need at least 2 frames to trace, got {n}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if window is not None and window < 1:
        raise ParameterError(f"window length must be >= 1 or None for full, got {window}")
    length = max(h, w) if window is None else window
    if k > min(length, h) * min(length, w):
        raise ParameterError(f"k={k} exceeds the candidate count of the search window")
    coords = _chase_all(volume.data, k, length)
    return CorrespondenceMap(coords, k=k, window=window)


def full_reference_trajectories(volume: FeatureVolume, k: int) -> CorrespondenceMap:
    """Chained top-K tracing with an unrestricted search window, by brute force.

    Semantics match ``trace_trajectories(volume, k, window=None)``; the
    implementation shares nothing with it beyond the output type.
    """
    return _reference_map(volume, k, None)


def windowed_reference_trajectories(volume: FeatureVolume, k: int, window: int) -> CorrespondenceMap:
    """Brute-force twin of ``trace_trajectories`` for a finite window length."""
    if window is None:
        raise ParameterError("window must be an integer here; use full_reference_trajectories")
    return _reference_map(volume, k, window)

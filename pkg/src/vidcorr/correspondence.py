"""Token correspondence across frames: similarity blocks, windowed search, chained tracing.

The tracer turns a normalized feature volume into a :class:`CorrespondenceMap`
holding, for every anchor token, the top-K most similar token coordinates in
every other frame. Matching is chained frame by frame: the anchor's best match
in the adjacent frame becomes the query for the frame after it, so a token is
followed along its trajectory instead of being compared against distant frames
directly. With a window length ``l`` the candidates for each query are the
``l x l`` neighborhood around the query's position in the adjacent frame.

Score bookkeeping: all similarities are accumulated in float64 on the float32
token data (float32 products are exact in float64), which keeps top-K
selection stable between this vectorized engine and the scalar reference
implementation. Ties are broken toward the smaller row-major coordinate.

Map file format ("COVC", version 1), all little-endian:

    magic     4 bytes  b"COVC"
    version   u32      1
    N,H,W,K,l u32 each (l = 0 encodes full-frame search)
    payload   for each anchor (frame, row, col) row-major,
              for each other frame j != anchor frame, ascending,
              K pairs of u16 (row, col), best match first
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .volume import FeatureVolume

MAP_MAGIC = b"COVC"
MAP_VERSION = 1
_MAP_HEADER = struct.Struct("<4s6I")

# Upper bound on the scratch buffer used when gathering window candidates.
_CHUNK_BYTES = 64 << 20


@dataclass(frozen=True)
class SimilarityBlock:
    """Similarities between the tokens of one adjacent frame pair.

    ``entries[qr, qc]`` holds the similarity grid seen by the query token at
    (qr, qc): the full target frame (``origins is None``) or its window in the
    target frame, whose top-left corner is ``origins[qr, qc]``.
    """

    frame: int
    entries: np.ndarray
    origins: np.ndarray | None = None


@dataclass
class TraceStats:
    """Instrumentation filled in by :func:`trace_trajectories`.

    ``mul_add_count`` counts similarity arithmetic only (one multiply plus one
    add per channel per scored candidate); top-K selection is excluded.
    ``peak_candidates`` is the largest candidate set any single query scored.
    """

    mul_add_count: int = 0
    peak_candidates: int = 0


@dataclass(frozen=True)
class CorrespondenceMap:
    """Top-K correspondent coordinates for every anchor token in every frame.

    ``coords[i, h, w, j, k]`` is the (row, col) of the rank-k match in frame
    ``j`` for the anchor at (i, h, w); the anchor's own frame row ``j == i``
    is filled with the anchor coordinate itself.
    """

    coords: np.ndarray  # (N, H, W, N, K, 2) int32
    k: int
    window: int | None  # None = full-frame search

    def __post_init__(self) -> None:
        arr = np.asarray(self.coords)
        if arr.ndim != 6 or arr.shape[3] != arr.shape[0] or arr.shape[5] != 2:
            raise ParameterError(f"coords must have shape (N,H,W,N,K,2), got {arr.shape}")
        if arr.shape[4] != self.k:
            raise ParameterError(f"coords K axis {arr.shape[4]} does not match k={self.k}")
        arr = np.ascontiguousarray(arr, dtype=np.int32)
        arr.flags.writeable = False
        object.__setattr__(self, "coords", arr)

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def height(self) -> int:
        return self.coords.shape[1]

    @property
    def width(self) -> int:
        return self.coords.shape[2]

    def matches(self, anchor) -> np.ndarray:
        """All stored coordinates for one anchor: shape (N, K, 2)."""
        return self.coords[anchor.frame, anchor.row, anchor.col]

    def validate(self) -> None:
        """Check in-bounds coordinates, per-frame distinctness, own-frame fill."""
        n, h, w = self.frames, self.height, self.width
        rows = self.coords[..., 0]
        cols = self.coords[..., 1]
        if rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w:
            raise DataError("correspondence map holds out-of-bounds coordinates")
        flat = rows.astype(np.int64) * w + cols
        for i in range(n):
            own = flat[i, :, :, i, :]
            anchor_flat = (np.arange(h)[:, None] * w + np.arange(w)[None, :])[..., None]
            if not np.array_equal(own, np.broadcast_to(anchor_flat, own.shape)):
                raise DataError(f"own-frame rows of frame {i} are not the anchor coordinates")
            others = np.delete(flat[i], i, axis=2)
            if self.k > 1:
                sorted_k = np.sort(others, axis=-1)
                if (np.diff(sorted_k, axis=-1) == 0).any():
                    raise DataError(f"duplicate coordinates among the top-K of an anchor in frame {i}")

    def to_bytes(self) -> bytes:
        n, h, w = self.frames, self.height, self.width
        if h > 0xFFFF or w > 0xFFFF:
            raise DataError("frame extent exceeds the u16 coordinate range of the map format")
        header = _MAP_HEADER.pack(MAP_MAGIC, MAP_VERSION, n, h, w, self.k, self.window or 0)
        keep = [self.coords[i][:, :, [j for j in range(n) if j != i]] for i in range(n)]
        payload = np.stack(keep, axis=0).astype("<u2").tobytes()
        return header + payload

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "<bytes>") -> "CorrespondenceMap":
        if len(raw) < _MAP_HEADER.size:
            raise DataError(f"{source}: too short for a COVC header ({len(raw)} bytes)")
        magic, version, n, h, w, k, window = _MAP_HEADER.unpack_from(raw)
        if magic != MAP_MAGIC:
            raise DataError(f"{source}: bad magic {magic!r}, expected {MAP_MAGIC!r}")
        if version != MAP_VERSION:
            raise DataError(f"{source}: unsupported COVC version {version}")
        if min(n, h, w, k) < 1:
            raise DataError(f"{source}: header fields must be >= 1, got {(n, h, w, k)}")
        expected = n * h * w * (n - 1) * k * 2 * 2
        actual = len(raw) - _MAP_HEADER.size
        if actual != expected:
            raise DataError(f"{source}: payload length mismatch, expected {expected} bytes, got {actual}")
        stored = np.frombuffer(raw, dtype="<u2", offset=_MAP_HEADER.size)
        stored = stored.reshape(n, h, w, n - 1, k, 2).astype(np.int32)
        coords = np.empty((n, h, w, n, k, 2), dtype=np.int32)
        for i in range(n):
            others = [j for j in range(n) if j != i]
            coords[i][:, :, others] = stored[i]
            coords[i, :, :, i, :, 0] = np.arange(h)[:, None, None]
            coords[i, :, :, i, :, 1] = np.arange(w)[None, :, None]
        return cls(coords, k=k, window=window or None)

    @classmethod
    def load(cls, path: str | Path) -> "CorrespondenceMap":
        return cls.from_bytes(Path(path).read_bytes(), source=str(path))


def _require_normalized(volume: FeatureVolume) -> None:
    if not volume.normalized:
        raise ParameterError("volume must be normalized before computing similarities")


def _axis_window(center: int, length: int, extent: int) -> tuple[int, int]:
    """Clamp-with-shift placement of a window along one axis: (origin, size)."""
    size = min(length, extent)
    lo = center - (length - 1) // 2
    return min(max(lo, 0), extent - size), size


def window_crop(
    volume: FeatureVolume, frame: int, center: tuple[int, int], length: int
) -> tuple[np.ndarray, tuple[int, int]]:
    """Tokens of ``frame`` inside the length-``length`` window centered at ``center``.

    The nominal window reaches floor((length-1)/2) up/left and floor(length/2)
    down/right of the center; when it would cross the frame edge it is shifted
    inward so its size stays min(length, H) x min(length, W). Returns a
    read-only view plus the window's (row, col) origin in the frame.
    """
    if length < 1:
        raise ParameterError(f"window length must be >= 1, got {length}")
    n, h, w = volume.frames, volume.height, volume.width
    if not 0 <= frame < n:
        raise ParameterError(f"frame {frame} out of range for {n} frames")
    cr, cc = center
    if not (0 <= cr < h and 0 <= cc < w):
        raise ParameterError(f"center {center} out of bounds for {h}x{w} frames")
    r0, rs = _axis_window(cr, length, h)
    c0, cs = _axis_window(cc, length, w)
    return volume.data[frame, r0 : r0 + rs, c0 : c0 + cs], (r0, c0)


def top_k_argmax(scores: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Coordinates of the ``min(k, scores.size)`` largest entries, descending.

    Ties are resolved toward the smaller row-major flat index.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    grid = np.asarray(scores, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise ParameterError(f"scores must be a nonempty 2-D grid, got shape {grid.shape}")
    order = np.argsort(-grid.ravel(), kind="stable")[: min(k, grid.size)]
    width = grid.shape[1]
    return [(int(i) // width, int(i) % width) for i in order]


def similarity_full(volume: FeatureVolume, max_tokens: int = 16384) -> np.ndarray:
    """All-pairs cosine similarity matrix over every token of every frame.

    Quadratic in the total token count; intended as an oracle for small
    volumes, hence the ``max_tokens`` guard.
    """
    _require_normalized(volume)
    total = volume.frames * volume.height * volume.width
    if total > max_tokens:
        raise ParameterError(
            f"volume holds {total} tokens, above the {max_tokens} cap; "
            "the all-pairs matrix is meant for oracle-scale volumes only"
        )
    flat = volume.data.reshape(total, volume.dim).astype(np.float64)
    return flat @ flat.T


def similarity_adjacent(volume: FeatureVolume, frame: int, reverse: bool = False) -> SimilarityBlock:
    """Full H x W x H x W similarity block between ``frame`` and ``frame + 1``.

    With ``reverse=True`` the queries come from frame+1 and the candidate axes
    cover ``frame`` (the block the backward chaining pass scores).
    """
    _require_normalized(volume)
    if not 0 <= frame < volume.frames - 1:
        raise ParameterError(f"frame {frame} out of range for {volume.frames - 1} adjacent pairs")
    a = volume.data[frame].astype(np.float64)
    b = volume.data[frame + 1].astype(np.float64)
    if reverse:
        a, b = b, a
    entries = np.einsum("hwd,xyd->hwxy", a, b)
    return SimilarityBlock(frame=frame, entries=entries)


def _full_block(queries: np.ndarray, candidates: np.ndarray) -> tuple[np.ndarray, int]:
    """Similarities of every query token against every candidate token."""
    h, w, d = queries.shape
    q = queries.astype(np.float64)
    c = candidates.astype(np.float64)
    entries = np.empty((h, w) + candidates.shape[:2], dtype=np.float64)
    rows_per_chunk = max(1, _CHUNK_BYTES // (w * c.shape[0] * c.shape[1] * 8))
    for r0 in range(0, h, rows_per_chunk):
        r1 = min(r0 + rows_per_chunk, h)
        entries[r0:r1] = np.einsum("hwd,xyd->hwxy", q[r0:r1], c)
    ops = 2 * d * h * w * c.shape[0] * c.shape[1]
    return entries, ops


def _window_block(
    queries: np.ndarray, candidates: np.ndarray, length: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Similarities of every query token against its window in the candidate frame.

    Returns (sims (H, W, wr, wc) float64, origins (H, W, 2) int32, op count).
    """
    h, w, d = queries.shape
    ch, cw = candidates.shape[:2]
    wr, wc = min(length, ch), min(length, cw)
    half = (length - 1) // 2
    r0 = np.clip(np.arange(h) - half, 0, ch - wr)
    c0 = np.clip(np.arange(w) - half, 0, cw - wc)
    rows = r0[:, None] + np.arange(wr)[None, :]  # (H, wr)
    cols = c0[:, None] + np.arange(wc)[None, :]  # (W, wc)
    q = queries.astype(np.float64)
    cand = candidates.astype(np.float64)
    sims = np.empty((h, w, wr, wc), dtype=np.float64)
    rows_per_chunk = max(1, _CHUNK_BYTES // (w * wr * wc * d * 8))
    for h0 in range(0, h, rows_per_chunk):
        h1 = min(h0 + rows_per_chunk, h)
        gathered = cand[rows[h0:h1][:, None, :, None], cols[None, :, None, :]]
        sims[h0:h1] = np.einsum("hwd,hwrcd->hwrc", q[h0:h1], gathered)
    origins = np.empty((h, w, 2), dtype=np.int32)
    origins[..., 0] = r0[:, None]
    origins[..., 1] = c0[None, :]
    ops = 2 * d * h * w * wr * wc
    return sims, origins, ops


def _topk_rows(scores: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k flat indices of (A, C) scores, stable tie-break."""
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


def trace_trajectories(
    volume: FeatureVolume,
    k: int,
    window: int | None = 9,
    threads: int | None = None,
    stats: TraceStats | None = None,
) -> CorrespondenceMap:
    """Chain windowed top-K matching across frames for every anchor token.

    For each anchor (i, h, w) the adjacent frame i+1 is scored within the
    window around (h, w) (the whole frame when ``window`` is None), the top-K
    coordinates are recorded, and the best match becomes the query token and
    window center for frame i+2, and so on to the last frame. The pass toward
    frame 0 mirrors this. Similarity blocks are computed once per adjacent
    frame pair and shared by every chain that crosses the pair, so the work is
    (N-1)*H*W*l^2*d multiply-adds per direction; when the window covers the
    whole frame a single full block per pair serves both directions.

    Args:
        volume: normalized feature volume.
        k: matches to record per (anchor, frame); must fit in the candidate
            window.
        window: window length, or None for full-frame search.
        threads: worker threads for block computation and chaining (default:
            all cores). Output is identical for any thread count.
        stats: optional TraceStats to fill with op counts.

    Returns:
        A CorrespondenceMap with requested ``window`` recorded (None = full).
    """
    _require_normalized(volume)
    n, h, w, d = volume.data.shape
    if n < 2:
        raise ParameterError(f"need at least 2 frames to trace, got {n}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if window is not None and window < 1:
        raise ParameterError(f"window length must be >= 1 or None for full, got {window}")
    if threads is not None and threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")

    full_mode = window is None or (window >= h and window >= w)
    if full_mode:
        candidate_count = h * w
    else:
        candidate_count = min(window, h) * min(window, w)
    if k > candidate_count:
        raise ParameterError(
            f"k={k} exceeds the {candidate_count} candidates a window of length "
            f"{'full' if full_mode else window} offers on {h}x{w} frames"
        )

    data = volume.data
    if full_mode:
        tasks = [(p, True) for p in range(n - 1)]
    else:
        tasks = [(p, True) for p in range(n - 1)] + [(p, False) for p in range(n - 1)]

    def build(task: tuple[int, bool]):
        p, forward = task
        if full_mode:
            return _full_block(data[p], data[p + 1])
        if forward:
            return _window_block(data[p], data[p + 1], window)
        return _window_block(data[p + 1], data[p], window)

    if threads is not None and threads == 1:
        results = [build(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(build, tasks))

    if full_mode:
        fwd = [(entries, None) for entries, _ in results]
        bwd = fwd
        total_ops = sum(ops for _, ops in results)
    else:
        fwd = [(r[0], r[1]) for r in results[: n - 1]]
        bwd = [(r[0], r[1]) for r in results[n - 1 :]]
        total_ops = sum(r[2] for r in results)
    if stats is not None:
        stats.mul_add_count = total_ops
        stats.peak_candidates = candidate_count

    coords = np.empty((n, h, w, n, k, 2), dtype=np.int32)
    anchors = h * w
    start_rows = np.repeat(np.arange(h, dtype=np.int32), w)
    start_cols = np.tile(np.arange(w, dtype=np.int32), h)

    def chase(i: int) -> None:
        out = coords[i].reshape(anchors, n, k, 2)
        out[:, i, :, 0] = start_rows[:, None]
        out[:, i, :, 1] = start_cols[:, None]
        for direction in (1, -1):
            cur_r = start_rows.copy()
            cur_c = start_cols.copy()
            targets = range(i + 1, n) if direction == 1 else range(i - 1, -1, -1)
            for j in targets:
                if full_mode:
                    entries, _ = fwd[j - 1 if direction == 1 else j]
                    if direction == 1:
                        rows = entries[cur_r, cur_c]  # (A, H, W)
                    else:
                        rows = np.moveaxis(entries[:, :, cur_r, cur_c], -1, 0)
                    scores = rows.reshape(anchors, h * w)
                    org_r = np.zeros(anchors, dtype=np.int32)
                    org_c = np.zeros(anchors, dtype=np.int32)
                    cols_eff = w
                else:
                    sims, origins = fwd[j - 1] if direction == 1 else bwd[j]
                    scores = sims[cur_r, cur_c].reshape(anchors, -1)
                    org = origins[cur_r, cur_c]
                    org_r, org_c = org[:, 0], org[:, 1]
                    cols_eff = sims.shape[3]
                picks = _topk_rows(scores, k)
                rec_r = org_r[:, None] + picks // cols_eff
                rec_c = org_c[:, None] + picks % cols_eff
                out[:, j, :, 0] = rec_r
                out[:, j, :, 1] = rec_c
                cur_r = rec_r[:, 0].astype(np.int32)
                cur_c = rec_c[:, 0].astype(np.int32)

    if threads is not None and threads == 1:
        for i in range(n):
            chase(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(chase, range(n)))

    return CorrespondenceMap(coords, k=k, window=window)

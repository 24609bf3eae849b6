"""Correspondence-guided attention over latent volumes.

For each query token, its correspondents in the other frames are gathered
from a :class:`~vidcorr.correspondence.CorrespondenceMap`, reduced by
bipartite soft-matching merging, and attended to with scaled dot-product
attention. The query's own token never sits in the key/value set, and no
residual connection is applied here — callers compose residuals themselves.

All merge and attention arithmetic runs in float64; `apply_frame_attention`
casts its output volume back to float32 storage.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .correspondence import CorrespondenceMap
from .errors import DataError, ParameterError
from .volume import LatentVolume, TokenCoord


@dataclass(frozen=True)
class MergedTokenSet:
    """Tokens after merging, with group sizes and member positions.

    ``tokens[m]`` is the size-weighted mean of the input tokens whose list
    positions appear in ``provenance[m]``; ``sizes[m]`` is that group's
    cardinality. Sizes sum to the pre-merge token count.
    """

    tokens: np.ndarray  # (M, d) float64
    sizes: np.ndarray  # (M,) int64
    provenance: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        toks = np.ascontiguousarray(self.tokens, dtype=np.float64)
        toks.flags.writeable = False
        sizes = np.ascontiguousarray(self.sizes, dtype=np.int64)
        sizes.flags.writeable = False
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "sizes", sizes)
        if len(self.provenance) != toks.shape[0] or sizes.shape[0] != toks.shape[0]:
            raise ParameterError("tokens, sizes and provenance must have equal length")

    def __len__(self) -> int:
        return self.tokens.shape[0]


def _check_compat(latent: LatentVolume, cmap: CorrespondenceMap) -> None:
    got = (latent.frames, latent.height, latent.width)
    want = (cmap.frames, cmap.height, cmap.width)
    if got != want:
        raise DataError(f"latent grid {got} does not match correspondence map grid {want}")


def gather_corr(latent: LatentVolume, cmap: CorrespondenceMap, anchor: TokenCoord) -> np.ndarray:
    """The anchor's correspondent tokens, ordered by (frame ascending, rank).

    Frames other than the anchor's own contribute K tokens each, so the
    result has shape ((N-1)*K, d).
    """
    _check_compat(latent, cmap)
    i, r, c = anchor
    n = latent.frames
    if not (0 <= i < n and 0 <= r < latent.height and 0 <= c < latent.width):
        raise ParameterError(f"anchor {tuple(anchor)} out of bounds")
    others = [j for j in range(n) if j != i]
    sel = cmap.coords[i, r, c][others]  # (N-1, K, 2)
    frames = np.repeat(others, cmap.k)
    return latent.data[frames, sel[..., 0].ravel(), sel[..., 1].ravel()]


def merge_tokens(tokens: np.ndarray, ratio: float) -> MergedTokenSet:
    """Reduce a token list by bipartite soft matching.

    Tokens at even list positions form set A, odd positions set B. Every
    A-token proposes an edge to its most cosine-similar B-token (ties to the
    smaller B position); the floor(ratio * |A|) highest-scoring edges merge
    (score ties favor the smaller A position), with a B-token absorbing every
    A-token that chose it. Merged tokens are the plain mean of their group;
    everything else passes through with size 1. Output tokens are ordered by
    the smallest input position in their group, so ratio 0 returns the input
    order unchanged.
    """
    arr = np.asarray(tokens, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ParameterError(f"tokens must be a nonempty (M, d) array, got shape {arr.shape}")
    if not 0.0 <= ratio < 1.0:
        raise ParameterError(f"merge ratio must lie in [0, 1), got {ratio}")
    m = arr.shape[0]
    a_pos = np.arange(0, m, 2)
    b_pos = np.arange(1, m, 2)
    r = math.floor(ratio * len(a_pos))

    groups: list[list[int]] = [[p] for p in range(m)]
    if r > 0:
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        unit = np.divide(arr, norms, out=np.zeros_like(arr), where=norms > 0)
        scores = unit[a_pos] @ unit[b_pos].T  # (|A|, |B|)
        best_b = np.argmax(scores, axis=1)  # first max -> smaller B position
        best_s = scores[np.arange(len(a_pos)), best_b]
        chosen = np.argsort(-best_s, kind="stable")[:r]  # stable -> smaller A position
        for a_idx in chosen:
            groups[b_pos[best_b[a_idx]]].extend(groups[a_pos[a_idx]])
            groups[a_pos[a_idx]] = []

    kept = sorted((g for g in groups if g), key=min)
    out = np.empty((len(kept), arr.shape[1]), dtype=np.float64)
    sizes = np.empty(len(kept), dtype=np.int64)
    for idx, members in enumerate(kept):
        out[idx] = arr[members].mean(axis=0)
        sizes[idx] = len(members)
    provenance = tuple(tuple(sorted(g)) for g in kept)
    return MergedTokenSet(tokens=out, sizes=sizes, provenance=provenance)


def corr_guided_attention(
    query: np.ndarray,
    merged: MergedTokenSet,
    d_k: int | None = None,
    proportional: bool = False,
    return_weights: bool = False,
):
    """Scaled dot-product attention of one query over a merged token set.

    Keys and values are both the merged tokens. Logits are query·key /
    sqrt(d_k) with d_k defaulting to the channel dimension; the softmax
    subtracts the max logit before exponentiating. With ``proportional``
    set, log(group size) is added to each logit so larger merged groups
    attract proportionally more weight (off by default).

    Returns the attended token, or (token, weights) with ``return_weights``.
    """
    q = np.asarray(query, dtype=np.float64).ravel()
    toks = merged.tokens
    if len(merged) == 0:
        raise ParameterError("merged token set is empty")
    if q.shape[0] != toks.shape[1]:
        raise ParameterError(f"query dim {q.shape[0]} does not match token dim {toks.shape[1]}")
    dk = q.shape[0] if d_k is None else d_k
    if dk < 1:
        raise ParameterError(f"d_k must be >= 1, got {dk}")
    logits = toks @ q / math.sqrt(dk)
    if proportional:
        logits = logits + np.log(merged.sizes)
    stable = np.exp(logits - logits.max())
    weights = stable / stable.sum()
    out = weights @ toks
    if return_weights:
        return out, weights
    return out


def apply_frame_attention(
    latent: LatentVolume,
    cmap: CorrespondenceMap,
    ratio: float = 0.5,
    d_k: int | None = None,
    proportional: bool = False,
    threads: int | None = None,
) -> LatentVolume:
    """Gather, merge, and attend for every token of a latent volume.

    Every output token is the correspondence-guided attention of its input
    token over the merged correspondents named by the map. All queries read
    the original input volume; the result is a fresh volume, bitwise
    independent of the thread count.
    """
    _check_compat(latent, cmap)
    if not 0.0 <= ratio < 1.0:
        raise ParameterError(f"merge ratio must lie in [0, 1), got {ratio}")
    if threads is not None and threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    n, h, w, d = latent.data.shape
    if n < 2:
        raise ParameterError("attention needs at least 2 frames of correspondents")
    data = latent.data
    out = np.empty_like(data)

    def run_frame(i: int) -> None:
        others = [j for j in range(n) if j != i]
        sel = cmap.coords[i][:, :, others]  # (H, W, N-1, K, 2)
        frames = np.asarray(others, dtype=np.intp).reshape(1, 1, -1, 1)
        gathered = data[frames, sel[..., 0], sel[..., 1]]  # (H, W, N-1, K, d)
        toks = gathered.reshape(h, w, -1, d)
        for rr in range(h):
            for cc in range(w):
                merged = merge_tokens(toks[rr, cc], ratio)
                out[i, rr, cc] = corr_guided_attention(
                    data[i, rr, cc], merged, d_k=d_k, proportional=proportional
                )

    if threads is not None and threads == 1:
        for i in range(n):
            run_frame(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_frame, range(n)))

    return LatentVolume(out, timestep=latent.timestep)

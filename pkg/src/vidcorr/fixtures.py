"""Synthetic volumes with known token trajectories, used as correspondence oracles.

A fixture plants a small patch of distinctive unit tokens into every frame,
translating it by a fixed per-frame velocity. Background tokens are drawn
i.i.d. per frame and projected off the patch-token span, so the patch tokens
have no competition: the true correspondent of a patch token is always the
unique window entry with cosine similarity 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .volume import FeatureVolume, TokenCoord, normalize

_MAX_PATCH_COS = 0.95
_RESAMPLE_TRIES = 16


@dataclass(frozen=True)
class MotionFixture:
    """A synthesized volume plus the exact trajectory of every patch token.

    Attributes:
        volume: normalized feature volume containing the moving patch.
        ground_truth: maps each patch token's frame-0 coordinate to its true
            coordinate in every frame (a tuple of length ``frames``).
        patch_start: (row, col) of the patch's top-left corner in frame 0.
        patch_size: patch edge length in tokens.
        velocity: (rows, cols) the patch moves per frame.
        displacement: per-frame displacement magnitude, max(|dr|, |dc|).
    """

    volume: FeatureVolume
    ground_truth: dict[TokenCoord, tuple[TokenCoord, ...]]
    patch_start: tuple[int, int]
    patch_size: int
    velocity: tuple[int, int]
    displacement: int

    def patch_coords(self, frame: int) -> list[TokenCoord]:
        """Coordinates covered by the patch in ``frame``, row-major."""
        r0 = self.patch_start[0] + frame * self.velocity[0]
        c0 = self.patch_start[1] + frame * self.velocity[1]
        s = self.patch_size
        return [TokenCoord(frame, r0 + i, c0 + j) for i in range(s) for j in range(s)]

    def expected_coord(self, anchor: TokenCoord, frame: int) -> TokenCoord:
        """Where the patch token at ``anchor`` truly sits in ``frame``.

        ``anchor`` may be on the patch in any frame, not just frame 0.
        """
        dr, dc = self.velocity
        r0 = self.patch_start[0] + anchor.frame * dr
        c0 = self.patch_start[1] + anchor.frame * dc
        if not (0 <= anchor.row - r0 < self.patch_size and 0 <= anchor.col - c0 < self.patch_size):
            raise ParameterError(f"{anchor} is not a patch token")
        step = frame - anchor.frame
        return TokenCoord(frame, anchor.row + step * dr, anchor.col + step * dc)


def _distinct_unit_tokens(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Draw ``count`` unit vectors with pairwise cosine below a cap."""
    for _ in range(_RESAMPLE_TRIES):
        vecs = rng.standard_normal((count, dim))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        gram = vecs @ vecs.T
        np.fill_diagonal(gram, 0.0)
        if np.abs(gram).max() < _MAX_PATCH_COS:
            return vecs
    raise ParameterError(
        f"could not draw {count} sufficiently distinct unit tokens in dim {dim}; increase dim"
    )


def synthesize_moving_patch(
    frames: int,
    height: int,
    width: int,
    dim: int,
    patch_size: int,
    patch_start: tuple[int, int],
    velocity: tuple[int, int],
    seed: int,
) -> MotionFixture:
    """Build a normalized volume with a patch translating at a fixed velocity.

    The patch tokens are mutually distinct unit vectors repeated bit-exactly
    in every frame; background tokens are i.i.d. per frame, orthogonalized
    against the patch-token span in one projection step, so ground-truth
    recovery by cosine similarity is unambiguous.

    Raises:
        ParameterError: if the patch would leave the frame in any of the
            ``frames`` steps, or if ``dim`` is too small to leave room for
            near-orthogonal backgrounds (requires dim > patch_size**2).
    """
    if min(frames, height, width, dim, patch_size) < 1:
        raise ParameterError("frames, height, width, dim and patch_size must all be >= 1")
    if dim <= patch_size * patch_size:
        raise ParameterError(
            f"dim must exceed patch_size**2 = {patch_size * patch_size} to orthogonalize backgrounds"
        )
    pr, pc = patch_start
    dr, dc = velocity
    rows = [pr + j * dr for j in range(frames)]
    cols = [pc + j * dc for j in range(frames)]
    row_lo, row_hi = min(rows), max(rows) + patch_size - 1
    col_lo, col_hi = min(cols), max(cols) + patch_size - 1
    if row_lo < 0 or row_hi >= height:
        raise ParameterError(
            f"patch exits frame bounds: rows {row_lo}..{row_hi} outside 0..{height - 1}"
        )
    if col_lo < 0 or col_hi >= width:
        raise ParameterError(
            f"patch exits frame bounds: cols {col_lo}..{col_hi} outside 0..{width - 1}"
        )

    rng = np.random.default_rng(seed)
    s = patch_size
    patch = _distinct_unit_tokens(rng, s * s, dim)
    # Orthonormal basis of the patch-token span; one projection step takes
    # backgrounds (numerically) orthogonal to every patch token.
    basis, _ = np.linalg.qr(patch.T)

    data = np.empty((frames, height, width, dim), dtype=np.float32)
    patch_block = patch.reshape(s, s, dim).astype(np.float32)
    for j in range(frames):
        bg = rng.standard_normal((height, width, dim))
        bg -= (bg @ basis) @ basis.T
        data[j] = bg.astype(np.float32)
        data[j, rows[j] : rows[j] + s, cols[j] : cols[j] + s] = patch_block

    volume = normalize(FeatureVolume(data))

    ground_truth: dict[TokenCoord, tuple[TokenCoord, ...]] = {}
    for i in range(s):
        for j in range(s):
            start = TokenCoord(0, pr + i, pc + j)
            ground_truth[start] = tuple(
                TokenCoord(f, rows[f] + i, cols[f] + j) for f in range(frames)
            )
    return MotionFixture(
        volume=volume,
        ground_truth=ground_truth,
        patch_start=(pr, pc),
        patch_size=s,
        velocity=(dr, dc),
        displacement=max(abs(dr), abs(dc)),
    )

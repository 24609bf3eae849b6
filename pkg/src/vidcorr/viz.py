"""Trajectory visualization: one PPM image per frame with marked correspondents.

The anchor's frame shows the anchor pixel in red; every other frame shows its
K correspondent pixels in yellow. The background is a grayscale rendering of
per-token vector norms when a volume is supplied (flat mid-gray otherwise),
and an integer upscale factor turns single pixels into legible blocks.
Binary PPM (P6) keeps the output bit-exact and dependency-free.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .correspondence import CorrespondenceMap
from .errors import InternalCheckError, ParameterError
from .volume import FeatureVolume, LatentVolume, TokenCoord

ANCHOR_COLOR = (255, 0, 0)
MATCH_COLOR = (255, 255, 0)
_FLAT_GRAY = 128


def ppm_bytes(image: np.ndarray) -> bytes:
    """Serialize an (H, W, 3) uint8 image as binary PPM (P6)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ParameterError(f"image must be (H, W, 3) uint8, got {img.shape} {img.dtype}")
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(img).tobytes()


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(image))


def _backgrounds(cmap: CorrespondenceMap, volume) -> np.ndarray:
    n, h, w = cmap.frames, cmap.height, cmap.width
    if volume is None:
        return np.full((n, h, w), _FLAT_GRAY, dtype=np.uint8)
    if (volume.frames, volume.height, volume.width) != (n, h, w):
        raise ParameterError("volume grid does not match the correspondence map grid")
    norms = np.linalg.norm(volume.data.astype(np.float64), axis=-1)
    lo, hi = norms.min(), norms.max()
    if hi - lo < 1e-12:
        return np.full((n, h, w), _FLAT_GRAY, dtype=np.uint8)
    return np.round((norms - lo) / (hi - lo) * 255.0).astype(np.uint8)


def render_trajectory(
    cmap: CorrespondenceMap,
    anchor: TokenCoord,
    volume: FeatureVolume | LatentVolume | None = None,
    scale: int = 1,
) -> list[np.ndarray]:
    """One (H*scale, W*scale, 3) uint8 image per frame, markers included."""
    if scale < 1:
        raise ParameterError(f"scale must be >= 1, got {scale}")
    n, h, w = cmap.frames, cmap.height, cmap.width
    i, r, c = anchor
    if not (0 <= i < n and 0 <= r < h and 0 <= c < w):
        raise ParameterError(f"anchor {tuple(anchor)} out of bounds for {n}x{h}x{w} grid")
    gray = _backgrounds(cmap, volume)
    matches = cmap.coords[i, r, c]  # (N, K, 2)
    images = []
    for j in range(n):
        img = np.repeat(gray[j][:, :, None], 3, axis=2)
        if j == i:
            img[r, c] = ANCHOR_COLOR
        else:
            for mr, mc in matches[j]:
                if not (0 <= mr < h and 0 <= mc < w):
                    raise InternalCheckError(f"marker ({mr}, {mc}) escapes the {h}x{w} frame")
                img[mr, mc] = MATCH_COLOR
        if scale > 1:
            img = np.kron(img, np.ones((scale, scale, 1), dtype=np.uint8))
        images.append(img)
    return images


def write_trajectory(
    cmap: CorrespondenceMap,
    anchor: TokenCoord,
    out_dir: str | Path,
    volume: FeatureVolume | LatentVolume | None = None,
    scale: int = 1,
) -> list[Path]:
    """Render and write frame_0000.ppm .. frame_{N-1}.ppm under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, img in enumerate(render_trajectory(cmap, anchor, volume=volume, scale=scale)):
        path = out / f"frame_{j:04d}.ppm"
        write_ppm(path, img)
        paths.append(path)
    return paths

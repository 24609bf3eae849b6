"""PPM rendering of traced trajectories."""

import numpy as np
import pytest

from vidcorr import LatentVolume, ParameterError, TokenCoord, trace_trajectories
from vidcorr.viz import ppm_bytes, render_trajectory, write_ppm, write_trajectory

from conftest import make_volume


def test_ppm_bytes_layout():
    img = np.zeros((2, 3, 3), dtype=np.uint8)
    img[0, 1] = (10, 20, 30)
    raw = ppm_bytes(img)
    assert raw.startswith(b"P6\n3 2\n255\n")
    body = raw[len(b"P6\n3 2\n255\n") :]
    assert len(body) == 18
    assert body[3:6] == bytes([10, 20, 30])


def test_ppm_rejects_wrong_shape():
    with pytest.raises(ParameterError, match="uint8"):
        ppm_bytes(np.zeros((2, 2), dtype=np.uint8))


def test_markers_anchor_red_matches_yellow(small_volume):
    cmap = trace_trajectories(small_volume, 2, window=3, threads=1)
    anchor = TokenCoord(1, 2, 2)
    frames = render_trajectory(cmap, anchor)
    assert len(frames) == 3
    assert tuple(frames[1][2, 2]) == (255, 0, 0)
    for j in (0, 2):
        for r, c in cmap.coords[1, 2, 2, j]:
            assert tuple(frames[j][r, c]) == (255, 255, 0)
    # exactly one red pixel overall, K yellows per other frame (unless ranks collide)
    reds = sum((f == (255, 0, 0)).all(axis=-1).sum() for f in frames)
    assert reds == 1


def test_flat_background_without_volume(small_volume):
    cmap = trace_trajectories(small_volume, 1, window=3, threads=1)
    frames = render_trajectory(cmap, TokenCoord(0, 0, 0))
    untouched = frames[0][3, 3]
    assert tuple(untouched) == (128, 128, 128)


def test_norm_background_with_latent(small_volume):
    cmap = trace_trajectories(small_volume, 1, window=3, threads=1)
    data = np.zeros((3, 4, 4, 2), dtype=np.float32)
    data[2, 3, 3] = (3.0, 4.0)  # the only nonzero token: norm 5 -> white
    frames = render_trajectory(cmap, TokenCoord(0, 1, 1), volume=LatentVolume(data))
    assert tuple(frames[2][3, 3]) == (255, 255, 255)
    assert tuple(frames[2][0, 0]) == (0, 0, 0)


def test_scale_blows_up_pixels(small_volume):
    cmap = trace_trajectories(small_volume, 1, window=3, threads=1)
    anchor = TokenCoord(0, 1, 2)
    frames = render_trajectory(cmap, anchor, scale=3)
    assert frames[0].shape == (12, 12, 3)
    block = frames[0][3:6, 6:9]
    assert (block == (255, 0, 0)).all()


def test_render_checks_args(small_volume):
    cmap = trace_trajectories(small_volume, 1, window=3, threads=1)
    with pytest.raises(ParameterError, match="anchor"):
        render_trajectory(cmap, TokenCoord(0, 9, 0))
    with pytest.raises(ParameterError, match="scale"):
        render_trajectory(cmap, TokenCoord(0, 0, 0), scale=0)
    with pytest.raises(ParameterError, match="grid"):
        render_trajectory(cmap, TokenCoord(0, 0, 0), volume=make_volume((3, 5, 4, 2), seed=0))


def test_write_trajectory_names_files(tmp_path, small_volume):
    cmap = trace_trajectories(small_volume, 1, window=3, threads=1)
    paths = write_trajectory(cmap, TokenCoord(0, 0, 0), tmp_path / "viz")
    assert [p.name for p in paths] == ["frame_0000.ppm", "frame_0001.ppm", "frame_0002.ppm"]
    for p in paths:
        assert p.read_bytes().startswith(b"P6\n4 4\n255\n")


def test_write_ppm_roundtrip(tmp_path):
    img = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
    write_ppm(tmp_path / "x.ppm", img)
    assert (tmp_path / "x.ppm").read_bytes() == ppm_bytes(img)

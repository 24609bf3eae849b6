"""Moving-patch fixtures: geometry, ground truth, and recoverability margins."""

import numpy as np
import pytest

from vidcorr import ParameterError, TokenCoord, synthesize_moving_patch


def test_ground_truth_geometry():
    fx = synthesize_moving_patch(4, 10, 10, 12, 2, (1, 2), (2, 1), seed=0)
    start = TokenCoord(0, 1, 2)
    assert fx.ground_truth[start] == (
        TokenCoord(0, 1, 2),
        TokenCoord(1, 3, 3),
        TokenCoord(2, 5, 4),
        TokenCoord(3, 7, 5),
    )
    assert fx.displacement == 2
    assert len(fx.ground_truth) == 4  # 2x2 patch


def test_patch_coords_row_major():
    fx = synthesize_moving_patch(3, 8, 8, 10, 2, (2, 2), (1, 0), seed=1)
    assert fx.patch_coords(1) == [
        TokenCoord(1, 3, 2),
        TokenCoord(1, 3, 3),
        TokenCoord(1, 4, 2),
        TokenCoord(1, 4, 3),
    ]


def test_expected_coord_from_middle_frame():
    fx = synthesize_moving_patch(5, 12, 12, 12, 1, (4, 4), (1, 1), seed=2)
    anchor = TokenCoord(2, 6, 6)  # the patch token as seen in frame 2
    assert fx.expected_coord(anchor, 0) == TokenCoord(0, 4, 4)
    assert fx.expected_coord(anchor, 4) == TokenCoord(4, 8, 8)
    with pytest.raises(ParameterError, match="not a patch token"):
        fx.expected_coord(TokenCoord(2, 0, 0), 1)


def test_patch_tokens_bit_identical_across_frames():
    fx = synthesize_moving_patch(4, 9, 9, 16, 2, (1, 1), (1, 1), seed=3)
    data = fx.volume.data
    base = [data[c.frame, c.row, c.col] for c in fx.ground_truth[TokenCoord(0, 1, 1)]]
    for tok in base[1:]:
        assert np.array_equal(tok, base[0])


def test_volume_is_normalized_with_orthogonal_background():
    fx = synthesize_moving_patch(3, 8, 8, 20, 2, (2, 2), (0, 1), seed=4)
    assert fx.volume.normalized
    norms = np.linalg.norm(fx.volume.data, axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-5)
    # background tokens have near-zero similarity against patch tokens
    patch = np.stack([fx.volume.data[c] for c in [(0, 2, 2), (0, 2, 3), (0, 3, 2), (0, 3, 3)]])
    bg = fx.volume.data[1, 0, 0]
    assert np.abs(patch.astype(np.float64) @ bg.astype(np.float64)).max() < 1e-4


def test_bounds_violation_reports_worst_row():
    # start row 2, velocity 3 rows/frame, 4 frames, 1x1 patch: final row 11
    with pytest.raises(ParameterError, match=r"rows 2\.\.11 outside 0\.\.7"):
        synthesize_moving_patch(4, 8, 8, 8, 1, (2, 2), (3, 0), seed=0)


def test_bounds_violation_negative_direction():
    # cols per frame: 2, 0, -2; patch width 2 puts the span at -2..3
    with pytest.raises(ParameterError, match=r"cols -2\.\.3 outside"):
        synthesize_moving_patch(3, 8, 8, 8, 2, (2, 2), (0, -2), seed=0)


def test_dim_must_exceed_patch_token_count():
    with pytest.raises(ParameterError, match="dim must exceed"):
        synthesize_moving_patch(3, 8, 8, 4, 2, (2, 2), (1, 0), seed=0)


def test_zero_velocity_is_static():
    fx = synthesize_moving_patch(3, 6, 6, 9, 1, (3, 3), (0, 0), seed=5)
    assert fx.displacement == 0
    assert fx.ground_truth[TokenCoord(0, 3, 3)] == tuple(TokenCoord(f, 3, 3) for f in range(3))


def test_deterministic_by_seed():
    a = synthesize_moving_patch(3, 8, 8, 12, 2, (2, 2), (1, 1), seed=9)
    b = synthesize_moving_patch(3, 8, 8, 12, 2, (2, 2), (1, 1), seed=9)
    c = synthesize_moving_patch(3, 8, 8, 12, 2, (2, 2), (1, 1), seed=10)
    assert np.array_equal(a.volume.data, b.volume.data)
    assert not np.array_equal(a.volume.data, c.volume.data)

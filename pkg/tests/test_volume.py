"""Volume construction, normalization, and the COVF binary format.

The format tests build expected byte strings by hand (struct.pack, no help
from the writer) so reader and writer are checked against the documented
layout, not against each other.
"""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidcorr import (
    DataError,
    FeatureVolume,
    LatentVolume,
    ParameterError,
    TokenCoord,
    feature_volume_bytes,
    load_feature_volume,
    load_latent_volume,
    normalize,
    save_feature_volume,
)

from conftest import make_volume


def handmade_covf(n, h, w, d, values):
    header = struct.pack("<4s5I", b"COVF", 1, n, h, w, d)
    return header + struct.pack(f"<{n * h * w * d}f", *values)


# ---------------------------------------------------------------------------
# construction and validation


def test_rejects_non_4d():
    with pytest.raises(ParameterError, match="4-D"):
        FeatureVolume(np.zeros((2, 2, 2), dtype=np.float32))


def test_rejects_wrong_dtype():
    with pytest.raises(ParameterError, match="float32"):
        FeatureVolume(np.zeros((1, 1, 1, 1), dtype=np.float64))


def test_rejects_empty_axis():
    with pytest.raises(ParameterError, match=">= 1"):
        FeatureVolume(np.zeros((1, 0, 1, 1), dtype=np.float32))


def test_rejects_non_finite_and_names_flat_index():
    data = np.zeros((1, 2, 2, 2), dtype=np.float32)
    data[0, 1, 0, 1] = np.nan  # flat index 5
    with pytest.raises(DataError, match="flat index 5"):
        FeatureVolume(data)


def test_data_is_read_only():
    vol = make_volume((2, 2, 2, 4), seed=0)
    with pytest.raises(ValueError):
        vol.data[0, 0, 0, 0] = 1.0


def test_normalized_flag_is_verified():
    data = np.full((1, 1, 1, 4), 2.0, dtype=np.float32)
    with pytest.raises(DataError, match="norm"):
        FeatureVolume(data, normalized=True)


def test_token_lookup():
    vol = make_volume((2, 3, 3, 4), seed=1)
    coord = TokenCoord(1, 2, 0)
    assert np.array_equal(vol.token(coord), vol.data[1, 2, 0])


def test_latent_volume_carries_timestep():
    lat = LatentVolume(np.zeros((1, 1, 1, 1), dtype=np.float32), timestep=17)
    assert lat.timestep == 17
    assert lat.dim == 1


# ---------------------------------------------------------------------------
# normalization


def test_normalize_gives_unit_norms():
    vol = make_volume((2, 3, 3, 8), seed=2, normalized=False)
    out = normalize(vol)
    norms = np.linalg.norm(out.data, axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-5)
    assert out.normalized
    assert out.zero_tokens == ()


def test_normalize_zero_tokens_reported_and_zeroed():
    data = np.ones((1, 2, 2, 3), dtype=np.float32)
    data[0, 1, 1] = 0.0
    out = normalize(FeatureVolume(data))
    assert out.zero_tokens == (TokenCoord(0, 1, 1),)
    assert np.array_equal(out.data[0, 1, 1], np.zeros(3, dtype=np.float32))
    # the other tokens are untouched by the zero handling
    assert np.allclose(np.linalg.norm(out.data[0, 0], axis=-1), 1.0, atol=1e-5)


def test_normalize_twice_refused():
    out = normalize(make_volume((1, 2, 2, 4), seed=3, normalized=False))
    with pytest.raises(ParameterError, match="already normalized"):
        normalize(out)


def test_normalize_leaves_input_untouched():
    vol = make_volume((1, 2, 2, 4), seed=4, normalized=False)
    before = vol.data.copy()
    normalize(vol)
    assert np.array_equal(vol.data, before)


# ---------------------------------------------------------------------------
# COVF format


def test_writer_matches_handmade_bytes(tmp_path):
    values = [0.0, 1.0, -1.0, 0.5, 2.0, -2.5, 3.25, 4.0]
    data = np.array(values, dtype=np.float32).reshape(1, 2, 2, 2)
    path = tmp_path / "v.covf"
    save_feature_volume(path, FeatureVolume(data))
    assert path.read_bytes() == handmade_covf(1, 2, 2, 2, values)


def test_reader_parses_handmade_bytes(tmp_path):
    values = [float(i) for i in range(12)]
    path = tmp_path / "v.covf"
    path.write_bytes(handmade_covf(3, 1, 2, 2, values))
    vol = load_feature_volume(path)
    assert vol.data.shape == (3, 1, 2, 2)
    assert not vol.normalized
    assert np.array_equal(vol.data.ravel(), np.array(values, dtype=np.float32))


def test_load_latent_volume(tmp_path):
    vol = make_volume((2, 2, 2, 2), seed=5, normalized=False)
    path = tmp_path / "z.covf"
    save_feature_volume(path, vol)
    lat = load_latent_volume(path, timestep=3)
    assert isinstance(lat, LatentVolume)
    assert lat.timestep == 3
    assert np.array_equal(lat.data, vol.data)


def test_load_rejects_short_file(tmp_path):
    path = tmp_path / "short.covf"
    path.write_bytes(b"COVF\x01")
    with pytest.raises(DataError, match="too short"):
        load_feature_volume(path)


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.covf"
    path.write_bytes(handmade_covf(1, 1, 1, 1, [1.0]).replace(b"COVF", b"XXXX", 1))
    with pytest.raises(DataError, match="magic"):
        load_feature_volume(path)


def test_load_rejects_bad_version(tmp_path):
    path = tmp_path / "bad.covf"
    raw = bytearray(handmade_covf(1, 1, 1, 1, [1.0]))
    raw[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="version 9"):
        load_feature_volume(path)


def test_load_rejects_zero_dimension(tmp_path):
    path = tmp_path / "bad.covf"
    path.write_bytes(struct.pack("<4s5I", b"COVF", 1, 1, 0, 1, 1))
    with pytest.raises(DataError, match=">= 1"):
        load_feature_volume(path)


def test_load_rejects_payload_length_mismatch(tmp_path):
    path = tmp_path / "bad.covf"
    path.write_bytes(handmade_covf(1, 1, 1, 2, [1.0, 2.0]) + b"\x00\x00\x00\x00")
    with pytest.raises(DataError, match="payload length mismatch"):
        load_feature_volume(path)


def test_load_rejects_non_finite_payload(tmp_path):
    path = tmp_path / "bad.covf"
    header = struct.pack("<4s5I", b"COVF", 1, 1, 1, 1, 2)
    payload = struct.pack("<2f", 1.0, float("inf"))
    path.write_bytes(header + payload)
    with pytest.raises(DataError, match="flat index 1"):
        load_feature_volume(path)


@settings(max_examples=25, deadline=None)
@given(
    shape=st.tuples(
        st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 5)
    ),
    seed=st.integers(0, 2**31),
)
def test_roundtrip_is_bitexact(tmp_path_factory, shape, seed):
    vol = make_volume(shape, seed=seed, normalized=False)
    path = tmp_path_factory.mktemp("rt") / "v.covf"
    save_feature_volume(path, vol)
    back = load_feature_volume(path)
    assert back.data.tobytes() == vol.data.tobytes()
    assert feature_volume_bytes(back) == path.read_bytes()

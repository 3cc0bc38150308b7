import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ear3d.errors import DegenerateInputError, FormatError, InvalidArgumentError, InvalidStateError, NotFoundError
from ear3d.io import load_volume, save_volume, sidecar_path
from ear3d.volume import (
    AxisConvention,
    NormalizationRecord,
    Volume,
    denormalize,
    extract_labeled_region,
    mip,
    resample,
    resize,
    zscore_normalize,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, width=32)
small_shapes = st.tuples(*[st.integers(1, 5)] * 3)


def brute_trilinear(data, x, y, z):
    """Eight-corner trilinear interpolation with clamp-to-edge, one point at a time."""
    n = data.shape
    pos = [min(max(c, 0.0), m - 1.0) for c, m in zip((x, y, z), n)]
    base = [min(int(np.floor(p)), max(m - 2, 0)) for p, m in zip(pos, n)]
    frac = [p - b for p, b in zip(pos, base)]
    total = 0.0
    for corner in itertools.product((0, 1), repeat=3):
        idx = [min(b + c, m - 1) for b, c, m in zip(base, corner, n)]
        w = 1.0
        for c, f in zip(corner, frac):
            w *= f if c else 1.0 - f
        total += w * data[tuple(idx)]
    return total


def test_volume_invariants():
    with pytest.raises(InvalidArgumentError):
        Volume(np.zeros((2, 0, 2)))
    with pytest.raises(InvalidArgumentError):
        Volume(np.zeros((2, 2, 2)), spacing=(1, 0, 1))
    with pytest.raises(InvalidArgumentError):
        Volume(np.full((2, 2, 2), np.nan))
    with pytest.raises(InvalidArgumentError):
        AxisConvention(("LR", "LR", "SI"))
    assert AxisConvention().axis_of("AP") == 1


def test_resample_identity_is_bitwise():
    rng = np.random.default_rng(0)
    v = Volume(rng.normal(size=(4, 5, 6)))
    out = resample(v, (1, 1, 1))
    assert out.equals(v)


@pytest.mark.parametrize("target", [(0.5, 0.5, 0.5), (2.0, 1.0, 0.7)])
def test_resample_constant(target):
    v = Volume(np.full((6, 6, 6), 3.25))
    out = resample(v, target)
    assert out.spacing == target
    assert np.all(out.data == np.float32(3.25))


def test_resample_ramp_halved_spacing():
    ramp = np.broadcast_to(np.arange(5.0)[:, None, None], (5, 3, 3))
    out = resample(Volume(ramp), (0.5, 1.0, 1.0))
    assert out.shape == (10, 3, 3)
    line = out.data[:, 1, 1]
    np.testing.assert_array_equal(line[0:10:2], np.arange(5.0))
    np.testing.assert_array_equal(line[1:9:2], np.arange(5.0)[:-1] + 0.5)


def test_resample_rejects_bad_spacing():
    with pytest.raises(InvalidArgumentError):
        resample(Volume(np.zeros((2, 2, 2))), (1, -1, 1))


def test_resize_identity_and_constant():
    rng = np.random.default_rng(1)
    v = Volume(rng.normal(size=(8, 8, 8)))
    assert resize(v, (8, 8, 8)).equals(v)
    c = resize(Volume(np.full((4, 4, 4), -2.0)), (7, 3, 5))
    assert c.shape == (7, 3, 5) and np.all(c.data == -2.0)
    with pytest.raises(InvalidArgumentError):
        resize(v, (0, 8, 8))


def test_resize_preserves_extent():
    v = Volume(np.zeros((4, 4, 4)), spacing=(2.0, 1.0, 0.5))
    out = resize(v, (8, 2, 4))
    np.testing.assert_allclose(out.extent, v.extent)


def test_resize_ramp_matches_brute_force_trilinear():
    x = np.arange(4.0)
    ramp = x[:, None, None] + 2 * x[None, :, None] - x[None, None, :]
    out = resize(Volume(ramp), (8, 8, 8))
    coords = (np.arange(8) + 0.5) * 4 / 8 - 0.5
    expected = np.array([[[brute_trilinear(ramp, a, b, c) for c in coords] for b in coords] for a in coords])
    assert np.max(np.abs(out.data - expected)) == 0


def test_resize_random_matches_brute_force():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(3, 4, 5))
    out = resize(Volume(data), (5, 3, 7))
    coords = [(np.arange(m) + 0.5) * n / m - 0.5 for m, n in zip((5, 3, 7), data.shape)]
    expected = np.array([[[brute_trilinear(data, a, b, c) for c in coords[2]] for b in coords[1]] for a in coords[0]])
    np.testing.assert_allclose(out.data, expected, atol=1e-6)


def test_zscore_two_voxels():
    v = Volume(np.array([0.0, 2.0]).reshape(2, 1, 1))
    z, rec = zscore_normalize(v)
    np.testing.assert_array_equal(z.data.ravel(), [-1.0, 1.0])
    assert rec == NormalizationRecord(1.0, 1.0)
    assert z.domain == "zscored"


def test_zscore_constant_is_degenerate():
    with pytest.raises(DegenerateInputError):
        zscore_normalize(Volume(np.ones((3, 3, 3))))


def test_zscore_requires_raw():
    z, _ = zscore_normalize(Volume(np.arange(8.0).reshape(2, 2, 2)))
    with pytest.raises(InvalidStateError):
        zscore_normalize(z)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, small_shapes, elements=finite))
def test_zscore_statistics_and_roundtrip(data):
    v = Volume(data)
    std = float(v.data.astype(np.float64).std())
    if std < 1e-3:
        return
    z, rec = zscore_normalize(v)
    assert abs(z.data.astype(np.float64).mean()) < 1e-5
    assert abs(z.data.astype(np.float64).std() - 1) < 1e-5
    back = denormalize(z, rec)
    assert back.domain == "raw"
    assert np.max(np.abs(back.data - v.data)) <= 1e-5 * max(std, np.abs(v.data).max())


def test_denormalize_known_values():
    z = Volume(np.zeros((2, 2, 2)), domain="zscored")
    out = denormalize(z, NormalizationRecord(5.0, 2.0))
    assert np.all(out.data == 5.0)
    with pytest.raises(InvalidArgumentError):
        NormalizationRecord(0.0, 0.0)
    with pytest.raises(InvalidStateError):
        denormalize(Volume(np.zeros((2, 2, 2))), NormalizationRecord(0.0, 1.0))


def test_mip_basic():
    assert np.all(mip(Volume(np.full((3, 4, 5), 7.0)), 1) == 7.0)
    d = np.zeros((4, 5, 6))
    d[1, 2, 3] = 9
    img = mip(Volume(d), 0)
    assert img.shape == (5, 6)
    assert img[2, 3] == 9 and np.count_nonzero(img) == 1
    with pytest.raises(InvalidArgumentError):
        mip(Volume(d), 3)


def test_mip_matches_per_ray_oracle():
    rng = np.random.default_rng(5)
    d = rng.normal(size=(5, 5, 5)).astype(np.float32)
    v = Volume(d)
    for axis in range(3):
        got = mip(v, axis)
        other = [a for a in range(3) if a != axis]
        for i in range(5):
            for j in range(5):
                best = -np.inf
                for k in range(5):
                    idx = [0, 0, 0]
                    idx[axis], idx[other[0]], idx[other[1]] = k, i, j
                    best = max(best, d[tuple(idx)])
                assert got[i, j] == best


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, small_shapes, elements=st.floats(-100, 100, width=32)),
       st.floats(0.1, 10), st.floats(-10, 10), st.integers(0, 2))
def test_mip_commutes_with_monotone_rescale(data, a, b, axis):
    lhs = mip(a * data.astype(np.float64) + b, axis)
    rhs = a * mip(data.astype(np.float64), axis) + b
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    v = Volume(rng.normal(size=(3, 4, 5)), spacing=(0.5, 1.0, 2.0), origin=(1, -2, 3),
               axes=AxisConvention(("AP", "LR", "SI")), domain="zscored")
    path = save_volume(v, tmp_path / "a.vol")
    assert sidecar_path(path).exists()
    assert load_volume(path).equals(v)


def test_load_truncated_payload(tmp_path):
    path = save_volume(Volume(np.ones((2, 2, 2))), tmp_path / "t.vol")
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError) as err:
        load_volume(path)
    assert err.value.field == "shape"


def test_load_shape_payload_mismatch(tmp_path):
    path = save_volume(Volume(np.ones((2, 2, 2))), tmp_path / "m.vol")
    path.write_bytes(np.ones(7, dtype="<f4").tobytes())
    with pytest.raises(FormatError):
        load_volume(path)


def test_load_corrupt_header(tmp_path):
    path = save_volume(Volume(np.ones((2, 2, 2))), tmp_path / "c.vol")
    sidecar_path(path).write_text("{not json")
    with pytest.raises(FormatError):
        load_volume(path)
    sidecar_path(path).write_text('{"shape": [2, 2, 2]}')
    with pytest.raises(FormatError) as err:
        load_volume(path)
    assert err.value.field == "spacing_mm"


def test_extract_single_voxel():
    rng = np.random.default_rng(2)
    ct = Volume(rng.normal(size=(6, 6, 6)))
    mask = np.zeros((6, 6, 6))
    mask[2, 3, 4] = 5
    out = extract_labeled_region(ct, mask, 5, margin=0)
    assert out.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == ct.data[2, 3, 4]
    assert out.origin == (2.0, 3.0, 4.0)


def test_extract_absent_label():
    with pytest.raises(NotFoundError):
        extract_labeled_region(Volume(np.zeros((3, 3, 3))), np.zeros((3, 3, 3)), 1)


def test_extract_cube_with_margin_matches_scan():
    ct = Volume(np.arange(1000.0).reshape(10, 10, 10))
    mask = np.zeros((10, 10, 10))
    mask[4:7, 2:5, 5:8] = 2
    mask[0, 0, 0] = 1
    out = extract_labeled_region(ct, mask, 2, margin=2)
    # exhaustive bounding-box scan
    lo = [10] * 3
    hi = [-1] * 3
    for idx in itertools.product(range(10), repeat=3):
        if mask[idx] == 2:
            lo = [min(a, b) for a, b in zip(lo, idx)]
            hi = [max(a, b) for a, b in zip(hi, idx)]
    lo = [max(0, a - 2) for a in lo]
    hi = [min(9, b + 2) for b in hi]
    assert out.shape == tuple(b - a + 1 for a, b in zip(lo, hi)) == (7, 7, 7)
    crop = ct.data[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
    keep = mask[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] == 2
    np.testing.assert_array_equal(out.data, np.where(keep, crop, 0))

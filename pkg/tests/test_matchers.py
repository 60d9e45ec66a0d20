"""Block matchers against naive per-hypothesis recomputation."""

import numpy as np
import pytest

from cbmv.errors import ConfigError
from cbmv.matchers import (
    MatcherParams,
    census_transform,
    compute_matcher_volumes,
    cost_volume_census,
    cost_volume_ncc,
    cost_volume_sobel_sad,
    cost_volume_zsad,
    sobel_horizontal,
)
from oracles import (
    naive_census_cost,
    naive_ncc_cost,
    naive_sobel_response,
    naive_sobel_sad_cost,
    naive_zsad_cost,
)

SMALL = MatcherParams(ncc_window=3, zsad_window=5, census_window=5, sobel_window=3)


def random_pair(rng, h=8, w=8):
    return rng.uniform(0, 1, (h, w)), rng.uniform(0, 1, (h, w))


def for_each_valid(vol):
    ys, xs, ds = np.nonzero(vol.valid)
    return zip(ys, xs, ds)


def test_census_oracle():
    rng = np.random.default_rng(10)
    left, right = random_pair(rng)
    vol = cost_volume_census(left, right, 4, SMALL)
    for y, x, d in for_each_valid(vol):
        assert vol.cost[y, x, d] == naive_census_cost(left, right, y, x, d, 5)


def test_ncc_oracle():
    rng = np.random.default_rng(11)
    left, right = random_pair(rng)
    vol = cost_volume_ncc(left, right, 4, SMALL)
    for y, x, d in for_each_valid(vol):
        ref = naive_ncc_cost(left, right, y, x, d, 3)
        assert vol.cost[y, x, d] == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_zsad_oracle():
    rng = np.random.default_rng(12)
    left, right = random_pair(rng)
    vol = cost_volume_zsad(left, right, 4, SMALL)
    for y, x, d in for_each_valid(vol):
        ref = naive_zsad_cost(left, right, y, x, d, 5)
        assert vol.cost[y, x, d] == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_sobel_oracle():
    rng = np.random.default_rng(13)
    left, right = random_pair(rng)
    np.testing.assert_allclose(sobel_horizontal(left), naive_sobel_response(left),
                               rtol=1e-12, atol=1e-12)
    vol = cost_volume_sobel_sad(left, right, 4, SMALL)
    sl, sr = naive_sobel_response(left), naive_sobel_response(right)
    for y, x, d in for_each_valid(vol):
        ref = naive_sobel_sad_cost(sl, sr, y, x, d, 3)
        assert vol.cost[y, x, d] == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_census_transform_basics():
    img = np.array([[0.1, 0.5], [0.9, 0.5]])
    bits = census_transform(img, 3)
    assert bits.shape == (2, 2, 8)
    # (0,1): first neighbour replicates to the 0.1 corner, darker than 0.5
    assert bits[0, 1, 0]
    # (0,0): centre 0.1 is the image minimum, nothing is darker
    assert not bits[0, 0].any()


def test_census_tie_is_zero():
    img = np.full((3, 3), 0.4)
    bits = census_transform(img, 3)
    assert not bits.any()


def test_census_cost_bounds():
    rng = np.random.default_rng(14)
    left, right = random_pair(rng)
    vol = cost_volume_census(left, right, 4, MatcherParams())
    limit = 11 * 11 - 1
    assert vol.max_cost == limit
    assert vol.cost[vol.valid].max() <= limit
    assert vol.cost[vol.valid].min() >= 0


def test_global_offset_invariance():
    # census compares against the window centre and the Sobel kernel sums
    # to zero, so a constant added to both images changes nothing
    rng = np.random.default_rng(15)
    left = rng.uniform(0.1, 0.5, (8, 8))
    right = rng.uniform(0.1, 0.5, (8, 8))
    a = cost_volume_census(left, right, 3, SMALL)
    b = cost_volume_census(left + 0.3, right + 0.3, 3, SMALL)
    assert np.array_equal(a.cost[a.valid], b.cost[b.valid])
    a = cost_volume_sobel_sad(left, right, 3, SMALL)
    b = cost_volume_sobel_sad(left + 0.3, right + 0.3, 3, SMALL)
    np.testing.assert_allclose(a.cost[a.valid], b.cost[b.valid], atol=1e-12)


def test_ncc_affine_invariance():
    rng = np.random.default_rng(16)
    left = rng.uniform(0.2, 0.6, (8, 8))
    right = rng.uniform(0.2, 0.6, (8, 8))
    a = cost_volume_ncc(left, right, 3, SMALL)
    b = cost_volume_ncc(np.clip(0.5 * left + 0.1, 0, 1), right, 3, SMALL)
    np.testing.assert_allclose(a.cost[a.valid], b.cost[b.valid], atol=1e-9)


def test_ncc_flat_window_is_half():
    left = np.full((6, 6), 0.5)
    right = np.full((6, 6), 0.25)
    vol = cost_volume_ncc(left, right, 2, SMALL)
    assert np.all(vol.cost[vol.valid] == 0.5)


def test_identical_images_zero_cost_at_d0():
    rng = np.random.default_rng(17)
    img = rng.uniform(0, 1, (8, 8))
    for fn in (cost_volume_census, cost_volume_zsad, cost_volume_sobel_sad):
        vol = fn(img, img, 3, SMALL)
        assert np.all(vol.cost[:, :, 0] == 0.0)


def test_window_validation():
    with pytest.raises(ConfigError):
        MatcherParams(ncc_window=4).validate()
    with pytest.raises(ConfigError):
        MatcherParams(census_window=1).validate()
    with pytest.raises(ConfigError):
        census_transform(np.zeros((3, 3)), 2)


def test_shape_mismatch_rejected():
    with pytest.raises(ConfigError):
        cost_volume_census(np.zeros((4, 4)), np.zeros((4, 5)), 2, SMALL)


def test_compute_matcher_volumes_keys():
    rng = np.random.default_rng(18)
    left, right = random_pair(rng, 6, 6)
    vols = compute_matcher_volumes(left, right, 2)
    assert list(vols) == ["ncc", "census", "zsad", "sobel"]
    shapes = {v.cost.shape for v in vols.values()}
    assert shapes == {(6, 6, 3)}

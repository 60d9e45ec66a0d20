"""Cross arms, cost aggregation, and semi-global smoothing."""

import numpy as np
import pytest

from cbmv.errors import ConfigError
from cbmv.optimize import (
    SGM_DIRECTIONS_4,
    SGM_DIRECTIONS_8,
    CbcaParams,
    SgmParams,
    build_cross_arms,
    cbca_aggregate,
    optimize_volume,
    sgm,
)
from cbmv.volume import CostVolume, empty_volume, shift_to_right_volume
from oracles import naive_cbca_once, naive_sgm_direction


def random_volume(rng, h=5, w=7, d_max=3, reference="left"):
    vol = empty_volume(h, w, d_max, max_cost=1.0)
    vol.cost[vol.valid] = rng.uniform(0.0, 1.0, int(vol.valid.sum()))
    if reference == "right":
        vol = shift_to_right_volume(vol)
        vol.cost[vol.valid] = rng.uniform(0.0, 1.0, int(vol.valid.sum()))
    return vol


def pairwise_mean(arrs):
    items = list(arrs)
    n = len(items)
    while len(items) > 1:
        items = [items[i] + items[i + 1] if i + 1 < len(items) else items[i]
                 for i in range(0, len(items), 2)]
    return items[0] / n


# ------------------------------------------------------------------- arms

def test_arms_constant_image():
    img = np.full((6, 9), 0.4)
    arms = build_cross_arms(img, CbcaParams(tau=0.1, l_max=3))
    x = np.arange(9)
    y = np.arange(6)
    assert np.array_equal(arms.left, np.broadcast_to(np.minimum(3, x), (6, 9)))
    assert np.array_equal(arms.right, np.broadcast_to(np.minimum(3, 8 - x), (6, 9)))
    assert np.array_equal(arms.up, np.broadcast_to(np.minimum(3, y)[:, None], (6, 9)))
    assert np.array_equal(arms.down, np.broadcast_to(np.minimum(3, 5 - y)[:, None], (6, 9)))


def test_arms_zero_tau_on_varying_image():
    rng = np.random.default_rng(50)
    img = np.cumsum(rng.uniform(0.001, 0.002, (5, 8)), axis=1)
    img = np.clip(img, 0, 1)
    arms = build_cross_arms(img, CbcaParams(tau=0.0, l_max=5))
    assert arms.left.max() == 0 and arms.right.max() == 0


def test_arms_stop_at_step_edge():
    img = np.full((3, 10), 0.2)
    img[:, 5:] = 0.8
    arms = build_cross_arms(img, CbcaParams(tau=0.1, l_max=14))
    assert (arms.right[:, 4] == 0).all() and (arms.left[:, 5] == 0).all()
    assert (arms.right[:, 2] == 2).all()  # constant up to the edge
    assert (arms.left[:, 8] == 3).all()


def test_arm_needs_similarity_to_anchor_and_neighbour():
    # drift: each step is within tau of the previous pixel but the third
    # pixel is too far from the anchor
    img = np.array([[0.0, 0.05, 0.1, 0.15]])
    arms = build_cross_arms(img, CbcaParams(tau=0.06, l_max=14))
    assert arms.right[0, 0] == 1
    # jump: breaks the neighbour-to-neighbour condition immediately
    img = np.array([[0.0, 0.05, 0.2, 0.2]])
    arms = build_cross_arms(img, CbcaParams(tau=0.14, l_max=14))
    assert arms.right[0, 0] == 1


# ------------------------------------------------------------------- cbca

def test_cbca_constant_volume_unchanged():
    rng = np.random.default_rng(51)
    img_l = rng.uniform(0, 1, (5, 7))
    img_r = rng.uniform(0, 1, (5, 7))
    arms_l = build_cross_arms(img_l, CbcaParams())
    arms_r = build_cross_arms(img_r, CbcaParams())
    vol = empty_volume(5, 7, 3, max_cost=1.0)
    vol.cost[vol.valid] = 0.37
    out = cbca_aggregate(vol, arms_l, arms_r, 2, -1)
    assert np.allclose(out.cost[out.valid], 0.37)
    assert np.array_equal(out.valid, vol.valid)
    assert (out.cost[~out.valid] == 1.0).all()


def test_cbca_zero_arms_is_identity():
    rng = np.random.default_rng(52)
    vol = random_volume(rng)
    img = np.add.outer(np.arange(5), np.arange(7)) * 0.01  # varies both ways
    arms = build_cross_arms(img, CbcaParams(tau=0.0))
    assert max(a.max() for a in (arms.left, arms.right, arms.up, arms.down)) == 0
    out = cbca_aggregate(vol, arms, arms, 3, -1)
    # single-pixel supports: identical up to the running-sum rounding
    np.testing.assert_allclose(out.cost, vol.cost, rtol=0, atol=1e-14)


@pytest.mark.parametrize("reference,sign", [("left", -1), ("right", 1)])
def test_cbca_matches_support_enumeration(reference, sign):
    rng = np.random.default_rng(53)
    img_ref = np.round(rng.uniform(0, 1, (5, 7)), 1)
    img_other = np.round(rng.uniform(0, 1, (5, 7)), 1)
    params = CbcaParams(tau=0.15, l_max=3)
    arms_ref = build_cross_arms(img_ref, params)
    arms_other = build_cross_arms(img_other, params)
    vol = random_volume(rng, reference=reference)

    ref1 = naive_cbca_once(vol.cost, vol.valid, arms_ref, arms_other, sign, True)
    out1 = cbca_aggregate(vol, arms_ref, arms_other, 1, sign)
    np.testing.assert_allclose(out1.cost[out1.valid],
                               ref1[vol.valid], rtol=1e-12)

    # second iteration flips the sweep order
    ref2 = naive_cbca_once(ref1, vol.valid, arms_ref, arms_other, sign, False)
    out2 = cbca_aggregate(vol, arms_ref, arms_other, 2, sign)
    np.testing.assert_allclose(out2.cost[out2.valid],
                               ref2[vol.valid], rtol=1e-12)


def test_cbca_rejects_bad_sign():
    rng = np.random.default_rng(54)
    vol = random_volume(rng)
    arms = build_cross_arms(np.zeros((5, 7)), CbcaParams())
    with pytest.raises(ConfigError):
        cbca_aggregate(vol, arms, arms, 1, 0)


# -------------------------------------------------------------------- sgm

def sgm_oracle(vol, img, params):
    dirs = SGM_DIRECTIONS_4 if params.paths == 4 else SGM_DIRECTIONS_8
    per_dir = [
        naive_sgm_direction(vol.cost, vol.valid, img, dy, dx,
                            params.p1, params.p2, params.tau_so, params.edge_divisor)
        for dy, dx in dirs
    ]
    return pairwise_mean(per_dir)


@pytest.mark.parametrize("paths", [4, 8])
def test_sgm_matches_pixel_oracle(paths):
    rng = np.random.default_rng(55)
    left = rng.uniform(0, 1, (5, 6))
    right = rng.uniform(0, 1, (5, 6))
    vol = random_volume(rng, h=5, w=6, d_max=3)
    params = SgmParams(p1=0.1, p2=0.5, tau_so=0.05, edge_divisor=4.0, paths=paths)
    out = sgm(vol, left, right, params)
    ref = sgm_oracle(vol, left, params)
    np.testing.assert_allclose(out.cost[vol.valid], ref[vol.valid], rtol=1e-12)
    assert out.max_cost == vol.max_cost + params.p2
    assert (out.cost[~vol.valid] == out.max_cost).all()


def test_sgm_right_reference_reads_right_image():
    rng = np.random.default_rng(56)
    left = rng.uniform(0, 1, (5, 6))
    right = rng.uniform(0, 1, (5, 6))
    vol = random_volume(rng, h=5, w=6, d_max=3, reference="right")
    params = SgmParams(p1=0.1, p2=0.4, tau_so=0.05, edge_divisor=2.0, paths=4)
    out = sgm(vol, left, right, params)
    ref = sgm_oracle(vol, right, params)
    np.testing.assert_allclose(out.cost[vol.valid], ref[vol.valid], rtol=1e-12)


def test_sgm_zero_penalties_is_identity():
    rng = np.random.default_rng(57)
    left = rng.uniform(0, 1, (5, 6))
    right = rng.uniform(0, 1, (5, 6))
    vol = random_volume(rng, h=5, w=6, d_max=3)
    out = sgm(vol, left, right, SgmParams(p1=0.0, p2=0.0))
    assert np.array_equal(out.cost, vol.cost)
    assert np.array_equal(out.valid, vol.valid)


def test_sgm_constant_fully_valid_volume_unchanged():
    h, w, nd = 4, 6, 4
    cost = np.full((h, w, nd), 0.25)
    vol = CostVolume(cost=cost, valid=np.ones((h, w, nd), dtype=bool),
                     max_cost=1.0, reference="left")
    img = np.random.default_rng(58).uniform(0, 1, (h, w))
    out = sgm(vol, img, img, SgmParams(p1=0.05, p2=0.2))
    np.testing.assert_allclose(out.cost, 0.25, atol=1e-15)


def test_sgm_bounded_deviation():
    rng = np.random.default_rng(59)
    left = rng.uniform(0, 1, (6, 8))
    right = rng.uniform(0, 1, (6, 8))
    vol = random_volume(rng, h=6, w=8, d_max=4)
    params = SgmParams(p1=0.02, p2=0.3)
    out = sgm(vol, left, right, params)
    lo = vol.cost[vol.valid]
    hi = lo + params.p2
    got = out.cost[vol.valid]
    assert (got >= lo - 1e-12).all() and (got <= hi + 1e-12).all()


def test_sgm_edge_divisor_is_live():
    rng = np.random.default_rng(60)
    left = np.round(rng.uniform(0, 1, (5, 6)), 1)
    right = np.round(rng.uniform(0, 1, (5, 6)), 1)
    vol = random_volume(rng, h=5, w=6, d_max=3)
    base = dict(p1=0.05, p2=0.4, tau_so=0.05, paths=4)
    a = sgm(vol, left, right, SgmParams(edge_divisor=1.0, **base))
    b = sgm(vol, left, right, SgmParams(edge_divisor=8.0, **base))
    assert not np.array_equal(a.cost, b.cost)


def test_sgm_params_validation():
    with pytest.raises(ConfigError):
        SgmParams(p1=0.5, p2=0.3).validate()
    with pytest.raises(ConfigError):
        SgmParams(p1=-0.1).validate()
    with pytest.raises(ConfigError):
        SgmParams(paths=6).validate()
    with pytest.raises(ConfigError):
        SgmParams(edge_divisor=0.5).validate()
    SgmParams(p1=0.0, p2=0.0).validate()


# --------------------------------------------------------------- combined

def test_optimize_volume_composition():
    rng = np.random.default_rng(61)
    left = np.round(rng.uniform(0, 1, (5, 7)), 1)
    right = np.round(rng.uniform(0, 1, (5, 7)), 1)
    vol = random_volume(rng, h=5, w=7, d_max=3)
    cbca = CbcaParams(tau=0.15, l_max=3, iterations_pre=1, iterations_post=0)
    sgm_p = SgmParams(p1=0.05, p2=0.3)

    arms_l = build_cross_arms(left, cbca)
    arms_r = build_cross_arms(right, cbca)
    manual = cbca_aggregate(vol, arms_l, arms_r, 1, -1)
    manual = sgm(manual, left, right, sgm_p)

    out = optimize_volume(vol, left, right, cbca, sgm_p)
    assert np.array_equal(out.cost, manual.cost)
    assert out.reference == "left" and out.max_cost == vol.max_cost + sgm_p.p2


def test_optimize_volume_right_reference():
    rng = np.random.default_rng(62)
    left = rng.uniform(0, 1, (5, 7))
    right = rng.uniform(0, 1, (5, 7))
    vol = random_volume(rng, h=5, w=7, d_max=3, reference="right")
    out = optimize_volume(vol, left, right,
                          CbcaParams(l_max=3), SgmParams())
    assert out.reference == "right"
    assert np.array_equal(out.valid, vol.valid)
    out.validate()

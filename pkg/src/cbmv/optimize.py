"""Volume optimization: cross-based aggregation and semi-global matching.

The fused volume is smoothed in three steps — cross-based cost
aggregation (CBCA), semi-global matching (SGM), CBCA again — each
operating on whichever reference frame the volume carries, so the left
and right volumes are optimized independently with the roles of the two
images exchanged.

CBCA averages each hypothesis over an adaptive cross-shaped support
region: arms grow from every pixel while the intensity stays within tau
of both the anchor and the previous arm pixel, and the support of
hypothesis (x, d) is the intersection of the reference-image cross at x
with the other-image cross at the matching column.  Aggregation runs
horizontal-then-vertical on even iterations and vertical-then-horizontal
on odd ones.

SGM sweeps scanline paths through the volume accumulating

    L_r(p, d) = C(p, d) + min(L_r(p-r, d),
                              L_r(p-r, d-1) + P1,
                              L_r(p-r, d+1) + P1,
                              min_k L_r(p-r, k) + P2) - min_k L_r(p-r, k)

with P2 softened (divided by edge_divisor) across intensity edges of
the reference image.  Directions are averaged, not summed, so the
output scale does not depend on the path count; per-cell values stay
within [C, C + P2], hence the output volume's max_cost grows by p2.

Computation note: the update is evaluated as C + (best - min_k), which
makes the zero-penalty case an exact identity, and the direction
average is a pairwise reduction so averaging identical path results is
also exact.  The naive reference recurrence in the test suite follows
the same two conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .volume import CostVolume, check_gray_image, empty_volume

SGM_DIRECTIONS_4 = ((0, 1), (0, -1), (1, 0), (-1, 0))
SGM_DIRECTIONS_8 = SGM_DIRECTIONS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass
class CbcaParams:
    tau: float = 0.08
    l_max: int = 14
    iterations_pre: int = 2
    iterations_post: int = 2

    def validate(self):
        if self.tau < 0:
            raise ConfigError("cbca.tau must be >= 0")
        if self.l_max < 0:
            raise ConfigError("cbca.l_max must be >= 0")
        if self.iterations_pre < 0 or self.iterations_post < 0:
            raise ConfigError("cbca iteration counts must be >= 0")
        return self


@dataclass
class SgmParams:
    p1: float = 0.03
    p2: float = 0.3
    tau_so: float = 0.08
    edge_divisor: float = 4.0
    paths: int = 4

    def validate(self):
        # p1 = p2 = 0 is admitted deliberately: it switches smoothing off
        # and must reproduce the input volume exactly
        if not 0 <= self.p1 <= self.p2:
            raise ConfigError("sgm penalties must satisfy 0 <= p1 <= p2")
        if self.tau_so < 0:
            raise ConfigError("sgm.tau_so must be >= 0")
        if self.edge_divisor < 1:
            raise ConfigError("sgm.edge_divisor must be >= 1")
        if self.paths not in (4, 8):
            raise ConfigError("sgm.paths must be 4 or 8")
        return self


@dataclass
class CrossArms:
    """Per-pixel arm lengths; arm pixels satisfy the similarity rule."""

    left: np.ndarray
    right: np.ndarray
    up: np.ndarray
    down: np.ndarray


def build_cross_arms(img, params: CbcaParams) -> CrossArms:
    """Grow the four support arms of every pixel.

    A step to the next pixel q is taken while |I(q) - I(p)| <= tau,
    |I(q) - I(q_prev)| <= tau, the image border is not crossed, and the
    arm is shorter than l_max.
    """
    img = check_gray_image(img)
    params.validate()
    h, w = img.shape
    arms = {}
    for name, (dy, dx) in (("left", (0, -1)), ("right", (0, 1)),
                           ("up", (-1, 0)), ("down", (1, 0))):
        length = np.zeros((h, w), dtype=np.int32)
        alive = np.ones((h, w), dtype=bool)
        for step in range(1, params.l_max + 1):
            oy, ox = dy * step, dx * step
            inside = np.zeros((h, w), dtype=bool)
            ys = slice(max(0, -oy), min(h, h - oy))
            xs = slice(max(0, -ox), min(w, w - ox))
            inside[ys, xs] = True
            q = np.roll(img, (-oy, -ox), axis=(0, 1))
            q_prev = np.roll(img, (-(oy - dy), -(ox - dx)), axis=(0, 1))
            ok = (np.abs(q - img) <= params.tau) & (np.abs(q - q_prev) <= params.tau)
            alive = alive & inside & ok
            length += alive
        arms[name] = length
    return CrossArms(**arms)


def _shift_arms(plane, d, sign, width):
    """Arm lengths of the other image at column x + sign*d, clipped gather."""
    cols = np.clip(np.arange(width) + sign * d, 0, width - 1)
    return plane[:, cols]


def _segment_sum(values, lo_arm, hi_arm, axis):
    """Per-pixel sums over [i - lo_arm, i + hi_arm] along an axis."""
    if axis == 0:
        values = values.T
        lo_arm = lo_arm.T
        hi_arm = hi_arm.T
    h, w = values.shape
    cs = np.zeros((h, w + 1), dtype=np.float64)
    np.cumsum(values, axis=1, out=cs[:, 1:])
    idx = np.arange(w)
    out = cs[np.arange(h)[:, None], idx + hi_arm + 1] - cs[np.arange(h)[:, None], idx - lo_arm]
    return out.T if axis == 0 else out


def cbca_aggregate(vol: CostVolume, arms_ref: CrossArms, arms_other: CrossArms,
                   iterations, disparity_sign) -> CostVolume:
    """Average each hypothesis over its combined cross support.

    ``disparity_sign`` is -1 for a left-referenced volume (the matching
    other-image column is x - d) and +1 for a right-referenced one.
    Even iterations sum horizontal segments first and then stack them
    vertically; odd iterations do the transpose.  Only valid cells
    contribute to or receive averages; invalid cells pass through.
    """
    if disparity_sign not in (-1, 1):
        raise ConfigError("disparity_sign must be -1 or +1")
    h, w = vol.height, vol.width
    cost = vol.cost.copy()
    for it in range(iterations):
        new_cost = cost.copy()
        for d in range(vol.d_max + 1):
            m = vol.valid[:, :, d]
            if not m.any():
                continue
            comb = {
                name: np.minimum(
                    getattr(arms_ref, name),
                    _shift_arms(getattr(arms_other, name), d, disparity_sign, w),
                )
                for name in ("left", "right", "up", "down")
            }
            vals = np.where(m, cost[:, :, d], 0.0)
            cnt = m.astype(np.float64)
            if it % 2 == 0:
                s = _segment_sum(vals, comb["left"], comb["right"], axis=1)
                c = _segment_sum(cnt, comb["left"], comb["right"], axis=1)
                s = _segment_sum(s, comb["up"], comb["down"], axis=0)
                c = _segment_sum(c, comb["up"], comb["down"], axis=0)
            else:
                s = _segment_sum(vals, comb["up"], comb["down"], axis=0)
                c = _segment_sum(cnt, comb["up"], comb["down"], axis=0)
                s = _segment_sum(s, comb["left"], comb["right"], axis=1)
                c = _segment_sum(c, comb["left"], comb["right"], axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                mean = s / c
            new_cost[:, :, d] = np.where(m & (c > 0), mean, cost[:, :, d])
        cost = new_cost
    return CostVolume(cost=cost, valid=vol.valid.copy(), max_cost=vol.max_cost,
                      reference=vol.reference)


def _pairwise_mean(arrs):
    items = list(arrs)
    while len(items) > 1:
        items = [items[i] + items[i + 1] if i + 1 < len(items) else items[i]
                 for i in range(0, len(items), 2)]
    return items[0] / len(arrs)


def _sgm_direction(cost, valid, img, dy, dx, p1, p2, tau_so, edge_divisor):
    """Accumulate one path direction; returns L_r with invalid cells at 0."""
    h, w, nd = cost.shape
    big = np.inf
    c = np.where(valid, cost, big)
    out = np.zeros_like(cost)

    # traverse rows (or columns) in path order, carrying the previous
    # scanline of accumulated costs shifted by the path's column step
    if dy == 0:
        # pure horizontal: iterate over columns, vectorized across rows
        xs = range(w) if dx > 0 else range(w - 1, -1, -1)
        prev = None
        prev_img = None
        for x in xs:
            cur = c[:, x, :]
            if prev is None:
                acc = cur
            else:
                p2_eff = np.where(np.abs(img[:, x] - prev_img) > tau_so,
                                  p2 / edge_divisor, p2)[:, None]
                acc = _sgm_step(cur, prev, p1, p2_eff)
            out[:, x, :] = np.where(valid[:, x, :], acc, 0.0)
            prev = np.where(valid[:, x, :], acc, big)
            prev_img = img[:, x]
        return out

    ys = range(h) if dy > 0 else range(h - 1, -1, -1)
    prev_row = None
    prev_img_row = None
    for y in ys:
        cur = c[y]
        if prev_row is None:
            acc = cur
        else:
            prev = _shift_scanline(prev_row, dx, big)
            pimg = _shift_scanline(prev_img_row[:, None], dx, np.nan)[:, 0]
            with np.errstate(invalid="ignore"):
                edge = np.abs(img[y] - pimg) > tau_so
            p2_eff = np.where(edge, p2 / edge_divisor, p2)[:, None]
            acc = _sgm_step(cur, prev, p1, p2_eff)
        out[y] = np.where(valid[y], acc, 0.0)
        prev_row = np.where(valid[y], acc, big)
        prev_img_row = img[y]
    return out


def _shift_scanline(row, dx, fill):
    """Shift a (W, D) scanline by the path's column step; no wraparound."""
    if dx == 0:
        return row
    out = np.full_like(row, fill)
    if dx > 0:
        out[dx:] = row[:-dx]
    else:
        out[:dx] = row[-dx:]
    return out


def _sgm_step(cur, prev, p1, p2_eff):
    """One recurrence step; `prev` holds inf at cells with no valid path."""
    minprev = prev.min(axis=-1, keepdims=True)
    same = prev
    down = np.full_like(prev, np.inf)
    up = np.full_like(prev, np.inf)
    down[:, 1:] = prev[:, :-1] + p1
    up[:, :-1] = prev[:, 1:] + p1
    best = np.minimum(np.minimum(same, down), np.minimum(up, minprev + p2_eff))
    with np.errstate(invalid="ignore"):
        acc = cur + (best - minprev)
    return np.where(np.isfinite(minprev), acc, cur)


def sgm(vol: CostVolume, left, right, params: SgmParams) -> CostVolume:
    """Semi-global smoothing of a volume; average over path directions.

    Edge-adaptive P2 reads the image matching the volume's reference
    frame; the other image is accepted for interface symmetry.
    """
    params.validate()
    img = check_gray_image(left if vol.reference == "left" else right)
    if img.shape != (vol.height, vol.width):
        raise ConfigError("image and volume dimensions disagree")
    dirs = SGM_DIRECTIONS_4 if params.paths == 4 else SGM_DIRECTIONS_8
    per_dir = [
        _sgm_direction(vol.cost, vol.valid, img, dy, dx,
                       params.p1, params.p2, params.tau_so, params.edge_divisor)
        for dy, dx in dirs
    ]
    mean = _pairwise_mean(per_dir)
    out = empty_volume(vol.height, vol.width, vol.d_max,
                       vol.max_cost + params.p2, vol.reference)
    out.cost[vol.valid] = mean[vol.valid]
    return out


def optimize_volume(vol: CostVolume, left, right, cbca: CbcaParams | None = None,
                    sgm_params: SgmParams | None = None) -> CostVolume:
    """CBCA, then SGM, then CBCA again, in the volume's own frame."""
    cbca = (cbca or CbcaParams()).validate()
    sgm_params = (sgm_params or SgmParams()).validate()
    left = check_gray_image(left)
    right = check_gray_image(right)
    if vol.reference == "left":
        ref_img, other_img, sign = left, right, -1
    else:
        ref_img, other_img, sign = right, left, 1
    arms_ref = build_cross_arms(ref_img, cbca)
    arms_other = build_cross_arms(other_img, cbca)
    out = cbca_aggregate(vol, arms_ref, arms_other, cbca.iterations_pre, sign)
    out = sgm(out, left, right, sgm_params)
    out = cbca_aggregate(out, arms_ref, arms_other, cbca.iterations_post, sign)
    return out

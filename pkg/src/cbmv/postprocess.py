"""Disparity extraction and map clean-up.

The chain runs winner-takes-all on both optimized volumes, refines to
sub-pixel precision with a parabola through the three costs around each
winner, cross-checks the two maps to classify every pixel as valid,
occluded, or mismatched, fills the invalidated pixels geometrically,
and finishes with a median and a joint bilateral filter guided by the
reference image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .volume import CostVolume, check_gray_image


class PixelStatus(IntEnum):
    VALID = 0
    OCCLUSION = 1
    MISMATCH = 2


# nearest-valid search directions for mismatch filling: 16 roughly
# equally spaced integer steps around the circle
FILL_DIRECTIONS = (
    (0, 1), (1, 2), (1, 1), (2, 1),
    (1, 0), (2, -1), (1, -1), (1, -2),
    (0, -1), (-1, -2), (-1, -1), (-2, -1),
    (-1, 0), (-2, 1), (-1, 1), (-1, 2),
)


@dataclass
class PostParams:
    median_window: int = 5
    bilateral_spatial_sigma: float = 5.0
    bilateral_range_sigma: float = 0.03

    def validate(self):
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ConfigError("post.median_window must be a positive odd integer")
        if self.bilateral_spatial_sigma <= 0 or self.bilateral_range_sigma <= 0:
            raise ConfigError("bilateral sigmas must be positive")
        return self


def wta(vol: CostVolume) -> np.ndarray:
    """Per-pixel disparity with the minimum valid cost; ties to smaller d."""
    cost = np.where(vol.valid, vol.cost, np.inf)
    return np.argmin(cost, axis=2).astype(np.float64)


def subpixel_refine(dmap, vol: CostVolume) -> np.ndarray:
    """Parabolic interpolation around each integer winner.

    d' = d - (C(d+1) - C(d-1)) / (2 (C(d+1) - 2 C(d) + C(d-1))),
    applied only where both neighbor hypotheses are valid and the
    neighborhood is strictly convex; the offset is clamped to ±0.5.
    """
    d0 = np.rint(dmap).astype(np.int64)
    h, w = d0.shape
    ys, xs = np.mgrid[0:h, 0:w]
    inner = (d0 >= 1) & (d0 <= vol.d_max - 1)
    dm = np.clip(d0 - 1, 0, vol.d_max)
    dp = np.clip(d0 + 1, 0, vol.d_max)
    ok = inner & vol.valid[ys, xs, dm] & vol.valid[ys, xs, dp]
    cm = vol.cost[ys, xs, dm]
    c0 = vol.cost[ys, xs, d0]
    cp = vol.cost[ys, xs, dp]
    denom = cp - 2.0 * c0 + cm
    ok &= denom > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        offset = np.clip(-(cp - cm) / (2.0 * denom), -0.5, 0.5)
    return np.where(ok, d0 + offset, np.asarray(dmap, dtype=np.float64))


def lr_check(left_map, right_map, d_max=None):
    """Classify left pixels by agreement with the right map.

    valid:    |d_L(x) - d_R(x - round(d_L(x)))| <= 1
    mismatch: not valid, but some integer d' in [0, d_max] satisfies
              |d' - d_R(x - d')| <= 1
    occlusion: everything else.

    Candidates falling outside the right map never validate.  d_max
    defaults to the ceiling of the largest disparity in either map.
    """
    left_map = np.asarray(left_map, dtype=np.float64)
    right_map = np.asarray(right_map, dtype=np.float64)
    if left_map.shape != right_map.shape:
        raise ConfigError("left and right maps differ in size")
    if d_max is None:
        d_max = int(math.ceil(max(left_map.max(initial=0.0),
                                  right_map.max(initial=0.0))))
    h, w = left_map.shape
    xs = np.arange(w)[None, :]

    dl = np.rint(left_map).astype(np.int64)
    src = xs - dl
    inb = src >= 0
    rr = np.take_along_axis(right_map, np.clip(src, 0, w - 1), axis=1)
    valid = inb & (np.abs(left_map - rr) <= 1.0)

    consistent_any = np.zeros((h, w), dtype=bool)
    for d in range(d_max + 1):
        if d >= w:
            break
        cand = np.zeros((h, w), dtype=bool)
        cand[:, d:] = np.abs(d - right_map[:, : w - d]) <= 1.0
        consistent_any |= cand

    status = np.full((h, w), PixelStatus.OCCLUSION, dtype=np.int8)
    status[consistent_any] = PixelStatus.MISMATCH
    status[valid] = PixelStatus.VALID
    return status


def _row_fill_background(dmap, valid):
    """Nearest valid value to the left, falling back to the right."""
    h, w = dmap.shape
    idx = np.where(valid, np.arange(w)[None, :], -1)
    left_src = np.maximum.accumulate(idx, axis=1)
    idx = np.where(valid, np.arange(w)[None, :], w)
    right_src = np.minimum.accumulate(idx[:, ::-1], axis=1)[:, ::-1]
    rows = np.arange(h)[:, None]
    out = np.where(
        left_src >= 0,
        dmap[rows, np.clip(left_src, 0, w - 1)],
        np.where(right_src < w, dmap[rows, np.clip(right_src, 0, w - 1)], np.nan),
    )
    return out


def fill_invalid(dmap, status, img=None):
    """Replace occlusion and mismatch pixels with interpolated disparities.

    Occlusions take the nearest valid disparity to the left along the
    row (they expose background, which sits leftward of the occluder);
    rows with no valid pixel copy the fill of the nearest valid row.
    Mismatches take the median of the nearest valid disparity along the
    16 fill directions.  All sources are original valid pixels; the
    guide image is accepted for interface stability but the fills are
    purely geometric.
    """
    dmap = np.asarray(dmap, dtype=np.float64)
    status = np.asarray(status)
    if dmap.shape != status.shape:
        raise ConfigError("map and status differ in size")
    h, w = dmap.shape
    valid = status == PixelStatus.VALID
    out = dmap.copy()

    bg = _row_fill_background(dmap, valid)
    row_has = valid.any(axis=1)
    if not row_has.all():
        if not row_has.any():
            bg = np.where(np.isnan(bg), 0.0, bg)
        else:
            good_rows = np.nonzero(row_has)[0]
            for y in np.nonzero(~row_has)[0]:
                nearest = good_rows[np.argmin(np.abs(good_rows - y))]
                bg[y] = bg[nearest]
    occ = status == PixelStatus.OCCLUSION
    out[occ] = bg[occ]

    mis_ys, mis_xs = np.nonzero(status == PixelStatus.MISMATCH)
    max_steps = max(h, w)
    for y, x in zip(mis_ys, mis_xs):
        found = []
        for dy, dx in FILL_DIRECTIONS:
            qy, qx = y, x
            for _ in range(max_steps):
                qy += dy
                qx += dx
                if not (0 <= qy < h and 0 <= qx < w):
                    break
                if valid[qy, qx]:
                    found.append(dmap[qy, qx])
                    break
        out[y, x] = np.median(found) if found else bg[y, x]
    return out


def median_filter(dmap, window=5):
    if window < 1 or window % 2 == 0:
        raise ConfigError("median window must be a positive odd integer")
    if window == 1:
        return np.asarray(dmap, dtype=np.float64).copy()
    return ndimage.median_filter(np.asarray(dmap, dtype=np.float64),
                                 size=window, mode="nearest")


def bilateral_filter(dmap, guide, spatial_sigma=5.0, range_sigma=0.03):
    """Edge-preserving smoothing guided by the reference image.

    Weights are the product of a spatial Gaussian (truncated at radius
    ceil(2 sigma)) and a Gaussian on guide-intensity differences,
    normalized per pixel over the in-bounds neighborhood.
    """
    dmap = np.asarray(dmap, dtype=np.float64)
    guide = check_gray_image(guide)
    if dmap.shape != guide.shape:
        raise ConfigError("map and guide differ in size")
    if spatial_sigma <= 0 or range_sigma <= 0:
        raise ConfigError("bilateral sigmas must be positive")
    radius = int(math.ceil(2.0 * spatial_sigma))
    h, w = dmap.shape
    acc = np.zeros((h, w), dtype=np.float64)
    norm = np.zeros((h, w), dtype=np.float64)
    inv2ss = 1.0 / (2.0 * spatial_sigma * spatial_sigma)
    inv2rs = 1.0 / (2.0 * range_sigma * range_sigma)
    for dy in range(-radius, radius + 1):
        y0, y1 = max(0, -dy), min(h, h - dy)
        if y0 >= y1:
            continue
        ys_dst = slice(y0, y1)
        ys_src = slice(y0 + dy, y1 + dy)
        for dx in range(-radius, radius + 1):
            x0, x1 = max(0, -dx), min(w, w - dx)
            if x0 >= x1:
                continue
            xs_dst = slice(x0, x1)
            xs_src = slice(x0 + dx, x1 + dx)
            ws = math.exp(-(dy * dy + dx * dx) * inv2ss)
            dg = guide[ys_dst, xs_dst] - guide[ys_src, xs_src]
            wgt = ws * np.exp(-(dg * dg) * inv2rs)
            acc[ys_dst, xs_dst] += wgt * dmap[ys_src, xs_src]
            norm[ys_dst, xs_dst] += wgt
    return acc / norm


def postprocess_pipeline(left_vol: CostVolume, right_vol: CostVolume,
                         left_img, right_img, params: PostParams | None = None,
                         collect_stages=None):
    """Full map extraction; returns the final left disparity map.

    When ``collect_stages`` is a dict it receives copies of every
    intermediate product keyed by stage name.
    """
    params = (params or PostParams()).validate()
    left_img = check_gray_image(left_img)
    d_max = left_vol.d_max

    def keep(name, value):
        if collect_stages is not None:
            collect_stages[name] = value.copy()

    dl = wta(left_vol)
    dr = wta(right_vol)
    keep("wta_left", dl)
    keep("wta_right", dr)
    dl = subpixel_refine(dl, left_vol)
    dr = subpixel_refine(dr, right_vol)
    keep("subpixel_left", dl)
    keep("subpixel_right", dr)
    status = lr_check(dl, dr, d_max=d_max)
    keep("status", status.astype(np.float64))
    dl = fill_invalid(dl, status, left_img)
    keep("filled", dl)
    dl = median_filter(dl, params.median_window)
    keep("median", dl)
    dl = bilateral_filter(dl, left_img, params.bilateral_spatial_sigma,
                          params.bilateral_range_sigma)
    keep("bilateral", dl)
    out = np.clip(dl, 0.0, float(d_max))
    keep("final", out)
    return out

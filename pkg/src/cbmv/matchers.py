"""The four raw block matchers: NCC, CENSUS, ZSAD and Sobel-SAD.

Each matcher produces a left-referenced :class:`~cbmv.volume.CostVolume`
whose valid costs are finite, non-negative and bounded by the matcher's
declared maximum.  Costs are stored on their raw scales: CENSUS in
Hamming units, ZSAD and SOBEL in intensity units, NCC mapped to [0, 1].

Window statistics use replicate padding in each image's own frame, so a
window centred near a border re-samples that image's edge pixels.  The
vectorized volume routines below reproduce, bit for bit in exact
arithmetic, a per-hypothesis window comparison under that rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import ConfigError
from .volume import CostVolume, check_gray_image, empty_volume

MATCHER_ORDER = ("ncc", "census", "zsad", "sobel")

# Window variance at or below this is treated as zero (NCC undefined -> 0).
NCC_VAR_EPS = 1e-12

SOBEL_KERNEL = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


@dataclass
class MatcherParams:
    """Square window side lengths, all odd and >= 3."""

    ncc_window: int = 3
    zsad_window: int = 5
    census_window: int = 11
    sobel_window: int = 5

    def validate(self):
        for name in ("ncc_window", "zsad_window", "census_window", "sobel_window"):
            w = getattr(self, name)
            if w < 3 or w % 2 == 0:
                raise ConfigError(f"{name} must be odd and >= 3, got {w}")
        return self


def _pad(img, r):
    return np.pad(img, r, mode="edge")


def _shift_columns(plane, d):
    """Shift columns right by d, replicating the first column into the gap.

    Only columns >= d of the result are meaningful for valid hypotheses;
    the replicated gap never reaches a valid output window.
    """
    if d == 0:
        return plane
    out = np.empty_like(plane)
    out[:, d:] = plane[:, :-d]
    out[:, :d] = plane[:, :1]
    return out


def _box_sum(padded, window):
    """Exact window sums of an edge-padded plane; returns the unpadded size."""
    v = sliding_window_view(padded, (window, window))
    return v.sum(axis=(-2, -1))


def census_transform(img, window):
    """Per-pixel census bit strings of length window**2 - 1.

    Bit k is 1 iff the k-th neighbour (row-major scan of the window,
    centre excluded) is strictly darker than the centre; ties give 0.
    Borders replicate.  Returns a (H, W, window**2 - 1) bool array.
    """
    img = check_gray_image(img)
    if window < 3 or window % 2 == 0:
        raise ConfigError(f"census window must be odd and >= 3, got {window}")
    h, w = img.shape
    r = window // 2
    padded = _pad(img, r)
    bits = np.empty((h, w, window * window - 1), dtype=bool)
    k = 0
    for dy in range(window):
        for dx in range(window):
            if dy == r and dx == r:
                continue
            bits[:, :, k] = padded[dy : dy + h, dx : dx + w] < img
            k += 1
    return bits


def cost_volume_census(left, right, d_max, params: MatcherParams) -> CostVolume:
    """Hamming distance between left and right census strings."""
    left = check_gray_image(left)
    right = check_gray_image(right)
    if left.shape != right.shape:
        raise ConfigError("left and right images must have the same shape")
    win = params.census_window
    h, w = left.shape
    bits_l = census_transform(left, win)
    bits_r = census_transform(right, win)
    vol = empty_volume(h, w, d_max, max_cost=float(win * win - 1))
    for d in range(min(d_max, w - 1) + 1):
        n = w - d
        diff = bits_l[:, d:, :] != bits_r[:, :n, :]
        vol.cost[:, d:, d] = np.count_nonzero(diff, axis=2)
    return vol


def cost_volume_ncc(left, right, d_max, params: MatcherParams) -> CostVolume:
    """(1 - ncc) / 2 with zero-mean normalized cross-correlation.

    A window with (numerically) zero variance on either side yields
    ncc = 0, i.e. cost 0.5: no evidence either way.
    """
    left = check_gray_image(left)
    right = check_gray_image(right)
    if left.shape != right.shape:
        raise ConfigError("left and right images must have the same shape")
    win = params.ncc_window
    r = win // 2
    n = win * win
    h, w = left.shape

    lp = _pad(left, r)
    rp = _pad(right, r)
    mean_l = _box_sum(lp, win) / n
    mean_r = _box_sum(rp, win) / n
    var_l = np.maximum(_box_sum(lp * lp, win) / n - mean_l**2, 0.0)
    var_r = np.maximum(_box_sum(rp * rp, win) / n - mean_r**2, 0.0)

    vol = empty_volume(h, w, d_max, max_cost=1.0)
    for d in range(min(d_max, w - 1) + 1):
        rp_d = _shift_columns(rp, d)
        cross = _box_sum(lp * rp_d, win) / n
        mr = _shift_columns(mean_r, d)
        vr = _shift_columns(var_r, d)
        denom2 = var_l * vr
        with np.errstate(invalid="ignore", divide="ignore"):
            ncc = (cross - mean_l * mr) / np.sqrt(denom2)
        ncc[(var_l <= NCC_VAR_EPS) | (vr <= NCC_VAR_EPS)] = 0.0
        np.clip(ncc, -1.0, 1.0, out=ncc)
        vol.cost[:, d:, d] = ((1.0 - ncc) / 2.0)[:, d:]
    return vol


def cost_volume_zsad(left, right, d_max, params: MatcherParams) -> CostVolume:
    """Zero-mean sum of absolute differences over the window."""
    left = check_gray_image(left)
    right = check_gray_image(right)
    if left.shape != right.shape:
        raise ConfigError("left and right images must have the same shape")
    win = params.zsad_window
    r = win // 2
    n = win * win
    h, w = left.shape

    lp = _pad(left, r)
    rp = _pad(right, r)
    mean_l = _box_sum(lp, win) / n
    mean_r = _box_sum(rp, win) / n

    vol = empty_volume(h, w, d_max, max_cost=float(n))
    for d in range(min(d_max, w - 1) + 1):
        diff = lp - _shift_columns(rp, d)
        m = mean_l - _shift_columns(mean_r, d)
        acc = np.zeros((h, w))
        for dy in range(win):
            for dx in range(win):
                acc += np.abs(diff[dy : dy + h, dx : dx + w] - m)
        vol.cost[:, d:, d] = acc[:, d:]
    return vol


def sobel_horizontal(img):
    """Horizontal Sobel response with replicate borders (values unbounded)."""
    img = check_gray_image(img)
    return ndimage.correlate(img, SOBEL_KERNEL, mode="nearest")


def cost_volume_sobel_sad(left, right, d_max, params: MatcherParams) -> CostVolume:
    """SAD between the horizontal Sobel responses of the two images."""
    left = check_gray_image(left)
    right = check_gray_image(right)
    if left.shape != right.shape:
        raise ConfigError("left and right images must have the same shape")
    win = params.sobel_window
    r = win // 2
    h, w = left.shape

    sl = _pad(sobel_horizontal(left), r)
    sr = _pad(sobel_horizontal(right), r)

    vol = empty_volume(h, w, d_max, max_cost=float(win * win * 8))
    for d in range(min(d_max, w - 1) + 1):
        diff = sl - _shift_columns(sr, d)
        acc = np.zeros((h, w))
        for dy in range(win):
            for dx in range(win):
                acc += np.abs(diff[dy : dy + h, dx : dx + w])
        vol.cost[:, d:, d] = acc[:, d:]
    return vol


def compute_matcher_volumes(left, right, d_max, params: MatcherParams | None = None):
    """All four matcher volumes keyed by name, in the fixed matcher order."""
    params = (params or MatcherParams()).validate()
    return {
        "ncc": cost_volume_ncc(left, right, d_max, params),
        "census": cost_volume_census(left, right, d_max, params),
        "zsad": cost_volume_zsad(left, right, d_max, params),
        "sobel": cost_volume_sobel_sad(left, right, d_max, params),
    }

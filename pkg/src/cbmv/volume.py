"""Core containers and coordinate conventions for matching volumes.

Images are 2D float arrays with intensities in [0, 1].  A matching
hypothesis pairs a left-image column ``x_L`` with the right-image column
``x_R = x_L - d`` on the same row; candidate disparities are the
integers ``0..d_max``.  Volumes are stored as (height, width, d_max + 1)
arrays with disparity innermost.

A volume is indexed either by left columns (``reference == "left"``,
cell (y, x_L, d) valid iff ``x_L - d >= 0``) or by right columns
(``reference == "right"``, cell (y, x_R, d) valid iff ``x_R + d <
width``).  Invalid cells hold the volume's ``max_cost`` sentinel and are
skipped by every downstream minimum or summation.

Disparity maps are 2D float arrays; negative values mean "invalid"
(see ``INVALID_DISP``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

INVALID_DISP = -1.0


@dataclass
class CostVolume:
    """Per-hypothesis matching costs with a validity mask.

    cost:      (H, W, d_max + 1) float64, invalid cells hold ``max_cost``
    valid:     same shape, bool
    max_cost:  the matcher's declared maximum cost (sentinel value)
    reference: "left" or "right"; which image the column axis indexes
    """

    cost: np.ndarray
    valid: np.ndarray
    max_cost: float
    reference: str = field(default="left")

    @property
    def height(self):
        return self.cost.shape[0]

    @property
    def width(self):
        return self.cost.shape[1]

    @property
    def d_max(self):
        return self.cost.shape[2] - 1

    def validate(self):
        if self.cost.ndim != 3 or self.valid.shape != self.cost.shape:
            raise DataError("cost and valid must be 3D arrays of equal shape")
        if self.reference not in ("left", "right"):
            raise DataError(f"unknown reference {self.reference!r}")
        expected = hypothesis_mask(self.height, self.width, self.d_max, self.reference)
        if not np.array_equal(self.valid, expected):
            raise DataError("validity mask does not match the disparity range rule")
        v = self.cost[self.valid]
        if v.size and (not np.isfinite(v).all() or (v < 0).any()):
            raise DataError("valid costs must be finite and non-negative")
        return self


def check_gray_image(img):
    """Validate and return a [0, 1] intensity image as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"expected a 2D intensity image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError("image intensities must lie in [0, 1]")
    return arr


def hypothesis_valid(x, d, width):
    """True iff the right-image column x - d exists for left column x."""
    return 0 <= x - d < width


def hypothesis_mask(height, width, d_max, reference="left"):
    """Boolean (H, W, d_max + 1) mask of valid hypotheses."""
    x = np.arange(width)[:, None]
    d = np.arange(d_max + 1)[None, :]
    if reference == "left":
        plane = x - d >= 0
    else:
        plane = x + d < width
    return np.broadcast_to(plane, (height, width, d_max + 1)).copy()


def empty_volume(height, width, d_max, max_cost, reference="left"):
    """A volume filled with the sentinel cost and the standard validity mask."""
    cost = np.full((height, width, d_max + 1), float(max_cost), dtype=np.float64)
    return CostVolume(
        cost=cost,
        valid=hypothesis_mask(height, width, d_max, reference),
        max_cost=float(max_cost),
        reference=reference,
    )


def shift_to_right_volume(vol: CostVolume) -> CostVolume:
    """Re-index a volume to the opposite reference by shifting d-slices.

    For a left-referenced input the output satisfies
    C_R(x_R, d) = C_L(x_R + d, d) wherever x_R + d < width; cells with
    x_R + d >= width are invalid.  For a right-referenced input the
    slices shift the other way, so applying the operation twice restores
    the original volume on mutually valid cells.  Values are moved,
    never recomputed.
    """
    h, w, nd = vol.cost.shape
    to_right = vol.reference == "left"
    out_ref = "right" if to_right else "left"
    out = empty_volume(h, w, nd - 1, vol.max_cost, out_ref)
    for d in range(nd):
        if to_right:
            out.cost[:, : w - d, d] = vol.cost[:, d:, d]
        else:
            out.cost[:, d:, d] = vol.cost[:, : w - d, d]
    out.cost[~out.valid] = vol.max_cost
    return out

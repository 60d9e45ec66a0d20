"""Synthetic random-dot stereo pairs with exact dense ground truth.

A left view is built from uniform random texture over a background
plane plus axis-aligned foreground rectangles, each at a constant
integer disparity.  The right view is the warp x_R = x_L - d with the
nearer surface (larger d) winning collisions; left pixels that lose
their target column, or whose target falls off the image, are occluded.
Right columns claimed by nobody receive fresh texture.  An exposure
gain and additive Gaussian noise then distort the right view only.

Before the noise step the construction satisfies, at every non-occluded
pixel, right[y, x - d] == gain * left[y, x] bit for bit; the texture
range [0.1, 0.9] leaves headroom so admissible gains cannot push the
pre-noise right view out of [0, 1] and break that identity through
clipping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

TEXTURE_LO = 0.1
TEXTURE_HI = 0.9
MAX_GAIN = 1.0 / TEXTURE_HI


@dataclass
class Rect:
    x0: int
    y0: int
    width: int
    height: int
    disparity: int


@dataclass
class SynthSpec:
    width: int = 160
    height: int = 120
    d_max: int = 16
    d_bg: int = 0
    rects: list = field(default_factory=list)
    noise_sigma: float = 0.0
    gain: float = 1.0
    seed: int = 0

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("image dimensions must be positive")
        if self.d_max < 0:
            raise ConfigError("d_max must be >= 0")
        if not 0 <= self.d_bg <= self.d_max:
            raise ConfigError("background disparity out of [0, d_max]")
        for i, r in enumerate(self.rects):
            if r.width < 1 or r.height < 1:
                raise ConfigError(f"rectangle {i} has empty extent")
            if r.x0 < 0 or r.y0 < 0 or r.x0 + r.width > self.width \
                    or r.y0 + r.height > self.height:
                raise ConfigError(f"rectangle {i} extends outside the image")
            if not self.d_bg < r.disparity <= self.d_max:
                raise ConfigError(
                    f"rectangle {i} disparity must lie in ({self.d_bg}, {self.d_max}]"
                )
        if not 0 < self.gain <= MAX_GAIN:
            raise ConfigError(
                f"gain must lie in (0, {MAX_GAIN:.4f}] to keep the warped view in range"
            )
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        return self


def synth_stereo(spec: SynthSpec):
    """Generate (left, right, gt, occlusion) for a spec; deterministic per seed."""
    spec.validate()
    h, w = spec.height, spec.width
    rng = np.random.default_rng(spec.seed)

    gt = np.full((h, w), float(spec.d_bg), dtype=np.float64)
    # paint rectangles nearest-last so larger disparities end up on top
    for r in sorted(spec.rects, key=lambda r: r.disparity):
        gt[r.y0 : r.y0 + r.height, r.x0 : r.x0 + r.width] = float(r.disparity)

    left = rng.uniform(TEXTURE_LO, TEXTURE_HI, size=(h, w))
    right = np.zeros((h, w), dtype=np.float64)
    occluded = np.zeros((h, w), dtype=bool)
    claimed = np.zeros((h, w), dtype=bool)
    d_int = gt.astype(np.int64)
    xs = np.arange(w)
    for y in range(h):
        xr = xs - d_int[y]
        inb = xr >= 0
        win_d = np.full(w, -1, dtype=np.int64)
        np.maximum.at(win_d, xr[inb], d_int[y][inb])
        has_winner = win_d >= 0
        src = np.clip(xs + win_d, 0, w - 1)
        right[y][has_winner] = left[y][src[has_winner]]
        claimed[y] = has_winner
        # a left pixel is occluded when its target column is off-image or
        # was taken by a nearer surface
        occluded[y] = ~inb | (win_d[np.clip(xr, 0, w - 1)] != d_int[y])

    n_free = int((~claimed).sum())
    if n_free:
        right[~claimed] = rng.uniform(TEXTURE_LO, TEXTURE_HI, size=n_free)
    right = right * spec.gain
    if spec.noise_sigma > 0:
        right = right + rng.normal(0.0, spec.noise_sigma, size=(h, w))
    right = np.clip(right, 0.0, 1.0)
    return left, right, gt, occluded

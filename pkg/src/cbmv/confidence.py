"""Bidirectional confidence features over the matcher cost volumes.

For every valid hypothesis (y, x, d) and every matcher we extract five
values: the raw cost C, plus a ratio and a likelihood measured along
each of the two epipolar scan lines through the hypothesis.  The "left"
line holds x fixed and varies d (competitors for the left pixel); the
"right" line holds x_R = x - d fixed (competitors for the right pixel).

Right-direction quantities are computed by running the identical
left-direction code on the shifted (right-referenced) volume and
re-indexing the result, which makes the two directions agree with the
volume shift by construction.

Ratio:       R = (c_min + eps) / (C + eps), in (0, 1].
Likelihood:  L = exp(-(C - c_min)^2 / 2 sigma^2) normalized over the
             valid cells of the scan line; sums to 1 per pixel and
             direction.  Extreme cost gaps can underflow to exactly 0
             in float64.

Feature vector layout, fixed for model-file stability: four blocks of
five in matcher order (ncc, census, zsad, sobel), each block
[C, L_left, R_left, L_right, R_right].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FileFormatError
from .matchers import MATCHER_ORDER
from .volume import CostVolume, hypothesis_mask, shift_to_right_volume

RATIO_EPS = 1e-6
N_FEATURES = 20
FEATURE_FILE_MAGIC = b"CBFV"
FEATURE_FILE_VERSION = 1

# Likelihood spread per matcher, on the raw cost scales.  The zsad/sobel
# value presumes 8-bit intensity units; with intensities normalized to
# [0, 1] the equivalent spread is 100/255.  Override in the config when
# feeding differently scaled inputs.
DEFAULT_SIGMA = {
    "ncc": 0.02,
    "census": 8.0,
    "zsad": 100.0 / 255.0,
    "sobel": 100.0 / 255.0,
}


@dataclass
class SigmaParams:
    ncc: float = DEFAULT_SIGMA["ncc"]
    census: float = DEFAULT_SIGMA["census"]
    zsad: float = DEFAULT_SIGMA["zsad"]
    sobel: float = DEFAULT_SIGMA["sobel"]

    def validate(self):
        for name in MATCHER_ORDER:
            if getattr(self, name) <= 0:
                raise ConfigError(f"sigma.{name} must be positive")
        return self

    def for_matcher(self, name):
        return getattr(self, name)


@dataclass
class PixelMinima:
    """Per-pixel minimum valid cost and the smallest disparity attaining it."""

    c_min: np.ndarray
    d_min: np.ndarray


@dataclass
class FeatureVolume:
    """(H, W, d_max + 1, 20) features plus the shared validity mask.

    Invalid hypotheses carry zeros and are excluded from training and
    prediction.
    """

    features: np.ndarray
    valid: np.ndarray

    @property
    def height(self):
        return self.features.shape[0]

    @property
    def width(self):
        return self.features.shape[1]

    @property
    def d_max(self):
        return self.features.shape[2] - 1


def minima_left(vol: CostVolume) -> PixelMinima:
    """Minimum over valid d for each (y, x); ties break to the smallest d."""
    cost = np.where(vol.valid, vol.cost, np.inf)
    d_min = np.argmin(cost, axis=2)
    c_min = np.take_along_axis(cost, d_min[:, :, None], axis=2)[:, :, 0]
    return PixelMinima(c_min=c_min, d_min=d_min)


def minima_right(vol: CostVolume) -> PixelMinima:
    """Minimum along constant x_R = x - d, indexed by x_R.

    Defined as the left-direction minima of the shifted volume.
    """
    return minima_left(shift_to_right_volume(vol))


def _map_right_to_left(plane_xr, width):
    """Re-index a (H, W, D) right-frame volume to left columns: x_R = x - d."""
    out = np.zeros_like(plane_xr)
    for d in range(plane_xr.shape[2]):
        out[:, d:, d] = plane_xr[:, : width - d, d]
    return out


def _ratio_left_frame(vol, minima):
    with np.errstate(invalid="ignore"):
        r = (minima.c_min[:, :, None] + RATIO_EPS) / (vol.cost + RATIO_EPS)
    return np.where(vol.valid, r, 0.0)


def _likelihood_left_frame(vol, minima, sigma):
    diff = vol.cost - minima.c_min[:, :, None]
    num = np.where(vol.valid, np.exp(-(diff**2) / (2.0 * sigma * sigma)), 0.0)
    den = num.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        lik = num / den
    return np.where(vol.valid, lik, 0.0)


def ratio_volume(vol: CostVolume, minima: PixelMinima, direction="left"):
    """Confidence ratio per hypothesis, returned in the volume's own frame.

    direction "left" expects minima from :func:`minima_left`; "right"
    expects minima from :func:`minima_right` and pulls c_min from the
    matching right column of each hypothesis.
    """
    if direction == "left":
        return _ratio_left_frame(vol, minima)
    if direction != "right":
        raise ConfigError(f"unknown direction {direction!r}")
    shifted = shift_to_right_volume(vol)
    r = _ratio_left_frame(shifted, minima)
    return _map_right_to_left(r, vol.width)


def likelihood_volume(vol: CostVolume, minima: PixelMinima, direction, sigma):
    """Cost-curve likelihood per hypothesis, in the volume's own frame.

    The normalizing sum runs over the valid cells of the scan line that
    matches ``direction`` (constant x for "left", constant x_R for
    "right"); invalid cells contribute nothing.
    """
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    if direction == "left":
        return _likelihood_left_frame(vol, minima, sigma)
    if direction != "right":
        raise ConfigError(f"unknown direction {direction!r}")
    shifted = shift_to_right_volume(vol)
    lik = _likelihood_left_frame(shifted, minima, sigma)
    return _map_right_to_left(lik, vol.width)


def confidence_block(vol: CostVolume, sigma):
    """The five feature planes [C, L_left, R_left, L_right, R_right]."""
    ml = minima_left(vol)
    mr = minima_right(vol)
    c = np.where(vol.valid, vol.cost, 0.0)
    block = np.stack(
        [
            c,
            likelihood_volume(vol, ml, "left", sigma),
            ratio_volume(vol, ml, "left"),
            likelihood_volume(vol, mr, "right", sigma),
            ratio_volume(vol, mr, "right"),
        ],
        axis=-1,
    )
    return block


def assemble_features(vols, sigmas: SigmaParams | None = None) -> FeatureVolume:
    """Stack the per-matcher confidence blocks into the 20-feature volume.

    ``vols`` maps matcher name to its cost volume; all four matchers in
    :data:`~cbmv.matchers.MATCHER_ORDER` must be present with identical
    dimensions.
    """
    sigmas = (sigmas or SigmaParams()).validate()
    missing = [m for m in MATCHER_ORDER if m not in vols]
    if missing:
        raise ConfigError(f"missing matcher volumes: {missing}")
    shapes = {vols[m].cost.shape for m in MATCHER_ORDER}
    if len(shapes) != 1:
        raise ConfigError(f"matcher volumes disagree on dimensions: {sorted(shapes)}")
    blocks = [confidence_block(vols[m], sigmas.for_matcher(m)) for m in MATCHER_ORDER]
    features = np.concatenate(blocks, axis=-1)
    return FeatureVolume(features=features, valid=vols[MATCHER_ORDER[0]].valid.copy())


def swap_directions(features):
    """Exchange left- and right-direction features in every matcher block.

    Works on any array whose last axis has length 20; an involution that
    leaves each block's cost entry in place.
    """
    features = np.asarray(features)
    if features.shape[-1] != N_FEATURES:
        raise ConfigError(f"expected a trailing axis of {N_FEATURES} features")
    out = features.copy()
    for b in range(0, N_FEATURES, 5):
        out[..., b + 1 : b + 3] = features[..., b + 3 : b + 5]
        out[..., b + 3 : b + 5] = features[..., b + 1 : b + 3]
    return out


def save_feature_volume(fv: FeatureVolume, path):
    """Write the feature volume as a flat little-endian float32 dump."""
    h, w, nd, nf = fv.features.shape
    with open(path, "wb") as f:
        f.write(FEATURE_FILE_MAGIC)
        f.write(struct.pack("<5I", FEATURE_FILE_VERSION, h, w, nd, nf))
        f.write(fv.features.astype("<f4").tobytes())


def load_feature_volume(path) -> FeatureVolume:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise FileFormatError(f"{path}: {e}")
    with f:
        magic = f.read(4)
        if magic != FEATURE_FILE_MAGIC:
            raise FileFormatError(f"{path}: not a feature volume file")
        header = f.read(20)
        if len(header) != 20:
            raise FileFormatError(f"{path}: truncated header")
        version, h, w, nd, nf = struct.unpack("<5I", header)
        if version != FEATURE_FILE_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if nf != N_FEATURES:
            raise FileFormatError(f"{path}: expected {N_FEATURES} features, got {nf}")
        payload = f.read(h * w * nd * nf * 4)
        if len(payload) != h * w * nd * nf * 4:
            raise FileFormatError(f"{path}: truncated payload")
        features = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    features = features.reshape(h, w, nd, nf)
    return FeatureVolume(features=features, valid=hypothesis_mask(h, w, nd - 1))

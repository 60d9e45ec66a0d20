"""End-to-end orchestration of the stereo pipeline.

Training: per pair, matcher volumes feed the confidence features, a
sampler draws labelled hypotheses around the ground truth, pools from
all pairs are concatenated (optionally doubled with direction-swapped
copies), and one forest is trained on the pool.

Prediction: the forest fuses the features of the left view into a
single matching volume; the right-view volume is obtained purely by
re-indexing that volume, never by a second forest pass, so the two
views agree by construction.  Both volumes are optimized independently
and the post-processing chain cross-checks them into the final map.
"""

from __future__ import annotations

import numpy as np

from .confidence import assemble_features, swap_directions
from .config import PipelineConfig
from .errors import ConfigError
from .forest import (
    ForestModel,
    TrainingSet,
    predict_batch,
    predict_volume,
    sample_training_set,
    train_forest,
)
from .matchers import compute_matcher_volumes
from .optimize import optimize_volume
from .postprocess import postprocess_pipeline, wta
from .volume import check_gray_image, shift_to_right_volume

_MASK64 = 0xFFFFFFFFFFFFFFFF


def compute_feature_volume(left, right, config: PipelineConfig):
    left = check_gray_image(left)
    right = check_gray_image(right)
    if left.shape != right.shape:
        raise ConfigError(f"left {left.shape} and right {right.shape} images differ in size")
    vols = compute_matcher_volumes(left, right, config.d_max, config.matcher)
    return vols, assemble_features(vols, config.sigma)


def train_on_pairs(triples, config: PipelineConfig, threads=1):
    """Train one forest over all (left, right, gt) triples.

    Returns the model plus a summary of the pooled training set.
    """
    if not triples:
        raise ConfigError("at least one training triple is required")
    feats = []
    labels = []
    for i, (left, right, gt) in enumerate(triples):
        _, fv = compute_feature_volume(left, right, config)
        ts = sample_training_set(fv, gt, seed=[config.seed & _MASK64, i])
        feats.append(ts.features)
        labels.append(ts.labels)
    x = np.concatenate(feats, axis=0)
    y = np.concatenate(labels, axis=0)
    if config.forest.swap_augment:
        x = np.concatenate([x, swap_directions(x)], axis=0)
        y = np.concatenate([y, y], axis=0)
    pooled = TrainingSet(features=x, labels=y)
    model = train_forest(pooled, config.forest_params(), threads=threads)
    correct = (predict_batch(model, x) >= 0.5) == (y == 1)
    summary = {
        "n_pairs": len(triples),
        "n_samples": int(pooled.n_samples),
        "n_positive": int(pooled.n_positive),
        "n_negative": int(pooled.n_negative),
        "negatives_per_positive": float(pooled.n_negative / max(pooled.n_positive, 1)),
        "training_accuracy": float(correct.mean()),
        "swap_augment": bool(config.forest.swap_augment),
    }
    return model, summary


def predict_pair(left, right, model: ForestModel, config: PipelineConfig,
                 skip_optimization=False, collect_stages=None):
    """Dense left-view disparity for one rectified pair.

    With ``skip_optimization`` the result is the bare per-pixel argmin
    of the fused volume — no smoothing, cross-checking, or filtering.
    Returns a dict with the final map and the intermediate volumes.
    """
    _, fv = compute_feature_volume(left, right, config)
    cbmv_left = predict_volume(model, fv)
    out = {"cbmv": cbmv_left, "features": fv}
    if skip_optimization:
        out["disparity"] = wta(cbmv_left)
        return out
    cbmv_right = shift_to_right_volume(cbmv_left)
    opt_left = optimize_volume(cbmv_left, left, right, config.cbca, config.sgm)
    opt_right = optimize_volume(cbmv_right, left, right, config.cbca, config.sgm)
    out["optimized_left"] = opt_left
    out["optimized_right"] = opt_right
    out["disparity"] = postprocess_pipeline(opt_left, opt_right, left, right,
                                            config.post, collect_stages)
    return out

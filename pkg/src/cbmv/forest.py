"""Random-forest fusion of the confidence features into a single volume.

A binary classifier is trained on hypotheses sampled around ground
truth (one correct disparity per labelled pixel, two incorrect ones)
and then applied to every valid hypothesis of a feature volume.  The
predicted probability p that a hypothesis is correct becomes the fused
matching cost 1 - p, giving a volume in [0, 1] that downstream
aggregation and semi-global matching consume unchanged.

The forest is classic bagging over greedy CART trees: Gini impurity,
midpoint thresholds between adjacent sorted feature values, a random
feature subset per node.  Trees are stored as flat arrays (leaves point
to themselves) so that whole-volume prediction is a handful of
vectorized gather steps per tree instead of a Python walk per pixel.

Determinism: every tree derives its generator from (seed, tree index),
so serial and thread-pool training produce identical models, and a
fixed seed reproduces the model byte for byte through save/load.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .confidence import FeatureVolume, N_FEATURES
from .errors import (
    ConfigError,
    DegenerateTrainingError,
    EmptyTrainingSetError,
    ModelFormatError,
)
from .volume import INVALID_DISP, CostVolume, empty_volume

MODEL_FILE_TAG = "cbmv-forest"
MODEL_FILE_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = 40
    max_depth: int = 25
    min_samples_leaf: int = 10
    features_per_split: int = 4  # floor(sqrt(20))
    bootstrap: bool = True
    seed: int = 0
    # training-set option: also learn from every sample with its two
    # scan-line directions exchanged (same label), doubling the pool
    swap_augment: bool = False

    def validate(self):
        for name in ("n_trees", "max_depth", "min_samples_leaf", "features_per_split"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"forest.{name} must be a positive integer")
        if self.features_per_split > N_FEATURES:
            raise ConfigError(
                f"forest.features_per_split must be <= {N_FEATURES}"
            )
        return self


@dataclass
class TrainingSet:
    """Sampled hypothesis features (N, 20) with binary labels (N,)."""

    features: np.ndarray
    labels: np.ndarray

    @property
    def n_samples(self):
        return self.labels.shape[0]

    @property
    def n_positive(self):
        return int(self.labels.sum())

    @property
    def n_negative(self):
        return int(self.labels.shape[0] - self.labels.sum())


@dataclass
class Tree:
    """Flat binary tree; node 0 is the root.

    Internal nodes carry a feature index and threshold and route
    x[feature] <= threshold to ``left``.  Leaves have feature -1, carry
    the training-positive fraction in ``value``, and self-loop their
    child links so a fixed number of gather steps settles every sample.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    @property
    def n_nodes(self):
        return self.feature.shape[0]


@dataclass
class ForestModel:
    trees: list = field(default_factory=list)
    format_version: int = MODEL_FILE_VERSION

    def validate(self):
        if not self.trees:
            raise ModelFormatError("model has no trees")
        for t, tree in enumerate(self.trees):
            n = tree.n_nodes
            for j in range(n):
                f = int(tree.feature[j])
                if f == -1:
                    if tree.left[j] != j or tree.right[j] != j:
                        raise ModelFormatError(f"tree {t} node {j}: leaf must self-loop")
                    if not 0.0 <= tree.value[j] <= 1.0:
                        raise ModelFormatError(f"tree {t} node {j}: leaf fraction out of [0,1]")
                else:
                    if not 0 <= f < N_FEATURES:
                        raise ModelFormatError(f"tree {t} node {j}: feature index {f} out of range")
                    for child in (tree.left[j], tree.right[j]):
                        # children strictly below their parent: guarantees acyclicity
                        if not j < child < n:
                            raise ModelFormatError(f"tree {t} node {j}: bad child link {child}")
        return self


def _gt_valid_mask(gt):
    gt = np.asarray(gt, dtype=np.float64)
    return np.isfinite(gt) & (gt >= 0) & (gt != INVALID_DISP)


def sample_training_set(fv: FeatureVolume, gt, seed) -> TrainingSet:
    """Draw one positive and two negative hypotheses per labelled pixel.

    The positive sits at d+ = round(d_gt); pixels whose positive is out
    of range or geometrically invalid contribute nothing.  Negatives are
    uniform draws, one from {0 .. d+ - 2} and one from {d+ + 2 .. d_max},
    each restricted to valid hypotheses; when one side is empty both
    come from the other side (independently, so they may coincide), and
    when both sides are empty the pixel contributes only its positive.
    Samples are ordered positives, then first negatives, then second.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != (fv.height, fv.width):
        raise ConfigError(
            f"ground truth {gt.shape} does not match features "
            f"({fv.height}, {fv.width})"
        )
    d_max = fv.d_max
    ok = _gt_valid_mask(gt)
    if not ok.any():
        raise EmptyTrainingSetError("ground truth has no valid pixels")
    ys, xs = np.nonzero(ok)
    d_pos = np.rint(gt[ys, xs]).astype(np.int64)
    keep = (d_pos <= d_max) & (d_pos <= xs)
    ys, xs, d_pos = ys[keep], xs[keep], d_pos[keep]
    if ys.size == 0:
        raise EmptyTrainingSetError("no labelled pixel admits a valid positive hypothesis")

    # Candidate counts per side; the lower side {0..d+-2} is always
    # geometrically valid (d < d+ <= x), the upper side is capped at x.
    n_lo = np.maximum(d_pos - 1, 0)
    hi_cap = np.minimum(d_max, xs)
    n_hi = np.maximum(hi_cap - d_pos - 1, 0)

    rng = np.random.default_rng(seed)
    draw = lambda n: rng.integers(0, np.maximum(n, 1))
    lo_a = draw(n_lo)
    lo_b = draw(n_lo)
    hi_a = d_pos + 2 + draw(n_hi)
    hi_b = d_pos + 2 + draw(n_hi)

    neg1 = np.where(n_lo > 0, lo_a, hi_b)
    neg2 = np.where(n_hi > 0, hi_a, lo_b)
    has1 = (n_lo > 0) | (n_hi > 0)
    has2 = has1

    feats = [fv.features[ys, xs, d_pos, :]]
    labels = [np.ones(ys.size, dtype=np.uint8)]
    for neg, has in ((neg1, has1), (neg2, has2)):
        feats.append(fv.features[ys[has], xs[has], neg[has], :])
        labels.append(np.zeros(int(has.sum()), dtype=np.uint8))
    return TrainingSet(
        features=np.concatenate(feats, axis=0),
        labels=np.concatenate(labels, axis=0),
    )


def _best_split(x_node, y_node, candidates, min_leaf):
    """Lowest weighted-Gini split over the candidate features.

    Returns (feature, threshold, left_mask) or None when no candidate
    admits a split with both children >= min_leaf.
    """
    n = y_node.shape[0]
    total_pos = int(y_node.sum())
    best = None
    best_score = np.inf
    for f in candidates:
        v = x_node[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        pos_prefix = np.cumsum(y_node[order])
        i = np.arange(1, n)
        usable = (vs[1:] > vs[:-1]) & (i >= min_leaf) & (n - i >= min_leaf)
        if not usable.any():
            continue
        i = i[usable]
        pl = pos_prefix[i - 1] / i
        pr = (total_pos - pos_prefix[i - 1]) / (n - i)
        score = i * 2.0 * pl * (1.0 - pl) + (n - i) * 2.0 * pr * (1.0 - pr)
        k = int(np.argmin(score))
        if score[k] < best_score:
            split_at = int(i[k])
            thr = 0.5 * (vs[split_at - 1] + vs[split_at])
            # float midpoints can round up onto the right-hand value;
            # fall back to the left value so `<=` reproduces the counted
            # partition exactly
            if thr >= vs[split_at]:
                thr = vs[split_at - 1]
            best_score = float(score[k])
            best = (int(f), float(thr))
    if best is None:
        return None
    f, thr = best
    return f, thr, x_node[:, f] <= thr


def _build_tree(x, y, params, rng):
    feature, threshold, left, right, value, depths = [], [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(0)
        right.append(0)
        value.append(0.0)
        depths.append(0)
        return len(feature) - 1

    def build(idx, depth):
        node = new_node()
        depths[node] = depth
        y_node = y[idx]
        n = idx.shape[0]
        pos = int(y_node.sum())
        value[node] = pos / n
        left[node] = right[node] = node
        if depth >= params.max_depth or pos in (0, n) or n < 2 * params.min_samples_leaf:
            return node
        candidates = rng.choice(N_FEATURES, size=params.features_per_split, replace=False)
        split = _best_split(x[idx], y_node, candidates, params.min_samples_leaf)
        if split is None:
            return node
        f, thr, go_left = split
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    if params.bootstrap:
        root_idx = rng.integers(0, x.shape[0], size=x.shape[0])
    else:
        root_idx = np.arange(x.shape[0])
    build(root_idx, 0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
        depth=int(max(depths)),
    )


def _tree_rng(seed, tree_index):
    # unsigned view of the seed keeps SeedSequence happy for any 64-bit input
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tree_index])
    )


def train_forest(samples: TrainingSet, params: ForestParams | None = None, threads=1) -> ForestModel:
    """Fit the forest; identical results for any thread count."""
    params = (params or ForestParams()).validate()
    x = np.ascontiguousarray(samples.features, dtype=np.float64)
    y = np.ascontiguousarray(samples.labels, dtype=np.uint8)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ConfigError(f"training features must be (N, {N_FEATURES})")
    if x.shape[0] == 0:
        raise EmptyTrainingSetError("no training samples")
    if y.min() == y.max():
        raise DegenerateTrainingError(
            "training set contains a single class; both matched and "
            "mismatched hypotheses are required"
        )

    def fit(t):
        return _build_tree(x, y, params, _tree_rng(params.seed, t))

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(fit, range(params.n_trees)))
    else:
        trees = [fit(t) for t in range(params.n_trees)]
    return ForestModel(trees=trees).validate()


def predict(model: ForestModel, f) -> float:
    """Probability that one feature vector is a correct match."""
    f = np.asarray(f, dtype=np.float64)
    acc = 0.0
    for tree in model.trees:
        j = 0
        while tree.feature[j] != -1:
            j = tree.left[j] if f[tree.feature[j]] <= tree.threshold[j] else tree.right[j]
        acc += tree.value[j]
    return acc / len(model.trees)


def predict_batch(model: ForestModel, x) -> np.ndarray:
    """Vectorized predict over an (N, 20) feature matrix."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    rows = np.arange(n)
    acc = np.zeros(n, dtype=np.float64)
    for tree in model.trees:
        j = np.zeros(n, dtype=np.int64)
        for _ in range(tree.depth):
            go_left = x[rows, tree.feature[j]] <= tree.threshold[j]
            j = np.where(go_left, tree.left[j], tree.right[j])
        acc += tree.value[j]
    return acc / len(model.trees)


def predict_volume(model: ForestModel, fv: FeatureVolume) -> CostVolume:
    """Fuse a feature volume into the combined matching-cost volume.

    Valid cells get cost 1 - p; invalid cells sit at the maximum cost 1.
    """
    vol = empty_volume(fv.height, fv.width, fv.d_max, max_cost=1.0)
    flat = fv.features[fv.valid]
    if flat.shape[0]:
        vol.cost[fv.valid] = 1.0 - predict_batch(model, flat)
    return vol


def save_model(model: ForestModel, path):
    """Versioned text serialization; repr floats round-trip bit-exactly."""
    model.validate()
    lines = [f"{MODEL_FILE_TAG} {MODEL_FILE_VERSION}", f"n_trees {len(model.trees)}"]
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} nodes {tree.n_nodes} depth {tree.depth}")
        for j in range(tree.n_nodes):
            if tree.feature[j] == -1:
                lines.append(f"node {j} leaf {float(tree.value[j])!r}")
            else:
                lines.append(
                    f"node {j} split {int(tree.feature[j])} {float(tree.threshold[j])!r} "
                    f"{int(tree.left[j])} {int(tree.right[j])}"
                )
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_error(path, lineno, msg):
    return ModelFormatError(f"{path}:{lineno}: {msg}")


def load_model(path) -> ForestModel:
    try:
        with open(path, "r", encoding="ascii") as fh:
            raw = fh.read().splitlines()
    except OSError as e:
        raise ModelFormatError(f"{path}: {e}")
    lines = [(i + 1, ln) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise ModelFormatError(f"{path}: empty model file")
    pos = 0

    def take(expect=None):
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError(f"{path}: truncated model file")
        lineno, ln = lines[pos]
        pos += 1
        parts = ln.split()
        if expect is not None and (not parts or parts[0] != expect):
            raise _parse_error(path, lineno, f"expected {expect!r}, got {ln!r}")
        return lineno, parts

    lineno, header = take()
    if len(header) != 2 or header[0] != MODEL_FILE_TAG:
        raise _parse_error(path, lineno, "not a forest model file")
    if int(header[1]) != MODEL_FILE_VERSION:
        raise _parse_error(path, lineno, f"unsupported model version {header[1]}")
    lineno, counts = take("n_trees")
    try:
        n_trees = int(counts[1])
    except (IndexError, ValueError):
        raise _parse_error(path, lineno, "malformed n_trees line")
    if n_trees < 1:
        raise _parse_error(path, lineno, "model has no trees")

    trees = []
    for t in range(n_trees):
        lineno, hd = take("tree")
        try:
            if int(hd[1]) != t:
                raise ValueError
            n_nodes, depth = int(hd[3]), int(hd[5])
            if hd[2] != "nodes" or hd[4] != "depth" or n_nodes < 1 or depth < 0:
                raise ValueError
        except (IndexError, ValueError):
            raise _parse_error(path, lineno, "malformed tree header")
        feature = np.full(n_nodes, -1, dtype=np.int32)
        threshold = np.zeros(n_nodes, dtype=np.float64)
        left = np.zeros(n_nodes, dtype=np.int32)
        right = np.zeros(n_nodes, dtype=np.int32)
        value = np.zeros(n_nodes, dtype=np.float64)
        for j in range(n_nodes):
            lineno, nd = take("node")
            try:
                if int(nd[1]) != j:
                    raise ValueError
                kind = nd[2]
                if kind == "leaf":
                    value[j] = float(nd[3])
                    left[j] = right[j] = j
                elif kind == "split":
                    feature[j] = int(nd[3])
                    threshold[j] = float(nd[4])
                    left[j] = int(nd[5])
                    right[j] = int(nd[6])
                else:
                    raise ValueError
            except (IndexError, ValueError):
                raise _parse_error(path, lineno, "malformed node record")
        trees.append(
            Tree(feature=feature, threshold=threshold, left=left, right=right,
                 value=value, depth=depth)
        )
    lineno, _ = take("end")
    if pos != len(lines):
        raise ModelFormatError(f"{path}: trailing content after end marker")
    return ForestModel(trees=trees).validate()

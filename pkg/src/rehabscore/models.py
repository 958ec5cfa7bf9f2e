"""Score predictors: the constant-mean baseline and boosted regression trees.

The booster is plain second-order (Newton) boosting with a squared-error
objective: per row g = prediction - label and h = 1, trees are grown
depth-first with the exact-greedy split scan from ``_kernels``, and each
leaf takes the closed-form weight -G/(H + lambda). Predictions are clamped
to [0, 1] at the API boundary because labels are normalized scores; raw
values are kept internally so the per-round training loss is comparable.

Everything here is deterministic: no subsampling, fixed tie-breaks in the
split scan, and values-exactly-equal-to-a-threshold route right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import RehabScoreError

MODEL_SCHEMA_VERSION = 1


class EmptyTrainingSetError(RehabScoreError):
    code = "EMPTY_TRAINING_SET"


class FeatureLabelLengthMismatchError(RehabScoreError):
    code = "FEATURE_LABEL_LENGTH_MISMATCH"


class FeatureLengthMismatchError(RehabScoreError):
    code = "FEATURE_LENGTH_MISMATCH"


class SchemaVersionMismatchError(RehabScoreError):
    code = "SCHEMA_VERSION_MISMATCH"


class ModelIoError(RehabScoreError):
    code = "IO_FAILURE"


@dataclass(frozen=True)
class BaselineModel:
    """Predicts the training-label mean for every input."""

    mean_score: float
    n_train: int


def fit_baseline(labels) -> BaselineModel:
    arr = np.asarray(labels, dtype=np.float64)
    if arr.size == 0:
        raise EmptyTrainingSetError("no training labels")
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if not np.isfinite(arr).all():
        raise ValueError("labels contain non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("labels must lie in [0, 1]")
    return BaselineModel(mean_score=float(arr.mean()), n_train=int(arr.size))


def predict_baseline(model: BaselineModel, x=None) -> float:
    """The feature vector is accepted for interface symmetry and ignored."""
    return model.mean_score


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    lambda_l2: float = 1.0
    gamma_min_gain: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 42

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.lambda_l2 < 0.0:
            raise ValueError("lambda_l2 must be >= 0")
        if self.gamma_min_gain < 0.0:
            raise ValueError("gamma_min_gain must be >= 0")
        if self.min_child_weight < 0.0:
            raise ValueError("min_child_weight must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "lambda_l2": self.lambda_l2,
            "gamma_min_gain": self.gamma_min_gain,
            "min_child_weight": self.min_child_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbdtParams":
        known = {
            "n_trees",
            "learning_rate",
            "max_depth",
            "lambda_l2",
            "gamma_min_gain",
            "min_child_weight",
            "seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError("unknown GbdtParams keys: %s" % sorted(unknown))
        merged = {**cls().to_dict(), **data}
        return cls(
            n_trees=int(merged["n_trees"]),
            learning_rate=float(merged["learning_rate"]),
            max_depth=int(merged["max_depth"]),
            lambda_l2=float(merged["lambda_l2"]),
            gamma_min_gain=float(merged["gamma_min_gain"]),
            min_child_weight=float(merged["min_child_weight"]),
            seed=int(merged["seed"]),
        )


@dataclass(frozen=True)
class TreeNode:
    """Internal node (children set) or leaf (children None, weight used)."""

    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0

    def __post_init__(self):
        if (self.left is None) != (self.right is None):
            raise ValueError("internal nodes need both children")
        if self.left is not None and self.feature_index < 0:
            raise ValueError("internal nodes need a feature_index >= 0")

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def tree_depth(node: TreeNode) -> int:
    if node.is_leaf:
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def _max_feature_index(node: TreeNode) -> int:
    if node.is_leaf:
        return -1
    return max(
        node.feature_index,
        _max_feature_index(node.left),
        _max_feature_index(node.right),
    )


@dataclass(frozen=True, eq=False)
class GbdtModel:
    params: GbdtParams
    base_score: float
    trees: tuple
    feature_names: tuple
    # Training artifacts; populated by fit_gbdt, dropped by save/load.
    train_loss: tuple = ()
    train_prediction: "np.ndarray | None" = None

    @property
    def n_features_required(self) -> int:
        if not self.trees:
            return 0
        return max(_max_feature_index(t) for t in self.trees) + 1


def find_best_split(features, gradients, hessians, members, params: GbdtParams):
    """Exact-greedy best split over the given node members, or None.

    Convenience wrapper that presorts the full matrix per call; fit_gbdt
    reuses one presort across all nodes instead.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    g = np.ascontiguousarray(gradients, dtype=np.float64)
    h = np.ascontiguousarray(hessians, dtype=np.float64)
    if g.shape != (x.shape[0],) or h.shape != (x.shape[0],):
        raise ValueError("gradients/hessians must align with matrix rows")
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("node members must be non-empty")
    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T)
    mask = np.zeros(x.shape[0], dtype=np.uint8)
    mask[members] = 1
    return _kernels.scan_best_split(
        x,
        g,
        h,
        order,
        mask,
        float(params.lambda_l2),
        float(params.gamma_min_gain),
        float(params.min_child_weight),
    )


def _grow(x, g, h, order, mask, depth, params, contrib):
    split = None
    if depth < params.max_depth:
        split = _kernels.scan_best_split(
            x,
            g,
            h,
            order,
            mask,
            float(params.lambda_l2),
            float(params.gamma_min_gain),
            float(params.min_child_weight),
        )
    members = mask.view(np.bool_)
    if split is None:
        g_sum = float(g[members].sum())
        h_sum = float(h[members].sum())
        denom = h_sum + params.lambda_l2
        weight = -g_sum / denom if denom > 0.0 else 0.0
        contrib[members] = weight
        return TreeNode(weight=weight)
    feat, thr, _gain = split
    goes_left = x[:, feat] < thr
    left_mask = (members & goes_left).astype(np.uint8)
    right_mask = (members & ~goes_left).astype(np.uint8)
    return TreeNode(
        feature_index=int(feat),
        threshold=float(thr),
        left=_grow(x, g, h, order, left_mask, depth + 1, params, contrib),
        right=_grow(x, g, h, order, right_mask, depth + 1, params, contrib),
    )


def fit_gbdt(features, labels, params: GbdtParams = None, feature_names=None) -> GbdtModel:
    if params is None:
        params = GbdtParams()
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if x.shape[0] != y.shape[0]:
        raise FeatureLabelLengthMismatchError(
            "%d feature rows vs %d labels" % (x.shape[0], y.shape[0])
        )
    if x.shape[0] < 2:
        raise EmptyTrainingSetError(
            "need at least 2 training rows, got %d" % x.shape[0]
        )
    if not np.isfinite(x).all():
        raise ValueError("feature matrix contains non-finite values")
    if not np.isfinite(y).all():
        raise ValueError("labels contain non-finite values")
    if y.min() < 0.0 or y.max() > 1.0:
        raise ValueError("labels must lie in [0, 1]")
    if feature_names is None:
        feature_names = tuple("f%d" % j for j in range(x.shape[1]))
    else:
        feature_names = tuple(str(n) for n in feature_names)
        if len(feature_names) != x.shape[1]:
            raise ValueError("feature_names length must match matrix columns")
        if len(set(feature_names)) != len(feature_names):
            raise ValueError("feature_names must be unique")

    n = x.shape[0]
    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T)
    base = float(y.mean())
    pred = np.full(n, base, dtype=np.float64)
    hess = np.ones(n, dtype=np.float64)
    trees = []
    losses = []
    for _ in range(params.n_trees):
        grad = pred - y
        contrib = np.zeros(n, dtype=np.float64)
        root_mask = np.ones(n, dtype=np.uint8)
        trees.append(_grow(x, grad, hess, order, root_mask, 0, params, contrib))
        pred = pred + params.learning_rate * contrib
        losses.append(float(np.mean((pred - y) ** 2)))
    return GbdtModel(
        params=params,
        base_score=base,
        trees=tuple(trees),
        feature_names=feature_names,
        train_loss=tuple(losses),
        train_prediction=pred,
    )


def _leaf_value(node: TreeNode, x: np.ndarray) -> float:
    while not node.is_leaf:
        # Equal-to-threshold routes right.
        node = node.left if x[node.feature_index] < node.threshold else node.right
    return node.weight


def _as_row(x) -> np.ndarray:
    values = getattr(x, "values", x)
    return np.asarray(values, dtype=np.float64)


def predict_gbdt_raw(model: GbdtModel, x) -> float:
    row = _as_row(x)
    if row.ndim != 1:
        raise ValueError("feature row must be one-dimensional")
    if row.size < model.n_features_required:
        raise FeatureLengthMismatchError(
            "row has %d features, model references index %d"
            % (row.size, model.n_features_required - 1)
        )
    raw = model.base_score
    for tree in model.trees:
        raw += model.params.learning_rate * _leaf_value(tree, row)
    return raw


def predict_gbdt(model: GbdtModel, x) -> float:
    return min(max(predict_gbdt_raw(model, x), 0.0), 1.0)


def predict_gbdt_batch(model: GbdtModel, rows) -> np.ndarray:
    mat = np.asarray(rows, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("feature rows must form a 2-D array")
    return np.array([predict_gbdt(model, mat[i]) for i in range(mat.shape[0])])


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"weight": node.weight}
    return {
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(data: dict) -> TreeNode:
    if "weight" in data:
        return TreeNode(weight=float(data["weight"]))
    return TreeNode(
        feature_index=int(data["feature_index"]),
        threshold=float(data["threshold"]),
        left=_node_from_dict(data["left"]),
        right=_node_from_dict(data["right"]),
    )


def save_model(path, model) -> None:
    """Write a model as versioned JSON (sorted keys, so byte-deterministic)."""
    if isinstance(model, BaselineModel):
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "model_type": "baseline",
            "mean_score": model.mean_score,
            "n_train": model.n_train,
        }
    elif isinstance(model, GbdtModel):
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "model_type": "gbdt",
            "params": model.params.to_dict(),
            "base_score": model.base_score,
            "feature_names": list(model.feature_names),
            "trees": [_node_to_dict(t) for t in model.trees],
        }
    else:
        raise TypeError("cannot serialize %r" % type(model).__name__)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ModelIoError("cannot write model file %s (%s)" % (path, exc))


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelIoError("cannot read model file %s (%s)" % (path, exc))
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ModelIoError("model file %s is not valid JSON (%s)" % (path, exc))
    if not isinstance(doc, dict):
        raise ModelIoError("model file %s does not hold a JSON object" % path)
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            "expected schema_version %d, found %r" % (MODEL_SCHEMA_VERSION, version)
        )
    model_type = doc.get("model_type", "gbdt")
    if model_type == "baseline":
        return BaselineModel(
            mean_score=float(doc["mean_score"]), n_train=int(doc["n_train"])
        )
    if model_type == "gbdt":
        return GbdtModel(
            params=GbdtParams.from_dict(doc.get("params", {})),
            base_score=float(doc["base_score"]),
            trees=tuple(_node_from_dict(t) for t in doc.get("trees", [])),
            feature_names=tuple(doc.get("feature_names", [])),
        )
    raise ModelIoError("unknown model_type %r in %s" % (model_type, path))

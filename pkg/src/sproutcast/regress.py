"""Gradient-boosted regression trees and the 10-member subset ensemble.

The regressor is self-contained: squared-error boosting over depth-limited
CART trees with exact greedy split search (sorted unique values, midpoint
thresholds, ties broken toward the lowest feature index).  Everything is
deterministic given the RegressorSpec seed, and a trained model serializes
to a single self-describing JSON file that reloads bit-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from sproutcast.config import PipelineConfig
from sproutcast.features import LabeledExample, FeatureVector

# two-sided 95% Student-t critical value, 9 degrees of freedom
T_CRIT_975_DF9 = 2.262

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RegressorSpec:
    """Hyperparameters of one boosted-tree regressor."""

    n_trees: int = 300
    max_depth: int = 4
    learning_rate: float = 0.05
    min_samples_leaf: int = 5
    subsample: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")


@dataclass
class Tree:
    """One regression tree as flat arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int32)
        feat = self.feature[node]
        while True:
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            cur = node[active]
            go_left = x[active, feat[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            feat = self.feature[node]
        return self.value[node]


@dataclass
class TrainedModel:
    spec: RegressorSpec
    trees: list[Tree]
    base_prediction: float
    feature_layout_version: str
    n_features: int
    train_loss: list[float] = field(default_factory=list, repr=False)


@dataclass
class Ensemble:
    """Exactly n_members models trained on a disjoint partition of the data."""

    members: list[TrainedModel]
    subset_assignment: np.ndarray
    spec: RegressorSpec
    feature_layout_version: str
    n_features: int


class _TreeBuilder:
    def __init__(self, spec: RegressorSpec):
        self.spec = spec
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _add_node(self) -> int:
        for arr in (self.feature, self.threshold, self.left, self.right, self.value):
            arr.append(0)
        return len(self.feature) - 1

    def _make_leaf(self, node: int, residuals: np.ndarray) -> None:
        self.feature[node] = -1
        self.threshold[node] = 0.0
        self.left[node] = -1
        self.right[node] = -1
        self.value[node] = float(residuals.mean())

    def _best_split(self, x: np.ndarray, r: np.ndarray) -> tuple[int, float] | None:
        """Exact greedy search over sorted values, vectorized across features.

        Maximizes sum_left^2/n_left + sum_right^2/n_right, which is the SSE
        reduction up to the parent's constant.  Candidates sit between
        consecutive distinct values with both children >= min_samples_leaf.
        """
        n, n_features = x.shape
        msl = self.spec.min_samples_leaf
        order = np.argsort(x, axis=0)
        xs = np.take_along_axis(x, order, axis=0)
        rs = r[order]
        csum = np.cumsum(rs, axis=0)
        total = csum[-1, :]
        n_left = np.arange(1, n, dtype=np.float64)[:, None]
        sum_left = csum[:-1, :]
        sum_right = total[None, :] - sum_left
        score = sum_left**2 / n_left + sum_right**2 / (n - n_left)
        valid = (xs[1:] > xs[:-1]) & (n_left >= msl) & (n_left <= n - msl)
        score[~valid] = -np.inf
        # feature-major ravel so argmax tie-breaks toward the lowest feature
        # index, then the smallest threshold
        flat = score.T.ravel()
        best = int(np.argmax(flat))
        best_score = flat[best]
        if not np.isfinite(best_score):
            return None
        f, pos = divmod(best, n - 1)
        if not best_score > total[f] ** 2 / n:
            return None
        return f, 0.5 * (xs[pos, f] + xs[pos + 1, f])

    def grow(self, x: np.ndarray, r: np.ndarray, depth: int = 0) -> int:
        node = self._add_node()
        if depth >= self.spec.max_depth or len(r) < max(2, 2 * self.spec.min_samples_leaf):
            self._make_leaf(node, r)
            return node
        split = self._best_split(x, r)
        if split is None:
            self._make_leaf(node, r)
            return node
        f, thr = split
        mask = x[:, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.grow(x[mask], r[mask], depth + 1)
        self.right[node] = self.grow(x[~mask], r[~mask], depth + 1)
        return node

    def build(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def _as_matrix(examples: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    if len(examples) < 2:
        raise ValueError("need at least 2 examples to fit")
    widths = {len(ex.features.values) for ex in examples}
    if len(widths) != 1:
        raise ValueError(f"inconsistent feature lengths: {sorted(widths)}")
    x = np.stack([ex.features.values for ex in examples]).astype(np.float64)
    y = np.array([ex.target_days for ex in examples], dtype=np.float64)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("examples contain non-finite values")
    return x, y


def fit_arrays(
    x: np.ndarray,
    y: np.ndarray,
    spec: RegressorSpec,
    feature_layout: str = "",
) -> TrainedModel:
    """Boost depth-limited trees on residuals; deterministic given spec.seed."""
    if len(y) < 2:
        raise ValueError("need at least 2 examples to fit")
    n = len(y)
    base = float(y.mean())
    pred = np.full(n, base)
    rng = np.random.default_rng(spec.seed)
    trees: list[Tree] = []
    loss: list[float] = []
    for _ in range(spec.n_trees):
        residual = y - pred
        if spec.subsample < 1.0:
            m = max(1, int(round(spec.subsample * n)))
            rows = np.sort(rng.permutation(n)[:m])
        else:
            rows = slice(None)
        builder = _TreeBuilder(spec)
        builder.grow(x[rows], residual[rows])
        tree = builder.build()
        pred = pred + spec.learning_rate * tree.predict(x)
        trees.append(tree)
        loss.append(float(np.mean((y - pred) ** 2)))
    return TrainedModel(
        spec=spec,
        trees=trees,
        base_prediction=base,
        feature_layout_version=feature_layout,
        n_features=x.shape[1],
        train_loss=loss,
    )


def fit(
    examples: Sequence[LabeledExample],
    spec: RegressorSpec,
    feature_layout: str = "",
) -> TrainedModel:
    x, y = _as_matrix(examples)
    return fit_arrays(x, y, spec, feature_layout)


def predict_matrix(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    if x.shape[1] != model.n_features:
        raise ValueError(f"feature width {x.shape[1]} does not match model ({model.n_features})")
    out = np.full(len(x), model.base_prediction)
    for tree in model.trees:
        out += model.spec.learning_rate * tree.predict(x)
    return out


def predict(model: TrainedModel, features: FeatureVector | np.ndarray) -> float:
    """Evaluate the boosted sum for one feature vector."""
    values = features.values if isinstance(features, FeatureVector) else np.asarray(features)
    if values.shape != (model.n_features,):
        raise ValueError(
            f"feature length {values.shape} does not match model layout ({model.n_features})"
        )
    return float(predict_matrix(model, values[None, :])[0])


def fit_ensemble(
    examples: Sequence[LabeledExample],
    spec: RegressorSpec,
    n_members: int = 10,
    seed: int | None = None,
    feature_layout: str = "",
) -> Ensemble:
    """Partition the data into n_members equal subsets and fit one model each.

    The shuffled partition is seeded; subset sizes differ by at most one and
    member u trains with seed + u so members stay decorrelated but the whole
    ensemble is reproducible.
    """
    x, y = _as_matrix(examples)
    return fit_ensemble_arrays(x, y, spec, n_members, seed, feature_layout)


def fit_ensemble_arrays(
    x: np.ndarray,
    y: np.ndarray,
    spec: RegressorSpec,
    n_members: int = 10,
    seed: int | None = None,
    feature_layout: str = "",
) -> Ensemble:
    n = len(y)
    needed = n_members * max(2, spec.min_samples_leaf)
    if n < needed:
        raise ValueError(
            f"{n} examples cannot populate {n_members} ensemble members "
            f"(need at least {needed})"
        )
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int32)
    members = []
    for u, subset in enumerate(np.array_split(perm, n_members)):
        assignment[subset] = u
        members.append(
            fit_arrays(x[subset], y[subset], replace(spec, seed=seed + u), feature_layout)
        )
    return Ensemble(
        members=members,
        subset_assignment=assignment,
        spec=spec,
        feature_layout_version=feature_layout,
        n_features=x.shape[1],
    )


def _t_crit_975(df: int) -> float:
    if df == 9:
        return T_CRIT_975_DF9
    from scipy.stats import t

    return float(t.ppf(0.975, df))


def ensemble_predict_matrix(ens: Ensemble, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (mean, 95% CI half-width) over the member predictions."""
    preds = np.stack([predict_matrix(m, x) for m in ens.members])
    mean = preds.mean(axis=0)
    n_members = len(ens.members)
    s = preds.std(axis=0, ddof=1)
    half = _t_crit_975(n_members - 1) * s / math.sqrt(n_members)
    return mean, half


def ensemble_predict(ens: Ensemble, features: FeatureVector | np.ndarray) -> tuple[float, float]:
    values = features.values if isinstance(features, FeatureVector) else np.asarray(features)
    if values.shape != (ens.n_features,):
        raise ValueError(
            f"feature length {values.shape} does not match ensemble layout ({ens.n_features})"
        )
    mean, half = ensemble_predict_matrix(ens, values[None, :])
    return float(mean[0]), float(half[0])


def spec_from_config(cfg: PipelineConfig, seed: int | None = None) -> RegressorSpec:
    return RegressorSpec(
        n_trees=cfg.n_trees,
        max_depth=cfg.max_depth,
        learning_rate=cfg.learning_rate,
        min_samples_leaf=cfg.min_samples_leaf,
        subsample=cfg.subsample,
        seed=cfg.seed if seed is None else seed,
    )


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_dict(d: dict) -> Tree:
    return Tree(
        feature=np.asarray(d["feature"], dtype=np.int32),
        threshold=np.asarray(d["threshold"], dtype=np.float64),
        left=np.asarray(d["left"], dtype=np.int32),
        right=np.asarray(d["right"], dtype=np.int32),
        value=np.asarray(d["value"], dtype=np.float64),
    )


def _spec_to_dict(spec: RegressorSpec) -> dict:
    return {
        "n_trees": spec.n_trees,
        "max_depth": spec.max_depth,
        "learning_rate": spec.learning_rate,
        "min_samples_leaf": spec.min_samples_leaf,
        "subsample": spec.subsample,
        "seed": spec.seed,
    }


def _model_to_dict(model: TrainedModel) -> dict:
    return {
        "kind": "single",
        "format_version": MODEL_FORMAT_VERSION,
        "feature_layout": model.feature_layout_version,
        "n_features": model.n_features,
        "spec": _spec_to_dict(model.spec),
        "base_prediction": model.base_prediction,
        "trees": [_tree_to_dict(t) for t in model.trees],
    }


def _model_from_dict(d: dict) -> TrainedModel:
    return TrainedModel(
        spec=RegressorSpec(**d["spec"]),
        trees=[_tree_from_dict(t) for t in d["trees"]],
        base_prediction=float(d["base_prediction"]),
        feature_layout_version=d["feature_layout"],
        n_features=int(d["n_features"]),
    )


def save_model(model: TrainedModel | Ensemble, path: str | Path) -> Path:
    """Serialize a model or ensemble to one deterministic JSON file."""
    if isinstance(model, Ensemble):
        payload = {
            "kind": "ensemble",
            "format_version": MODEL_FORMAT_VERSION,
            "feature_layout": model.feature_layout_version,
            "n_features": model.n_features,
            "spec": _spec_to_dict(model.spec),
            "n_members": len(model.members),
            "members": [_model_to_dict(m) for m in model.members],
        }
    else:
        payload = _model_to_dict(model)
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    return path


def load_model(path: str | Path) -> TrainedModel | Ensemble:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    d = json.loads(path.read_text(encoding="utf-8"))
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {d.get('format_version')!r}")
    if d["kind"] == "single":
        return _model_from_dict(d)
    if d["kind"] == "ensemble":
        members = [_model_from_dict(m) for m in d["members"]]
        return Ensemble(
            members=members,
            subset_assignment=np.array([], dtype=np.int32),
            spec=RegressorSpec(**d["spec"]),
            feature_layout_version=d["feature_layout"],
            n_features=int(d["n_features"]),
        )
    raise ValueError(f"{path}: unknown model kind {d['kind']!r}")


__all__ = [
    "T_CRIT_975_DF9",
    "MODEL_FORMAT_VERSION",
    "RegressorSpec",
    "Tree",
    "TrainedModel",
    "Ensemble",
    "fit",
    "fit_arrays",
    "predict",
    "predict_matrix",
    "fit_ensemble",
    "fit_ensemble_arrays",
    "ensemble_predict",
    "ensemble_predict_matrix",
    "spec_from_config",
    "save_model",
    "load_model",
]

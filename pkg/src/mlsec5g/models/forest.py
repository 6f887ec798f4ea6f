"""Random forest on CART trees, with soft-label distillation.

Classification trees minimize weighted Gini impurity, regression trees
weighted variance. Feature subsampling, bootstrap resampling and
first-improvement tie breaking are all driven by per-tree generators derived
from the model seed, so retraining on identical data reproduces the forest
exactly. Sample weights are first-class (bootstrap duplication and soft-label
distillation both ride on them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import ModelSpec, TrainedModel, default_schema

_EPS_GAIN = 1e-12


@dataclass
class _Tree:
    feature: np.ndarray    # (n_nodes,) int, -1 for leaves
    threshold: np.ndarray  # (n_nodes,) float
    left: np.ndarray       # (n_nodes,) int
    right: np.ndarray      # (n_nodes,) int
    value: np.ndarray      # (n_nodes, K) class weights or (n_nodes, 1) means

    def route(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[idx]
            active = np.nonzero(f >= 0)[0]
            if active.size == 0:
                return idx
            fa = f[active]
            cond = X[active, fa] <= self.threshold[idx[active]]
            idx[active] = np.where(cond, self.left[idx[active]], self.right[idx[active]])


def _gini(class_w: np.ndarray) -> float:
    total = class_w.sum()
    if total <= 0:
        return 0.0
    p = class_w / total
    return float(1.0 - np.sum(p * p))


def _weighted_var(w, y) -> float:
    total = w.sum()
    if total <= 0:
        return 0.0
    mean = float(np.dot(w, y) / total)
    return float(np.dot(w, (y - mean) ** 2) / total)


class _Grower:
    """Grows one tree; accumulates weighted impurity decreases per feature."""

    def __init__(self, X, y, w, *, classify: bool, n_classes: int, max_depth: int,
                 min_split: int, min_leaf: int, mtry: int, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.w = w
        self.classify = classify
        self.K = n_classes
        self.max_depth = max_depth
        self.min_split = min_split
        self.min_leaf = min_leaf
        self.mtry = mtry
        self.rng = rng
        self.importance = np.zeros(X.shape[1])
        if classify:
            self.onehot = np.zeros((X.shape[0], n_classes))
            self.onehot[np.arange(X.shape[0]), y] = 1.0
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def _node_value(self, idx) -> np.ndarray:
        if self.classify:
            return self.w[idx] @ self.onehot[idx]
        total = self.w[idx].sum()
        mean = float(np.dot(self.w[idx], self.y[idx]) / total) if total > 0 else 0.0
        return np.array([mean])

    def _impurity(self, idx) -> float:
        if self.classify:
            return _gini(self.w[idx] @ self.onehot[idx])
        return _weighted_var(self.w[idx], self.y[idx])

    def _new_node(self, idx) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(self._node_value(idx))
        return node

    def grow(self, idx: np.ndarray) -> _Tree:
        root = self._new_node(idx)
        stack = [(root, idx, 0)]
        while stack:
            node, rows, depth = stack.pop()
            imp = self._impurity(rows)
            if (depth >= self.max_depth or rows.size < self.min_split
                    or rows.size < 2 * self.min_leaf or imp <= _EPS_GAIN):
                continue
            split = self._best_split(rows, imp)
            if split is None:
                continue
            f, thr, gain = split
            go_left = self.X[rows, f] <= thr
            left_rows = rows[go_left]
            right_rows = rows[~go_left]
            self.importance[f] += self.w[rows].sum() * gain
            self.feature[node] = f
            self.threshold[node] = thr
            left_id = self._new_node(left_rows)
            right_id = self._new_node(right_rows)
            self.left[node] = left_id
            self.right[node] = right_id
            stack.append((right_id, right_rows, depth + 1))
            stack.append((left_id, left_rows, depth + 1))
        return _Tree(np.asarray(self.feature, dtype=np.int64),
                     np.asarray(self.threshold, dtype=float),
                     np.asarray(self.left, dtype=np.int64),
                     np.asarray(self.right, dtype=np.int64),
                     np.vstack(self.value))

    def _best_split(self, rows: np.ndarray, node_imp: float):
        n = rows.size
        feats = self.rng.permutation(self.X.shape[1])[:self.mtry]
        best = None
        best_child = node_imp - _EPS_GAIN  # must strictly beat this
        w_rows = self.w[rows]
        for f in feats:
            v = self.X[rows, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            if vs[0] == vs[-1]:
                continue
            cut = np.nonzero(vs[1:] > vs[:-1])[0]
            cut = cut[(cut + 1 >= self.min_leaf) & (n - cut - 1 >= self.min_leaf)]
            if cut.size == 0:
                continue
            wo = w_rows[order]
            if self.classify:
                cw = np.cumsum(self.onehot[rows][order] * wo[:, None], axis=0)
                tot = cw[-1]
                total_w = tot.sum()
                lw = np.maximum(cw[cut].sum(axis=1), 1e-300)
                rw = np.maximum(total_w - lw, 1e-300)
                lc = cw[cut]
                rc = tot[None, :] - lc
                gini_l = 1.0 - np.sum((lc / lw[:, None]) ** 2, axis=1)
                gini_r = 1.0 - np.sum((rc / rw[:, None]) ** 2, axis=1)
                child = (lw * gini_l + rw * gini_r) / total_w
            else:
                yo = self.y[rows][order]
                cw = np.cumsum(wo)
                cwy = np.cumsum(wo * yo)
                cwy2 = np.cumsum(wo * yo * yo)
                total_w, sy, sy2 = cw[-1], cwy[-1], cwy2[-1]
                lw = np.maximum(cw[cut], 1e-300)
                rw = np.maximum(total_w - lw, 1e-300)
                ly, ry = cwy[cut], sy - cwy[cut]
                ly2, ry2 = cwy2[cut], sy2 - cwy2[cut]
                var_l = np.maximum(ly2 / lw - (ly / lw) ** 2, 0.0)
                var_r = np.maximum(ry2 / rw - (ry / rw) ** 2, 0.0)
                child = (lw * var_l + rw * var_r) / total_w
            j = int(np.argmin(child))
            if child[j] < best_child:
                best_child = float(child[j])
                b = cut[j]
                thr = (vs[b] + vs[b + 1]) / 2.0
                best = (int(f), float(thr), node_imp - best_child)
        return best


class ForestModel(TrainedModel):
    kind = "forest"

    def __init__(self, spec, schema, fingerprint, trees, classes, importance_raw):
        super().__init__(spec, schema, fingerprint)
        self.trees = trees
        self.classes_ = classes  # None for regression
        self._importance_raw = importance_raw

    # -- prediction -----------------------------------------------------

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classify":
            raise ValueError("predict_proba is only defined for classification")
        X = self._check_width(X)
        acc = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.trees:
            leaves = tree.route(X)
            dist = tree.value[leaves]
            totals = np.maximum(dist.sum(axis=1, keepdims=True), 1e-300)
            acc += dist / totals
        return acc / len(self.trees)

    def predict(self, X):
        if self.task == "classify":
            proba = self.predict_proba(X)
            return self.classes_[np.argmax(proba, axis=1)]
        X = self._check_width(X)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.value[tree.route(X), 0]
        return acc / len(self.trees)

    # -- introspection ---------------------------------------------------

    def feature_importance(self) -> "FeatureImportance":
        raw = self._importance_raw
        total = raw.sum()
        if total > 0:
            scores = raw / total
        else:
            # a forest of stumps carries no information; report uniform scores
            scores = np.full(raw.size, 1.0 / raw.size)
        return FeatureImportance(self.schema, scores)

    # -- persistence -----------------------------------------------------

    def to_state(self):
        offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
        for i, t in enumerate(self.trees):
            offsets[i + 1] = offsets[i] + t.feature.size
        arrays = {
            "offsets": offsets,
            "feature": np.concatenate([t.feature for t in self.trees]),
            "threshold": np.concatenate([t.threshold for t in self.trees]),
            "left": np.concatenate([t.left for t in self.trees]),
            "right": np.concatenate([t.right for t in self.trees]),
            "value": np.vstack([t.value for t in self.trees]),
            "importance": self._importance_raw,
        }
        if self.classes_ is not None:
            arrays["classes"] = np.asarray(self.classes_, dtype=str)
        meta = {
            "task": self.task,
            "schema": list(self.schema),
            "fingerprint": self.fingerprint,
            "seed": int(self.spec.seed),
            "hyperparameters": {k: _plain(v) for k, v in self.spec.hyperparameters.items()},
        }
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        spec = ModelSpec("forest", meta["task"], meta["hyperparameters"], meta["seed"])
        offsets = arrays["offsets"]
        trees = []
        for i in range(offsets.size - 1):
            lo, hi = offsets[i], offsets[i + 1]
            trees.append(_Tree(arrays["feature"][lo:hi], arrays["threshold"][lo:hi],
                               arrays["left"][lo:hi], arrays["right"][lo:hi],
                               arrays["value"][lo:hi]))
        classes = arrays.get("classes")
        return cls(spec, meta["schema"], meta["fingerprint"], trees, classes,
                   arrays["importance"])


def _plain(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    return v


@dataclass(frozen=True)
class FeatureImportance:
    """Normalized impurity-based importances; the attack's selection oracle."""

    names: tuple
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        if len(self.names) != self.scores.size:
            raise ValueError("names and scores are not aligned")

    def as_dict(self) -> dict:
        return {n: float(s) for n, s in zip(self.names, self.scores)}

    def ranked(self) -> list[str]:
        # descending score, name breaks ties so the ranking is total
        order = sorted(range(len(self.names)), key=lambda i: (-self.scores[i], self.names[i]))
        return [self.names[i] for i in order]

    def top(self, k: int) -> list[str]:
        if not 1 <= k <= len(self.names):
            raise ValueError(f"k must be in [1, {len(self.names)}], got {k}")
        return self.ranked()[:k]


def _resolve_mtry(hp_value, p: int, classify: bool) -> int:
    if hp_value is None:
        hp_value = "sqrt" if classify else "third"
    if hp_value == "sqrt":
        return max(1, int(math.sqrt(p)))
    if hp_value == "third":
        return max(1, p // 3)
    if hp_value == "all":
        return p
    if isinstance(hp_value, float) and 0 < hp_value <= 1:
        return max(1, int(hp_value * p))
    m = int(hp_value)
    if not 1 <= m <= p:
        raise ValueError(f"max_features {hp_value!r} out of range for {p} features")
    return m


def train_forest(spec: ModelSpec, X, y, schema=None, sample_weight=None) -> ForestModel:
    """Train a forest per spec. Deterministic for equal inputs and seed."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"X must be a non-empty 2-d matrix, got shape {X.shape}")
    classify = spec.task == "classify"
    hp = spec.hyperparameters
    n_trees = int(hp.get("n_trees", 30))
    max_depth = hp.get("max_depth")
    max_depth = int(max_depth) if max_depth is not None else 10 ** 9
    min_split = int(hp.get("min_samples_split", 2))
    min_leaf = int(hp.get("min_samples_leaf", 1))
    bootstrap = bool(hp.get("bootstrap", True))
    mtry = _resolve_mtry(hp.get("max_features"), X.shape[1], classify)

    schema = tuple(schema) if schema is not None else default_schema(X.shape[1])
    if len(schema) != X.shape[1]:
        raise ValueError("schema length does not match X width")
    w = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != (X.shape[0],):
        raise ValueError("sample_weight must be one weight per row")
    if np.any(w < 0):
        raise ValueError("sample weights must be non-negative")

    if classify:
        y_arr = np.asarray(y)
        classes, codes = np.unique(y_arr, return_inverse=True)
        target = codes.astype(np.int64)
        K = classes.size
    else:
        target = np.asarray(y, dtype=float)
        classes, K = None, 1
    if target.shape[0] != X.shape[0]:
        raise ValueError("X and y row counts differ")

    trees = []
    importance = np.zeros(X.shape[1])
    n = X.shape[0]
    for t in range(n_trees):
        rng = np.random.default_rng([int(spec.seed) & 0x7FFFFFFFFFFFFFFF, t])
        if bootstrap:
            rows = np.sort(rng.integers(0, n, size=n))
        else:
            rows = np.arange(n)
        grower = _Grower(X[rows], target[rows], w[rows], classify=classify, n_classes=K,
                         max_depth=max_depth, min_split=min_split, min_leaf=min_leaf,
                         mtry=mtry, rng=rng)
        trees.append(grower.grow(np.arange(rows.size)))
        importance += grower.importance

    fp = spec.fingerprint_with(X, np.asarray(y))
    return ForestModel(spec, schema, fp, trees, classes, importance)


def distill_forest(teacher: ForestModel, X, student_spec: ModelSpec | None = None,
                   seed: int | None = None) -> ForestModel:
    """Soft-label knowledge distillation for classification forests.

    The teacher's class probability vectors become per-class sample weights:
    each row is expanded into one row per class weighted by the teacher's
    probability for that class, and a fresh forest is trained on the expansion.
    Hardened models trained this way inherit the teacher's smoothed decision
    surface instead of the raw labels' sharp one.
    """
    if teacher.task != "classify":
        raise ValueError("distillation is defined for classification forests")
    X = np.asarray(X, dtype=float)
    proba = teacher.predict_proba(X)
    K = len(teacher.classes_)
    n = X.shape[0]
    Xe = np.repeat(X, K, axis=0)
    ye = np.tile(teacher.classes_, n)
    we = proba.ravel()
    keep = we > 1e-9
    if student_spec is None:
        student_spec = ModelSpec("forest", "classify", dict(teacher.spec.hyperparameters),
                                 teacher.spec.seed if seed is None else int(seed))
    elif seed is not None:
        student_spec = ModelSpec(student_spec.kind, student_spec.task,
                                 dict(student_spec.hyperparameters), int(seed))
    return train_forest(student_spec, Xe[keep], ye[keep], schema=teacher.schema,
                        sample_weight=we[keep])

"""Gradient-boosted decision trees for binary classification.

Second-order boosting on the logistic loss with exact greedy split
search, L2-regularized leaf weights, shrinkage and a positive-class
weight. Split candidates are the midpoints between consecutive distinct
values of a feature inside a node. Rows with a missing value follow the
default direction learned at the split.

Equal-gain candidates resolve to the lowest feature index, then the
lowest threshold, then missing-goes-left. Training rows are put into a
canonical order first, so the model does not depend on row order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import SchemaMismatchError, ValidationError
from .metrics import logloss

logger = logging.getLogger(__name__)

FORMAT = "sentitrade-gbdt"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainParams:
    eta: float = 0.01
    n_estimators: int = 300
    max_depth: int = 5
    scale_pos_weight: float = 0.6
    seed: int = 4321  # no randomness in exact greedy; kept for configuration fidelity
    objective: str = "binary:logistic"
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    base_score: float = 0.5

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationError("eta must be > 0")
        if self.n_estimators < 1:
            raise ValidationError("n_estimators must be >= 1")
        if self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if not self.scale_pos_weight > 0:
            raise ValidationError("scale_pos_weight must be > 0")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValidationError("reg_lambda, gamma and min_child_weight must be >= 0")
        if not 0 < self.base_score < 1:
            raise ValidationError("base_score must be a probability in (0, 1)")
        if self.objective not in ("binary:logistic", "binary_logistic"):
            raise ValidationError(f"unsupported objective {self.objective!r}")


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``value`` holds the unshrunk leaf weight -G/(H + lambda).
    """

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            x = X[rows[inner], f[inner]]
            nd = node[inner]
            go_left = np.where(np.isnan(x), self.default_left[nd], x < self.threshold[nd])
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict_weight(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [None if f < 0 else float(t) for f, t in zip(self.feature, self.threshold)],
            "default_left": [bool(v) for v in self.default_left],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, d: dict, n_features: int | None = None) -> "Tree":
        try:
            feature = np.array(d["feature"], dtype=np.int64)
            n = len(feature)
            threshold = np.array([math.nan if t is None else float(t) for t in d["threshold"]], dtype=np.float64)
            default_left = np.array(d["default_left"], dtype=bool)
            left = np.array(d["left"], dtype=np.int64)
            right = np.array(d["right"], dtype=np.int64)
            value = np.array(d["value"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed tree: {exc!r}") from None
        if n == 0 or any(len(a) != n for a in (threshold, default_left, left, right, value)):
            raise ValidationError("tree arrays are empty or of unequal length")
        seen = np.zeros(n, dtype=np.int64)
        seen[0] = 1
        for i in range(n):
            if feature[i] < 0:
                continue
            if n_features is not None and feature[i] >= n_features:
                raise ValidationError(f"node {i} splits on feature {feature[i]} >= {n_features}")
            if not math.isfinite(threshold[i]):
                raise ValidationError(f"node {i} has a non-finite threshold")
            for c in (left[i], right[i]):
                if not i < c < n:
                    raise ValidationError(f"node {i} has child index {c} out of range")
                seen[c] += 1
        if np.any(seen != 1):
            raise ValidationError("corrupted tree: every node must be reachable exactly once")
        return cls(feature, threshold, default_left, left, right, value)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tree):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=(k == "threshold"))
            for k in ("feature", "threshold", "default_left", "left", "right", "value")
        )


@dataclass
class Model:
    params: TrainParams
    trees: list[Tree]
    schema_hash: str
    best_round: int | None = None
    feature_names: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.schema_hash:
            raise ValidationError("schema_hash must be non-empty")

    @property
    def n_used(self) -> int:
        return len(self.trees) if self.best_round is None else min(self.best_round, len(self.trees))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Model):
            return NotImplemented
        return (self.params == other.params and self.schema_hash == other.schema_hash
                and self.best_round == other.best_round and self.feature_names == other.feature_names
                and self.trees == other.trees)


def schema_hash(feature_names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(feature_names).encode()).hexdigest()


def logit(p: float) -> float:
    return math.log(p / (1 - p))


def sigmoid(m: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-m))


def gradients(y: np.ndarray, p: np.ndarray, scale_pos_weight: float) -> tuple[np.ndarray, np.ndarray]:
    g = p - y
    h = p * (1.0 - p)
    if scale_pos_weight != 1.0:
        w = np.where(y == 1, scale_pos_weight, 1.0)
        g = g * w
        h = h * w
    return g, h


# --- split search kernels ------------------------------------------------


# Gains closer than this (relative to the terms they are computed from)
# count as ties, so rounding in the gradient sums cannot override the
# feature / threshold / missing-left tie order. Child hessians within
# this fraction of the node hessian of min_child_weight count as equal.
TIE_RTOL = 1e-10


@numba.njit(cache=True, error_model="numpy")
def _gain(gl, hl, gr, hr, parent, lam):
    """Loss reduction of a split and its magnitude scale.

    ``parent`` is G^2 / (H + lambda) of the node.
    """
    a = gl * gl / (hl + lam)
    b = gr * gr / (hr + lam)
    return 0.5 * (a + b - parent), a + b + parent


@numba.njit(cache=True, error_model="numpy")
def _midpoint(a, b):
    m = a + (b - a) * 0.5
    if m <= a:
        m = b
    return m


@numba.njit(cache=True, error_model="numpy")
def _best_splits(xs, order, n_valid, slot, n_slots, g, h, G, H, lam, gamma, mcw):
    """Best split for every active node of one tree level.

    ``slot[r]`` is the active-node slot of row r or -1. ``order[f]`` lists
    rows by increasing value of feature f with missing values at the end;
    ``xs[f]`` holds the values in that order.
    """
    F, n = order.shape
    best_gain = np.zeros(n_slots)
    best_scale = np.zeros(n_slots)
    best_feat = np.full(n_slots, -1, np.int64)
    best_thr = np.zeros(n_slots)
    best_left = np.zeros(n_slots, np.bool_)
    GL = np.zeros(n_slots)
    HL = np.zeros(n_slots)
    Gm = np.zeros(n_slots)
    Hm = np.zeros(n_slots)
    Cm = np.zeros(n_slots, np.int64)
    last = np.zeros(n_slots)
    seen = np.zeros(n_slots, np.bool_)
    P = G * G / (H + lam)
    for f in range(F):
        GL[:] = 0.0
        HL[:] = 0.0
        Gm[:] = 0.0
        Hm[:] = 0.0
        Cm[:] = 0
        seen[:] = False
        for i in range(n_valid[f], n):
            r = order[f, i]
            s = slot[r]
            if s >= 0:
                Gm[s] += g[r]
                Hm[s] += h[r]
                Cm[s] += 1
        for i in range(n_valid[f]):
            r = order[f, i]
            s = slot[r]
            if s < 0:
                continue
            v = xs[f, i]
            if seen[s] and v > last[s]:
                # missing rows sent left
                gl = GL[s] + Gm[s]
                hl = HL[s] + Hm[s]
                gr = G[s] - gl
                hr = H[s] - hl
                if hl - mcw >= -TIE_RTOL * H[s] and hr - mcw >= -TIE_RTOL * H[s]:
                    gain, scale = _gain(gl, hl, gr, hr, P[s], lam)
                    gain -= gamma
                    if gain - best_gain[s] > TIE_RTOL * max(scale, best_scale[s]):
                        best_gain[s] = gain
                        best_scale[s] = scale
                        best_feat[s] = f
                        best_thr[s] = _midpoint(last[s], v)
                        best_left[s] = True
                # missing rows sent right; identical partition when none are missing
                if Cm[s] > 0:
                    gl = GL[s]
                    hl = HL[s]
                    gr = G[s] - gl
                    hr = H[s] - hl
                    if hl - mcw >= -TIE_RTOL * H[s] and hr - mcw >= -TIE_RTOL * H[s]:
                        gain, scale = _gain(gl, hl, gr, hr, P[s], lam)
                        gain -= gamma
                        if gain - best_gain[s] > TIE_RTOL * max(scale, best_scale[s]):
                            best_gain[s] = gain
                            best_scale[s] = scale
                            best_feat[s] = f
                            best_thr[s] = _midpoint(last[s], v)
                            best_left[s] = False
            GL[s] += g[r]
            HL[s] += h[r]
            last[s] = v
            seen[s] = True
    return best_gain, best_feat, best_thr, best_left


@numba.njit(cache=True, error_model="numpy")
def _node_sums(slot, n_slots, g, h):
    G = np.zeros(n_slots)
    H = np.zeros(n_slots)
    for r in range(len(slot)):
        s = slot[r]
        if s >= 0:
            G[s] += g[r]
            H[s] += h[r]
    return G, H


@numba.njit(cache=True, error_model="numpy")
def _route(X, slot, feat, thr, dleft, left_slot, right_slot):
    """Move rows of split slots to their child slots; other rows become -1."""
    out = np.full(len(slot), -1, np.int64)
    for r in range(len(slot)):
        s = slot[r]
        if s < 0 or feat[s] < 0:
            continue
        x = X[r, feat[s]]
        if np.isnan(x):
            go_left = dleft[s]
        else:
            go_left = x < thr[s]
        out[r] = left_slot[s] if go_left else right_slot[s]
    return out


def grow_tree(X, xs, order, n_valid, g, h, params: TrainParams) -> tuple[Tree, np.ndarray]:
    """Grow one tree level by level. Returns the tree and each row's leaf index."""
    lam, gamma, mcw = params.reg_lambda, params.gamma, params.min_child_weight
    n = X.shape[0]
    feature, threshold, dleft, left, right, value = [-1], [math.nan], [True], [-1], [-1], [0.0]
    leaf_of = np.zeros(n, dtype=np.int64)
    slot = np.zeros(n, dtype=np.int64)
    active = [0]  # node ids by slot
    depth = 0
    while active:
        k = len(active)
        G, H = _node_sums(slot, k, g, h)
        if depth < params.max_depth:
            bg, bf, bt, bl = _best_splits(xs, order, n_valid, slot, k, g, h, G, H, lam, gamma, mcw)
        else:
            bf = np.full(k, -1, np.int64)
            bt = np.zeros(k)
            bl = np.zeros(k, np.bool_)
        left_slot = np.full(k, -1, np.int64)
        right_slot = np.full(k, -1, np.int64)
        nxt = []
        for s, node in enumerate(active):
            if bf[s] < 0:
                value[node] = -G[s] / (H[s] + lam)
                continue
            feature[node], threshold[node], dleft[node] = int(bf[s]), float(bt[s]), bool(bl[s])
            for side in (left, right):
                child = len(feature)
                feature.append(-1)
                threshold.append(math.nan)
                dleft.append(True)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                side[node] = child
            left_slot[s] = len(nxt)
            nxt.append(left[node])
            right_slot[s] = len(nxt)
            nxt.append(right[node])
        active_arr = np.array(active, dtype=np.int64)
        done = (slot >= 0) & (bf[np.maximum(slot, 0)] < 0)
        leaf_of[done] = active_arr[slot[done]]
        slot = _route(X, slot, bf, bt, bl, left_slot, right_slot)
        active = nxt
        depth += 1
    tree = Tree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
        np.array(dleft, dtype=bool), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value, dtype=np.float64),
    )
    return tree, leaf_of


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row permutation sorting rows lexicographically by (features, label)."""
    nan = np.isnan(X)
    filled = np.where(nan, 0.0, X)
    keys = [y]
    for j in range(X.shape[1] - 1, -1, -1):
        keys += [filled[:, j], nan[:, j]]
    return np.lexsort(keys)


def presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature row order (missing last), the values in that order, and non-missing counts."""
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
    xs = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
    n_valid = (~np.isnan(X)).sum(axis=0).astype(np.int64)
    return order, xs, n_valid


def fit(
    X: np.ndarray,
    y: np.ndarray,
    params: TrainParams = TrainParams(),
    eval_X: np.ndarray | None = None,
    eval_y: np.ndarray | None = None,
    feature_names: Sequence[str] | None = None,
) -> Model:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("training matrix must have at least one row")
    if y.shape != (X.shape[0],):
        raise ValidationError("label vector does not match the training matrix")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0 or 1")
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValidationError("feature_names length does not match the matrix")
    if eval_X is not None:
        eval_X = np.asarray(eval_X, dtype=np.float64)
        eval_y = np.asarray(eval_y, dtype=np.float64)
        if eval_X.ndim != 2 or eval_X.shape[1] != X.shape[1]:
            raise SchemaMismatchError("eval set does not share the training schema")

    perm = canonical_order(X, y)
    X = np.ascontiguousarray(X[perm])
    y = y[perm]
    order, xs, n_valid = presort(X)

    base = logit(params.base_score)
    margin = np.full(len(y), base)
    eval_margin = None if eval_X is None else np.full(len(eval_y), base)
    trees: list[Tree] = []
    history: list[dict] = []
    for rnd in range(1, params.n_estimators + 1):
        p = sigmoid(margin)
        g, h = gradients(y, p, params.scale_pos_weight)
        tree, leaf_of = grow_tree(X, xs, order, n_valid, g, h, params)
        trees.append(tree)
        margin = margin + params.eta * tree.value[leaf_of]
        rec = {"round": rnd, "train_logloss": logloss(sigmoid(margin), y)}
        if eval_X is not None:
            eval_margin = eval_margin + params.eta * tree.predict_weight(eval_X)
            rec["eval_logloss"] = logloss(sigmoid(eval_margin), eval_y) if len(eval_y) else math.nan
        history.append(rec)

    best = None
    if eval_X is not None and len(eval_y):
        losses = [r["eval_logloss"] for r in history]
        best = int(np.argmin(losses)) + 1
    return Model(params, trees, schema_hash(names), best, names, history)


def train(matrix, params: TrainParams = TrainParams(), eval_set=None) -> Model:
    """Train on a FeatureMatrix, optionally tracking logloss on ``eval_set``."""
    if len(matrix) == 0:
        raise ValidationError("cannot train on an empty matrix")
    if eval_set is not None and eval_set.feature_columns != matrix.feature_columns:
        raise SchemaMismatchError("eval set columns differ from training columns")
    return fit(
        matrix.X, matrix.y, params,
        None if eval_set is None else eval_set.X,
        None if eval_set is None else eval_set.y,
        matrix.feature_columns,
    )


def predict_margin(model: Model, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or (model.feature_names and X.shape[1] != len(model.feature_names)):
        raise SchemaMismatchError(f"expected {len(model.feature_names)} features, got shape {X.shape}")
    k = model.n_used if n_trees is None else n_trees
    margin = np.full(X.shape[0], logit(model.params.base_score))
    for tree in model.trees[:k]:
        margin = margin + model.params.eta * tree.predict_weight(X)
    return margin


def predict_proba(model: Model, rows, n_trees: int | None = None) -> np.ndarray:
    """Probabilities for a FeatureMatrix (schema-checked) or a raw array."""
    if hasattr(rows, "feature_columns"):
        if schema_hash(rows.feature_columns) != model.schema_hash:
            raise SchemaMismatchError("rows do not match the model's training schema")
        X = rows.X
    else:
        X = rows
    return sigmoid(predict_margin(model, X, n_trees))


# --- persistence ---------------------------------------------------------


def to_document(model: Model) -> dict:
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "params": asdict(model.params),
        "schema_hash": model.schema_hash,
        "best_round": model.best_round,
        "feature_names": list(model.feature_names),
        "trees": [t.to_dict() for t in model.trees],
    }


def serialize(model: Model) -> str:
    return json.dumps(to_document(model), sort_keys=True, allow_nan=False, separators=(",", ":"))


def deserialize(text: str) -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model document is not valid JSON: {exc.msg} at {exc.pos}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ValidationError("not a sentitrade model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {doc.get('version')!r}")
    try:
        params = TrainParams(**doc["params"])
        names = list(doc.get("feature_names", []))
        trees = [Tree.from_dict(t, len(names) or None) for t in doc["trees"]]
        return Model(params, trees, doc["schema_hash"], doc["best_round"], names)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"incomplete model document: {exc!r}") from None

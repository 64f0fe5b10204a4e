"""Binary classification metrics."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

EPS = 1e-15


def logloss(p, y) -> float:
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValidationError("logloss of an empty sample is undefined")
    p = np.clip(p, EPS, 1 - EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the average of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(x)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2
    return ranks


def auc(p, y) -> float:
    """Mann-Whitney form: P(score of random positive > random negative), ties 1/2."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    if p.shape != y.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {y.shape}")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise ValidationError("AUC is undefined when only one class is present")
    r = midranks(p)
    # rank sums are multiples of 1/2 and exact in float64 at these sizes
    u = r[pos].sum() - n1 * (n1 + 1) / 2
    return float(u / (n1 * n0))


def confusion(pred, y) -> dict[str, int]:
    pred = np.asarray(pred).astype(int)
    y = np.asarray(y).astype(int)
    return {
        "tp": int(np.sum((pred == 1) & (y == 1))),
        "fp": int(np.sum((pred == 1) & (y == 0))),
        "tn": int(np.sum((pred == 0) & (y == 0))),
        "fn": int(np.sum((pred == 0) & (y == 1))),
    }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def macro_scores(pred, y) -> dict[str, float]:
    """Unweighted mean over both classes; a class never predicted has precision 0."""
    c = confusion(pred, y)
    p1, r1, f1 = _prf(c["tp"], c["fp"], c["fn"])
    p0, r0, f0 = _prf(c["tn"], c["fn"], c["fp"])
    return {
        "precision": (p0 + p1) / 2,
        "recall": (r0 + r1) / 2,
        "f1": (f0 + f1) / 2,
    }

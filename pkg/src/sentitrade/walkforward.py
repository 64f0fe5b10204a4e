"""Rolling walk-forward evaluation.

Each fold trains on a block of past trading days while tracking logloss
on the following validation day, picks the best boosting round, retrains
on train + validation days with that many rounds and predicts the test
day. Folds roll forward one day at a time.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from . import gbdt
from .bars import WINDOW
from .errors import ParseError, ValidationError
from .features import FeatureMatrix
from .metrics import auc, confusion, logloss, macro_scores

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldSpec:
    train_days: tuple[date, ...]
    val_days: tuple[date, ...]
    test_days: tuple[date, ...]

    def __post_init__(self):
        for name in ("train_days", "val_days", "test_days"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        all_days = self.train_days + self.val_days + self.test_days
        if len(set(all_days)) != len(all_days):
            raise ValidationError("fold days must be distinct")
        if not self.train_days or not self.test_days:
            raise ValidationError("a fold needs training and test days")
        if self.val_days and not max(self.train_days) < min(self.val_days):
            raise ValidationError("validation days must follow every training day")
        last_fit = max(self.train_days + self.val_days)
        if not last_fit < min(self.test_days):
            raise ValidationError("test days must follow every training and validation day")

    @property
    def val_day(self) -> date | None:
        return self.val_days[0] if self.val_days else None

    @property
    def test_day(self) -> date:
        return self.test_days[0]


def make_folds(dates: Sequence[date], train_n: int = 200, val_n: int = 1, test_n: int = 1) -> list[FoldSpec]:
    """One fold per admissible test block, stepping one trading day at a time."""
    dates = sorted(set(dates))
    need = train_n + val_n + test_n
    if train_n < 1 or val_n < 0 or test_n < 1:
        raise ValidationError("train_n and test_n must be >= 1, val_n >= 0")
    if len(dates) < need:
        raise ValidationError(
            f"walk-forward needs at least {need} trading days ({train_n}+{val_n}+{test_n}), got {len(dates)}"
        )
    folds = []
    for i in range(len(dates) - need + 1):
        folds.append(FoldSpec(
            tuple(dates[i:i + train_n]),
            tuple(dates[i + train_n:i + train_n + val_n]),
            tuple(dates[i + train_n + val_n:i + need]),
        ))
    return folds


@dataclass(frozen=True)
class LedgerEntry:
    window: datetime
    probability: float
    predicted: int
    label: int

    @property
    def target(self) -> datetime:
        """The bar whose direction the prediction is about."""
        return self.window + WINDOW


@dataclass
class PredictionLedger:
    entries: list[LedgerEntry] = field(default_factory=list)
    threshold: float = 0.5

    def __post_init__(self):
        for e in self.entries:
            if e.predicted != int(e.probability >= self.threshold):
                raise ValidationError(f"entry at {e.window}: predicted class disagrees with threshold")
        for a, b in zip(self.entries, self.entries[1:]):
            if not b.window > a.window:
                raise ValidationError(f"ledger entries must be strictly increasing in time: {a.window} then {b.window}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def windows(self) -> list[datetime]:
        return [e.window for e in self.entries]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([e.probability for e in self.entries])

    @property
    def predictions(self) -> np.ndarray:
        return np.array([e.predicted for e in self.entries], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def days(self) -> list[date]:
        return list(dict.fromkeys(e.window.date() for e in self.entries))


@dataclass
class FoldResult:
    index: int
    fold: FoldSpec
    best_round: int | None = None
    history: list[dict] = field(default_factory=list)
    entries: list[LedgerEntry] = field(default_factory=list)
    model: gbdt.Model | None = None
    n_train: int = 0
    n_val: int = 0
    skipped: str = ""


def select_round(model: gbdt.Model, X_val: np.ndarray, y_val: np.ndarray, metric: str = "logloss") -> int:
    """Best boosting round on validation data; ties go to the earliest round."""
    if metric == "logloss":
        return int(np.argmin([r["eval_logloss"] for r in model.history])) + 1
    if metric != "auc":
        raise ValidationError(f"unknown selection metric {metric!r}")
    if len(set(y_val.tolist())) < 2:
        logger.info("validation day has one class; selecting by logloss instead of AUC")
        return select_round(model, X_val, y_val, "logloss")
    margin = np.full(len(y_val), gbdt.logit(model.params.base_score))
    scores = []
    for tree in model.trees:
        margin = margin + model.params.eta * tree.predict_weight(X_val)
        scores.append(auc(margin, y_val))
    return int(np.argmax(scores)) + 1


def run_fold(
    matrix: FeatureMatrix,
    fold: FoldSpec,
    params: gbdt.TrainParams = gbdt.TrainParams(),
    select_by: str = "logloss",
    threshold: float = 0.5,
    index: int = 0,
) -> FoldResult:
    result = FoldResult(index, fold)
    train_rows = matrix.rows_for_days(fold.train_days)
    val_rows = matrix.rows_for_days(fold.val_days)
    test_rows = matrix.rows_for_days(fold.test_days)
    if len(test_rows) == 0:
        result.skipped = "no rows on test day"
        logger.warning("fold %d skipped: no rows on test day %s", index, fold.test_day)
        return result
    if len(train_rows) == 0:
        result.skipped = "no training rows"
        logger.warning("fold %d skipped: no training rows", index)
        return result
    test_windows = {matrix.windows[i] for i in test_rows}
    fit_windows = {matrix.windows[i] for i in np.concatenate([train_rows, val_rows])}
    if test_windows & fit_windows:
        raise ValidationError(f"fold {index}: test windows overlap training windows")

    X, y = matrix.X, matrix.y
    names = matrix.feature_columns
    if len(val_rows):
        stage1 = gbdt.fit(X[train_rows], y[train_rows], params, X[val_rows], y[val_rows], names)
        best = select_round(stage1, X[val_rows], y[val_rows], select_by)
        result.history = stage1.history
    else:
        best = params.n_estimators
    fit_rows = np.concatenate([train_rows, val_rows])
    stage2_params = replace(params, n_estimators=best)
    model = gbdt.fit(X[fit_rows], y[fit_rows], stage2_params, feature_names=names)
    probs = gbdt.predict_proba(model, X[test_rows])
    result.best_round = best
    result.model = model
    result.n_train = len(train_rows)
    result.n_val = len(val_rows)
    result.entries = [
        LedgerEntry(matrix.windows[i], float(p), int(p >= threshold), int(y[i]))
        for i, p in zip(test_rows, probs)
    ]
    logger.info("fold %d: test %s best_round=%d n_test=%d", index, fold.test_day, best, len(test_rows))
    return result


def _run_fold_star(args):
    return run_fold(*args)


def run_all(
    matrix: FeatureMatrix,
    params: gbdt.TrainParams,
    folds: Sequence[FoldSpec],
    select_by: str = "logloss",
    threshold: float = 0.5,
    workers: int = 1,
) -> tuple[PredictionLedger, list[FoldResult]]:
    if not folds:
        raise ValidationError("no folds to run")
    jobs = [(matrix, f, params, select_by, threshold, i) for i, f in enumerate(folds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold_star, jobs))
    else:
        results = [run_fold(*j) for j in jobs]
    done = [r for r in results if not r.skipped]
    skipped = len(results) - len(done)
    if skipped:
        logger.warning("%d of %d folds skipped", skipped, len(results))
    if not done:
        raise ValidationError("no valid folds: every fold was skipped")
    entries = sorted((e for r in done for e in r.entries), key=lambda e: e.window)
    return PredictionLedger(entries, threshold), results


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    auc: float | None
    logloss: float
    confusion: dict
    n: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "auc": self.auc, "logloss": self.logloss,
            "confusion": self.confusion, "n": self.n,
        }


def compute_metrics(ledger: PredictionLedger) -> MetricsReport:
    if not len(ledger):
        raise ValidationError("cannot compute metrics of an empty ledger")
    p, pred, y = ledger.probabilities, ledger.predictions, ledger.labels
    macro = macro_scores(pred, y)
    try:
        a = auc(p, y)
    except ValidationError:
        a = None
    return MetricsReport(macro["precision"], macro["recall"], macro["f1"], a,
                         logloss(p, y), confusion(pred, y), len(ledger))


# --- persistence ---------------------------------------------------------

LEDGER_HEADER = ["window", "target", "probability", "prediction", "label"]


def write_ledger(ledger: PredictionLedger, writer: IO[str], config_hash: str = "") -> None:
    if config_hash:
        writer.write(f"# config_hash={config_hash}\n")
    writer.write(f"# threshold={ledger.threshold!r}\n")
    out = csv.writer(writer, lineterminator="\n")
    out.writerow(LEDGER_HEADER)
    for e in ledger.entries:
        out.writerow([e.window.isoformat(), e.target.isoformat(), repr(e.probability), e.predicted, e.label])


def read_ledger(reader: IO[str]) -> tuple[PredictionLedger, str]:
    meta = {}
    lines = reader.read().splitlines()
    while lines and lines[0].startswith("#"):
        k, _, v = lines.pop(0)[1:].strip().partition("=")
        meta[k] = v
    rows = csv.reader(lines)
    header = next(rows, None)
    if header != LEDGER_HEADER:
        raise ParseError(f"ledger header must be {LEDGER_HEADER}, got {header}")
    entries = []
    for lineno, row in enumerate(rows, start=2):
        try:
            entries.append(LedgerEntry(datetime.fromisoformat(row[0]), float(row[2]), int(row[3]), int(row[4])))
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad ledger row: {exc}", line=lineno) from None
    threshold = float(meta.get("threshold", 0.5))
    return PredictionLedger(entries, threshold), meta.get("config_hash", "")


def write_history(results: Sequence[FoldResult], writer: IO[str], config_hash: str = "") -> None:
    if config_hash:
        writer.write(f"# config_hash={config_hash}\n")
    out = csv.writer(writer, lineterminator="\n")
    out.writerow(["fold", "round", "train_logloss", "eval_logloss"])
    for r in results:
        for h in r.history:
            ev = h.get("eval_logloss", math.nan)
            out.writerow([r.index, h["round"], repr(h["train_logloss"]), "" if math.isnan(ev) else repr(ev)])


def write_folds(results: Sequence[FoldResult], writer: IO[str], config_hash: str = "") -> None:
    if config_hash:
        writer.write(f"# config_hash={config_hash}\n")
    out = csv.writer(writer, lineterminator="\n")
    out.writerow(["fold", "train_start", "train_end", "val_day", "test_day",
                  "best_round", "n_train", "n_val", "n_test", "status"])
    for r in results:
        f = r.fold
        out.writerow([
            r.index, f.train_days[0].isoformat(), f.train_days[-1].isoformat(),
            f.val_day.isoformat() if f.val_day else "", f.test_day.isoformat(),
            "" if r.best_round is None else r.best_round, r.n_train, r.n_val, len(r.entries),
            r.skipped or "ok",
        ])


def save_models(results: Sequence[FoldResult], directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for r in results:
        if r.model is not None:
            (directory / f"fold_{r.index:04d}.json").write_text(gbdt.serialize(r.model) + "\n")

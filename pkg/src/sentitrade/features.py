"""Per-window feature matrix: tweet aggregates, bar fields, lags and labels.

Every bar in the series yields one candidate row keyed by its window.
Tweets are bucketed by the floor of their local time, aggregated into
seven statistics per attribute, lagged within the trading day, and the
row is labeled by whether the next bar closes higher.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .bars import WINDOW, BarSeries, floor_to_window
from .corpus import COUNT_FIELDS, CleanTweet
from .errors import ParseError, ValidationError
from .sentiment import ScorerRegistry, SentimentVector, score_all

logger = logging.getLogger(__name__)

STATS = ("mean", "std", "min", "max", "sum", "var", "count")
BAR_FIELDS = ("open", "high", "low", "close", "tickvol", "vol")
TWEET_ATTRS = COUNT_FIELDS + ("hour", "word_count", "text_length")
SCORER_OUTPUTS = ("score", "polarity")
LABEL = "label"


@dataclass(frozen=True)
class LagSpec:
    lags: tuple[int, ...] = (1, 2, 3, 4)

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(k) for k in self.lags))
        if any(k <= 0 for k in self.lags) or len(set(self.lags)) != len(self.lags):
            raise ValidationError(f"lags must be positive and distinct, got {self.lags}")

    @property
    def depth(self) -> int:
        return max(self.lags, default=0)


@dataclass(frozen=True)
class FeatureConfig:
    tweet_attrs: tuple[str, ...] = TWEET_ATTRS
    scorer_outputs: tuple[str, ...] = SCORER_OUTPUTS
    lags: LagSpec = LagSpec()

    def __post_init__(self):
        bad = [a for a in self.tweet_attrs if a not in TWEET_ATTRS]
        if bad:
            raise ValidationError(f"unknown tweet attributes {bad}")
        bad = [o for o in self.scorer_outputs if o not in SCORER_OUTPUTS]
        if bad:
            raise ValidationError(f"unknown scorer outputs {bad}")


@dataclass
class FeatureMatrix:
    """Rows keyed by 5-minute window; NaN marks a declared-missing value."""

    windows: list[datetime]
    columns: list[str]
    values: np.ndarray
    label: str = LABEL
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape != (len(self.windows), len(self.columns)):
            raise ValidationError(
                f"values shape {self.values.shape} does not match {len(self.windows)} rows x {len(self.columns)} columns"
            )
        for a, b in zip(self.windows, self.windows[1:]):
            if not b > a:
                raise ValidationError(f"rows must be strictly increasing in window: {a} then {b}")

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.columns if c != self.label]

    @property
    def X(self) -> np.ndarray:
        idx = [i for i, c in enumerate(self.columns) if c != self.label]
        return self.values[:, idx]

    @property
    def y(self) -> np.ndarray:
        return self.column(self.label)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    @property
    def days(self) -> list[date]:
        return [w.date() for w in self.windows]

    def trading_days(self) -> list[date]:
        return list(dict.fromkeys(self.days))

    def rows_for_days(self, days: Iterable[date]) -> np.ndarray:
        wanted = set(days)
        return np.array([i for i, d in enumerate(self.days) if d in wanted], dtype=np.int64)

    def take(self, rows: np.ndarray) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix([self.windows[i] for i in rows], list(self.columns),
                             self.values[rows], self.label, self.provenance)

    def schema_digest(self) -> str:
        return hashlib.sha256("\n".join(self.feature_columns).encode()).hexdigest()


# --- scoring and bucketing -----------------------------------------------


def score_corpus(tweets: Sequence[CleanTweet], reg: ScorerRegistry) -> list[SentimentVector]:
    return [score_all(t.raw.text, t.scoring_text, reg) for t in tweets]


def bucket_tweets(
    scored: Iterable[tuple[CleanTweet, SentimentVector]]
) -> dict[datetime, list[tuple[CleanTweet, SentimentVector]]]:
    groups: dict[datetime, list] = {}
    for tweet, vec in scored:
        groups.setdefault(floor_to_window(tweet.local_time), []).append((tweet, vec))
    return dict(sorted(groups.items()))


def attribute_names(scorer_ids: Sequence[str], cfg: FeatureConfig = FeatureConfig()) -> list[str]:
    names = [f"{sid}_{out}" for sid in scorer_ids for out in cfg.scorer_outputs]
    return names + list(cfg.tweet_attrs)


def attribute_row(tweet: CleanTweet, vec: SentimentVector, attrs: Sequence[str]) -> list[float]:
    out = []
    for a in attrs:
        if a.endswith("_score") and a[:-6] in vec.scores:
            out.append(float(vec.scores[a[:-6]]))
        elif a.endswith("_polarity") and a[:-9] in vec.polarities:
            out.append(float(vec.polarities[a[:-9]]))
        else:
            out.append(tweet.numeric(a))
    return out


def window_stats(values: np.ndarray) -> dict[str, np.ndarray]:
    """Column-wise statistics of a (tweets x attributes) block.

    Population variance; the mean is clamped into [min, max] so rounding
    in sum/n can never push it outside the observed range.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n == 0:
        nan = np.full(values.shape[1], np.nan)
        return {"mean": nan, "std": nan, "min": nan, "max": nan, "sum": nan, "var": nan,
                "count": np.zeros(values.shape[1])}
    total = values.sum(axis=0)
    lo, hi = values.min(axis=0), values.max(axis=0)
    mean = np.clip(total / n, lo, hi)
    var = ((values - mean) ** 2).sum(axis=0) / n
    var[lo == hi] = 0.0
    std = np.sqrt(var)
    return {"mean": mean, "std": std, "min": lo, "max": hi, "sum": total, "var": std * std,
            "count": np.full(values.shape[1], float(n))}


def aggregate_window(group: Sequence[tuple[CleanTweet, SentimentVector]], attrs: Sequence[str]) -> dict[str, float]:
    block = np.array([attribute_row(t, v, attrs) for t, v in group], dtype=np.float64).reshape(len(group), len(attrs))
    stats = window_stats(block)
    return {f"{a}_{s}": float(stats[s][j]) for j, a in enumerate(attrs) for s in STATS}


def stat_columns(attrs: Sequence[str]) -> list[str]:
    return [f"{a}_{s}" for a in attrs for s in STATS]


# --- lags and labels -----------------------------------------------------


def add_lags(
    windows: Sequence[datetime], values: np.ndarray, columns: Sequence[str], spec: LagSpec = LagSpec()
) -> tuple[list[datetime], np.ndarray, list[str]]:
    """Append ``<col>_lag_<k>`` for every column, shifting by k rows within a day.

    Rows without k predecessors on the same day are dropped. Lags count
    rows (bar positions), not calendar minutes.
    """
    values = np.asarray(values, dtype=np.float64)
    if not spec.lags:
        return list(windows), values, list(columns)
    n = len(windows)
    pos_in_day = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        if windows[i].date() == windows[i - 1].date():
            pos_in_day[i] = pos_in_day[i - 1] + 1
    keep = np.nonzero(pos_in_day >= spec.depth)[0]
    blocks = [values[keep]]
    names = list(columns)
    for k in spec.lags:
        blocks.append(values[keep - k])
        names += [f"{c}_lag_{k}" for c in columns]
    return [windows[i] for i in keep], np.hstack(blocks), names


def next_window_close(bars: BarSeries, window: datetime) -> float | None:
    nxt = bars.get(window + WINDOW)
    return None if nxt is None else nxt.close


def attach_label(
    windows: Sequence[datetime], values: np.ndarray, bars: BarSeries
) -> tuple[list[datetime], np.ndarray, np.ndarray]:
    """Label each row 1 if the next 5-minute bar closes above this one, else 0.

    Rows whose next bar is missing (end of day, gaps) are dropped.
    """
    keep, labels = [], []
    for i, w in enumerate(windows):
        cur, nxt = bars.get(w), bars.get(w + WINDOW)
        if cur is None or nxt is None:
            continue
        keep.append(i)
        labels.append(1.0 if nxt.close > cur.close else 0.0)
    keep_arr = np.array(keep, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    return [windows[i] for i in keep], values[keep_arr] if len(keep) else values[:0], np.array(labels)


# --- assembly ------------------------------------------------------------


def assemble(
    tweets: Sequence[CleanTweet],
    bars: BarSeries,
    registry: ScorerRegistry,
    cfg: FeatureConfig = FeatureConfig(),
    vectors: Sequence[SentimentVector] | None = None,
) -> FeatureMatrix:
    """Build the labeled per-window matrix.

    Columns: bar fields, per-attribute statistics, lag blocks grouped by
    lag, then the label. Windows with a bar but no tweets keep a row with
    count 0 and missing aggregates.
    """
    if vectors is None:
        vectors = score_corpus(tweets, registry)
    attrs = attribute_names(registry.ids, cfg)
    groups = bucket_tweets(zip(tweets, vectors))
    orphan = sum(len(g) for w, g in groups.items() if bars.get(w) is None)
    if orphan:
        logger.info("%d tweets fall in windows without a bar and are ignored", orphan)

    base_cols = list(BAR_FIELDS) + stat_columns(attrs)
    empty = aggregate_window([], attrs)
    rows = []
    windows = []
    for bar in bars:
        agg = aggregate_window(groups[bar.timestamp], attrs) if bar.timestamp in groups else empty
        row = [float(bar.open), float(bar.high), float(bar.low), float(bar.close), float(bar.tickvol), float(bar.vol)]
        row += [agg[c] for c in base_cols[len(BAR_FIELDS):]]
        rows.append(row)
        windows.append(bar.timestamp)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(base_cols))

    windows, values, columns = add_lags(windows, values, base_cols, cfg.lags)
    windows, values, labels = attach_label(windows, values, bars)
    values = np.hstack([values, labels.reshape(-1, 1)])
    columns = columns + [LABEL]
    provenance = column_provenance(columns, registry.ids, cfg)
    return FeatureMatrix(windows, columns, values, LABEL, provenance)


def column_provenance(columns: Sequence[str], scorer_ids: Sequence[str], cfg: FeatureConfig) -> dict:
    prov = {}
    for c in columns:
        base, lag = c, 0
        if "_lag_" in c:
            base, k = c.rsplit("_lag_", 1)
            lag = int(k)
        if base == LABEL:
            prov[c] = {"source": "label"}
        elif base in BAR_FIELDS:
            prov[c] = {"source": "bar", "field": base, "lag": lag}
        else:
            attr, stat = base.rsplit("_", 1)
            src = "tweet"
            for sid in scorer_ids:
                if attr in (f"{sid}_{o}" for o in cfg.scorer_outputs):
                    src = f"scorer:{sid}"
            prov[c] = {"source": src, "attribute": attr, "stat": stat, "lag": lag}
    return prov


# --- persistence ---------------------------------------------------------


def _fmt(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_matrix(m: FeatureMatrix, writer: IO[str], config_hash: str = "") -> None:
    if config_hash:
        writer.write(f"# config_hash={config_hash}\n")
    out = csv.writer(writer, lineterminator="\n")
    out.writerow(["window"] + m.columns)
    for w, row in zip(m.windows, m.values):
        out.writerow([w.isoformat()] + [_fmt(v) for v in row])


def read_matrix(reader: IO[str], label: str = LABEL) -> tuple[FeatureMatrix, str]:
    """Return the matrix and the config hash found in its header comment."""
    text = reader.read()
    config_hash = ""
    lines = text.splitlines()
    while lines and lines[0].startswith("#"):
        key, _, val = lines.pop(0)[1:].strip().partition("=")
        if key == "config_hash":
            config_hash = val
    rows = csv.reader(lines)
    try:
        header = next(rows)
    except StopIteration:
        raise ParseError("feature matrix has no header") from None
    if not header or header[0] != "window":
        raise ParseError("feature matrix header must start with 'window'", line=1)
    windows, vals = [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            windows.append(datetime.fromisoformat(row[0]))
            vals.append([float(v) if v != "" else math.nan for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"bad matrix row: {exc}", line=lineno) from None
    values = np.array(vals, dtype=np.float64).reshape(len(vals), len(header) - 1)
    return FeatureMatrix(windows, header[1:], values, label), config_hash


def manifest(m: FeatureMatrix, config_hash: str, extra: Mapping | None = None) -> dict:
    doc = {
        "columns": m.columns,
        "label": m.label,
        "n_rows": len(m),
        "window_minutes": int(WINDOW.total_seconds() // 60),
        "schema_digest": m.schema_digest(),
        "config_hash": config_hash,
        "provenance": m.provenance,
    }
    if extra:
        doc.update(extra)
    return doc


# --- exploratory statistics ----------------------------------------------


def class_balance(n_up: int, n_down: int) -> dict:
    total = n_up + n_down
    up = n_up / total if total else 0.0
    down = n_down / total if total else 0.0
    return {
        "up": n_up, "down": n_down,
        "up_fraction": up, "down_fraction": down,
        "text": f"up {n_up} ({up * 100:.1f}%) / down {n_down} ({down * 100:.1f}%)",
    }


def label_correlations(m: FeatureMatrix) -> dict[str, dict]:
    """Pearson correlation of each feature with the label over rows where both exist."""
    y = m.y
    out = {}
    for j, c in enumerate(m.columns):
        if c == m.label:
            continue
        x = m.values[:, j]
        ok = ~np.isnan(x) & ~np.isnan(y)
        xs, ys = x[ok], y[ok]
        if len(xs) < 2 or np.all(xs == xs[0]) or np.all(ys == ys[0]):
            out[c] = {"r": 0.0, "defined": False}
            continue
        xd, yd = xs - xs.mean(), ys - ys.mean()
        r = float((xd * yd).sum() / math.sqrt((xd * xd).sum() * (yd * yd).sum()))
        out[c] = {"r": r, "defined": True}
    return out


def polarity_distribution(vectors: Sequence[SentimentVector], scorer_ids: Sequence[str]) -> dict[str, dict[str, int]]:
    dist = {sid: {"-1": 0, "0": 0, "1": 0} for sid in scorer_ids}
    for v in vectors:
        for sid in scorer_ids:
            dist[sid][str(v.polarities[sid])] += 1
    return dist


def exploratory_report(
    m: FeatureMatrix, vectors: Sequence[SentimentVector] | None = None, scorer_ids: Sequence[str] = ()
) -> dict:
    y = m.y
    n_up = int(np.sum(y == 1))
    n_down = int(np.sum(y == 0))
    report = {"class_balance": class_balance(n_up, n_down)}
    if vectors is not None:
        report["polarity_distribution"] = polarity_distribution(vectors, scorer_ids)
    report["label_correlation"] = label_correlations(m)
    return report


def render_report_text(report: Mapping) -> str:
    lines = [f"class balance: {report['class_balance']['text']}"]
    for sid, d in report.get("polarity_distribution", {}).items():
        lines.append(f"{sid}: -1={d['-1']} 0={d['0']} +1={d['1']}")
    corr = report.get("label_correlation", {})
    undefined = [c for c, v in corr.items() if not v["defined"]]
    ranked = sorted(((abs(v["r"]), c, v["r"]) for c, v in corr.items() if v["defined"]), reverse=True)
    for _, c, r in ranked[:10]:
        lines.append(f"corr(label, {c}) = {r:+.4f}")
    if undefined:
        lines.append(f"{len(undefined)} constant columns with undefined correlation")
    return "\n".join(lines) + "\n"

"""Gross-pnl trading simulation and the random-model baseline.

A prediction made at window t is about the bar that opens at t + 5 min,
so that is the bar traded: class 1 buys at its open and sells at its
close, class 0 sells short at the open and covers at the close. All
money arithmetic is exact ``Decimal``; no fees, slippage or borrow cost.
"""

from __future__ import annotations

import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import Decimal
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np

from . import plotting
from .bars import WINDOW, BarSeries
from .errors import ValidationError
from .walkforward import PredictionLedger

logger = logging.getLogger(__name__)

LOT = 100
FREQUENCIES = ("per-bar", "first-bar-of-day")
ZERO = Decimal(0)


@dataclass(frozen=True)
class TradeRecord:
    window: datetime  # prediction window; the traded bar opens at window + 5 min
    side: str
    open_price: Decimal
    close_price: Decimal
    lot: int
    pnl: Decimal

    def __post_init__(self):
        if self.side not in ("long", "short"):
            raise ValidationError(f"side must be long or short, got {self.side!r}")
        if self.pnl != trade_pnl(self.side, self.open_price, self.close_price, self.lot):
            raise ValidationError(f"trade at {self.window}: pnl does not match side and prices")

    @property
    def bar(self) -> datetime:
        return self.window + WINDOW

    @property
    def day(self) -> date:
        return self.bar.date()


def trade_pnl(side: str, open_price: Decimal, close_price: Decimal, lot: int = LOT) -> Decimal:
    move = close_price - open_price
    return lot * move if side == "long" else lot * -move


def make_trade(window: datetime, predicted: int, bars: BarSeries, lot: int = LOT) -> TradeRecord:
    bar = bars.get(window + WINDOW)
    if bar is None:
        raise ValidationError(f"no bar at {(window + WINDOW).isoformat()} to trade the prediction made at {window.isoformat()}")
    side = "long" if predicted == 1 else "short"
    return TradeRecord(window, side, bar.open, bar.close, lot, trade_pnl(side, bar.open, bar.close, lot))


def tradable(windows: Sequence[datetime], frequency: str = "per-bar") -> list[int]:
    """Indices of windows that trade under ``frequency``."""
    if frequency not in FREQUENCIES:
        raise ValidationError(f"frequency must be one of {FREQUENCIES}, got {frequency!r}")
    if frequency == "per-bar":
        return list(range(len(windows)))
    seen, out = set(), []
    for i, w in enumerate(windows):
        if w.date() not in seen:
            seen.add(w.date())
            out.append(i)
    return out


def simulate(
    ledger: PredictionLedger, bars: BarSeries, lot: int = LOT, frequency: str = "per-bar"
) -> list[TradeRecord]:
    entries = ledger.entries
    idx = tradable([e.window for e in entries], frequency)
    return [make_trade(entries[i].window, entries[i].predicted, bars, lot) for i in idx]


def daily_pnl(trades: Sequence[TradeRecord]) -> dict[date, Decimal]:
    out: dict[date, Decimal] = OrderedDict()
    for t in trades:
        out[t.day] = out.get(t.day, ZERO) + t.pnl
    return out


def cumulative(values: Sequence[Decimal]) -> list[Decimal]:
    out, acc = [], ZERO
    for v in values:
        acc += v
        out.append(acc)
    return out


# --- random baseline -----------------------------------------------------


@dataclass(frozen=True)
class RandomEnsembleConfig:
    n_models: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if self.n_models < 1:
            raise ValidationError("n_models must be >= 1")


@dataclass
class BaselineResult:
    totals: list[Decimal]
    mean_daily: dict[date, Decimal]
    mean_per_trade: list[Decimal]

    @property
    def mean_total(self) -> Decimal:
        return sum(self.totals, ZERO) / len(self.totals)


def _as_units(values: Sequence[Decimal]) -> tuple[np.ndarray, int]:
    """Scale decimals to exact int64 multiples of 10**exp."""
    exp = min((v.as_tuple().exponent for v in values), default=0)
    exp = min(exp, 0)
    q = Decimal(1).scaleb(exp)
    units = np.array([int(v / q) for v in values], dtype=np.int64)
    return units, exp


def coin_flips(seed: int, n: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2, size=n)


def random_baseline(
    bars: BarSeries,
    windows: Sequence[datetime],
    cfg: RandomEnsembleConfig = RandomEnsembleConfig(),
    lot: int = LOT,
    frequency: str = "per-bar",
    flips=coin_flips,
) -> BaselineResult:
    """Fair-coin predictions per tradable window, one generator per model.

    Model i draws from a generator seeded with ``base_seed + i``, so the
    result does not depend on evaluation order.
    """
    idx = tradable(windows, frequency)
    traded = [windows[i] for i in idx]
    longs = [make_trade(w, 1, bars, lot).pnl for w in traded]
    units, exp = _as_units(longs)
    q = Decimal(1).scaleb(exp)
    days = [(w + WINDOW).date() for w in traded]
    day_keys = list(dict.fromkeys(days))
    day_ix = np.array([day_keys.index(d) for d in days], dtype=np.int64) if days else np.zeros(0, np.int64)

    totals = []
    sum_per_trade = np.zeros(len(traded), dtype=np.int64)
    for i in range(cfg.n_models):
        pred = np.asarray(flips(cfg.base_seed + i, len(traded)), dtype=np.int64)
        pnl = np.where(pred == 1, units, -units)
        sum_per_trade += pnl
        totals.append(int(pnl.sum()) * q)
    day_sums = np.zeros(len(day_keys), dtype=np.int64)
    np.add.at(day_sums, day_ix, sum_per_trade)
    n = Decimal(cfg.n_models)
    mean_daily = OrderedDict((d, int(s) * q / n) for d, s in zip(day_keys, day_sums))
    mean_per_trade = [int(s) * q / n for s in sum_per_trade]
    return BaselineResult(totals, mean_daily, mean_per_trade)


# --- comparison ----------------------------------------------------------


@dataclass
class Comparison:
    model_total: Decimal
    baseline_mean_total: Decimal
    excess: Decimal
    days_won: int
    days_lost: int
    days_tied: int
    n_trades: int
    model_per_trade: Decimal | None
    baseline_per_trade: Decimal | None


def compare(
    model_daily: Mapping[date, Decimal], baseline_daily: Mapping[date, Decimal], n_trades: int = 0
) -> Comparison:
    """Excess return and per-day win/loss/tie counts against the baseline mean."""
    if set(model_daily) != set(baseline_daily):
        raise ValidationError("model and baseline cover different days")
    model_total = sum(model_daily.values(), ZERO)
    base_total = sum(baseline_daily.values(), ZERO)
    won = sum(1 for d in model_daily if model_daily[d] > baseline_daily[d])
    lost = sum(1 for d in model_daily if model_daily[d] < baseline_daily[d])
    tied = len(model_daily) - won - lost
    per_model = model_total / n_trades if n_trades else None
    per_base = base_total / n_trades if n_trades else None
    return Comparison(model_total, base_total, model_total - base_total, won, lost, tied,
                      n_trades, per_model, per_base)


@dataclass
class BacktestReport:
    trades: list[TradeRecord]
    daily_pnl: dict[date, Decimal]
    baseline: BaselineResult
    comparison: Comparison
    equity_curve: list[Decimal] = field(default_factory=list)
    baseline_mean_curve: list[Decimal] = field(default_factory=list)

    def __post_init__(self):
        if not self.equity_curve:
            self.equity_curve = cumulative([t.pnl for t in self.trades])
        if not self.baseline_mean_curve:
            self.baseline_mean_curve = cumulative(self.baseline.mean_per_trade)

    @property
    def total_pnl(self) -> Decimal:
        return self.comparison.model_total

    @property
    def excess(self) -> Decimal:
        return self.comparison.excess

    @property
    def baselines_beaten(self) -> int:
        return sum(1 for t in self.baseline.totals if self.total_pnl > t)

    def to_dict(self) -> dict:
        c = self.comparison

        def s(v):
            return None if v is None else str(v)

        return {
            "n_trades": c.n_trades,
            "n_days": len(self.daily_pnl),
            "model_total": s(c.model_total),
            "baseline_mean_total": s(c.baseline_mean_total),
            "excess": s(c.excess),
            "model_per_trade": s(c.model_per_trade),
            "baseline_per_trade": s(c.baseline_per_trade),
            "days_won": c.days_won,
            "days_lost": c.days_lost,
            "days_tied": c.days_tied,
            "baseline_models": len(self.baseline.totals),
            "baselines_beaten": self.baselines_beaten,
            "baseline_totals": [str(t) for t in self.baseline.totals],
        }


def run_backtest(
    ledger: PredictionLedger,
    bars: BarSeries,
    lot: int = LOT,
    frequency: str = "per-bar",
    ensemble: RandomEnsembleConfig = RandomEnsembleConfig(),
) -> BacktestReport:
    if not len(ledger):
        raise ValidationError("cannot backtest an empty ledger")
    trades = simulate(ledger, bars, lot, frequency)
    daily = daily_pnl(trades)
    base = random_baseline(bars, ledger.windows, ensemble, lot, frequency)
    cmp = compare(daily, base.mean_daily, len(trades))
    logger.info("backtest: %d trades, total %s, baseline mean %s, excess %s",
                len(trades), cmp.model_total, cmp.baseline_mean_total, cmp.excess)
    return BacktestReport(trades, daily, base, cmp)


# --- export --------------------------------------------------------------


def write_trades(trades: Sequence[TradeRecord], writer: IO[str], config_hash: str = "") -> None:
    if config_hash:
        writer.write(f"# config_hash={config_hash}\n")
    out = csv.writer(writer, lineterminator="\n")
    out.writerow(["window", "bar", "side", "open", "close", "lot", "pnl"])
    for t in trades:
        out.writerow([t.window.isoformat(), t.bar.isoformat(), t.side, t.open_price, t.close_price, t.lot, t.pnl])


def write_equity(report: BacktestReport, writer: IO[str], config_hash: str = "") -> None:
    if config_hash:
        writer.write(f"# config_hash={config_hash}\n")
    out = csv.writer(writer, lineterminator="\n")
    out.writerow(["window", "bar", "model_cum_pnl", "baseline_mean_cum_pnl"])
    for t, m, b in zip(report.trades, report.equity_curve, report.baseline_mean_curve):
        out.writerow([t.window.isoformat(), t.bar.isoformat(), m, b])


def equity_export(report: BacktestReport, csv_path: Path, svg_path: Path, config_hash: str = "") -> None:
    if not report.trades:
        raise ValidationError("cannot export an empty report")
    with open(csv_path, "w", newline="") as fh:
        write_equity(report, fh, config_hash)
    fig = plotting.equity_figure([float(v) for v in report.equity_curve],
                                 [float(v) for v in report.baseline_mean_curve])
    plotting.save_svg(fig, svg_path, f"config_hash={config_hash}" if config_hash else "")

"""Planted-signal fixture: bars whose next move follows tweet mood.

Every bar has a mood drawn by a fair coin, and its window gets a handful
of tweets built from positive or negative lexicon words that mostly
agree with that mood. The next bar moves in the direction of the
window's majority tweet polarity with probability ``agreement``. Opens equal the previous close and every bar
moves by exactly one tick, so the label is the next bar's direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone
from decimal import Decimal
import json
from pathlib import Path
from typing import IO

import numpy as np

from .bars import WINDOW, Bar, BarFormatConfig, BarSeries, fixed_tz, write_bars
from .corpus import RawTweet, raw_record

POSITIVE = ("alta", "bom", "lucro", "forte", "otimista", "sobe", "compra", "excelente", "bullish", "ganho")
NEGATIVE = ("queda", "ruim", "medo", "fraco", "crise", "cai", "venda", "despenca", "bearish", "perda")
FILLER = ("petrobras", "hoje", "mercado", "acao", "pregao", "papel", "bolsa", "agora")


@dataclass(frozen=True)
class SyntheticConfig:
    n_days: int = 80
    bars_per_day: int = 75
    agreement: float = 0.60
    tweet_agreement: float = 0.80
    tweets_per_window: tuple[int, int] = (2, 6)
    tick: Decimal = Decimal("0.05")
    start_price: Decimal = Decimal("50.00")
    start_day: date = date(2021, 1, 4)
    session_start: time = time(10, 30)
    tz_offset_hours: float = -3.0
    seed: int = 20210104


def business_days(start: date, n: int) -> list[date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def _text(rng: np.random.Generator, mood: int) -> str:
    words = list(rng.choice(FILLER, size=2, replace=False))
    pool = POSITIVE if mood > 0 else NEGATIVE
    words += list(rng.choice(pool, size=2, replace=False))
    words.append(str(rng.choice(FILLER)))
    rng.shuffle(words)
    return " ".join(words)


def generate(cfg: SyntheticConfig = SyntheticConfig()) -> tuple[BarSeries, list[RawTweet]]:
    rng = np.random.default_rng(cfg.seed)
    tz = fixed_tz(cfg.tz_offset_hours)
    price = cfg.start_price
    bars: list[Bar] = []
    tweets: list[RawTweet] = []
    prev_mood = 0
    for day in business_days(cfg.start_day, cfg.n_days):
        start = datetime.combine(day, cfg.session_start, tzinfo=tz)
        for k in range(cfg.bars_per_day):
            ts = start + k * WINDOW
            if k == 0:
                up = bool(rng.random() < 0.5)
            else:
                follows = rng.random() < cfg.agreement
                up = (prev_mood > 0) == follows
            # a bar can never touch zero: reflect at one tick
            if not up and price - cfg.tick <= 0:
                up = True
            close = price + cfg.tick if up else price - cfg.tick
            bars.append(Bar(ts, price, max(price, close), min(price, close), close,
                            int(rng.integers(50, 500)), int(rng.integers(1000, 50000))))
            price = close

            mood = 1 if rng.random() < 0.5 else -1
            lo, hi = cfg.tweets_per_window
            moods = [mood if rng.random() < cfg.tweet_agreement else -mood
                     for _ in range(int(rng.integers(lo, hi + 1)))]
            # the observable aggregate is the majority polarity; ties fall back to the latent mood
            net = sum(moods)
            prev_mood = (net > 0) - (net < 0) or mood
            for m in moods:
                second = int(rng.integers(0, int(WINDOW.total_seconds())))
                created = (ts + timedelta(seconds=second)).astimezone(timezone.utc)
                tweets.append(RawTweet(
                    created, _text(rng, m),
                    like=int(rng.integers(0, 20)), retweet=int(rng.integers(0, 5)),
                    user_followers=int(rng.integers(10, 5000)),
                ))
    return BarSeries(tuple(bars)), tweets


def write_tweets(tweets, writer: IO[str]) -> None:
    for t in tweets:
        writer.write(json.dumps(raw_record(t), ensure_ascii=False, sort_keys=True) + "\n")


def write_fixture(directory: Path, cfg: SyntheticConfig = SyntheticConfig(),
                  fmt: BarFormatConfig = BarFormatConfig()) -> tuple[Path, Path]:
    """Write ``bars.tsv`` and ``tweets.jsonl`` into ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    bars, tweets = generate(cfg)
    bars_path, tweets_path = directory / "bars.tsv", directory / "tweets.jsonl"
    with open(bars_path, "w", newline="") as fh:
        write_bars(bars, fh, fmt)
    with open(tweets_path, "w") as fh:
        write_tweets(tweets, fh)
    return bars_path, tweets_path

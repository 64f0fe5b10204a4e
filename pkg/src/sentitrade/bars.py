"""Five-minute OHLCV bars: parsing, validation and session-aware indexing."""

from __future__ import annotations

import csv
import io
import logging
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from decimal import Decimal, InvalidOperation
from typing import IO, Iterable, Iterator

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

WINDOW = timedelta(minutes=5)
BAR_COLUMNS = ("date", "time", "open", "high", "low", "close", "tickvol", "vol", "spread")


def fixed_tz(offset_hours: float) -> timezone:
    return timezone(timedelta(hours=offset_hours))


@dataclass(frozen=True)
class BarFormatConfig:
    delimiter: str = "\t"
    date_format: str = "%Y.%m.%d"
    time_format: str = "%H:%M:%S"
    tz_offset_hours: float = -3.0
    session_start: time = time(10, 30)
    session_end: time = time(16, 50)

    @property
    def tz(self) -> timezone:
        return fixed_tz(self.tz_offset_hours)


@dataclass(frozen=True)
class Bar:
    timestamp: datetime
    open: Decimal
    high: Decimal
    low: Decimal
    close: Decimal
    tickvol: int
    vol: int
    spread: int = 0

    def __post_init__(self):
        problem = bar_invariant_violation(self)
        if problem:
            raise ValidationError(f"bar at {self.timestamp.isoformat()}: {problem}")

    @property
    def day(self) -> date:
        return self.timestamp.date()


def bar_invariant_violation(bar: Bar) -> str | None:
    """Return a description of the first violated bar invariant, or None."""
    o, h, l, c = bar.open, bar.high, bar.low, bar.close
    if min(o, h, l, c) <= 0:
        return "prices must be strictly positive"
    if not (l <= min(o, c) and max(o, c) <= h):
        return "OHLC ordering violated: require low <= min(open, close) <= max(open, close) <= high"
    if bar.tickvol < 0 or bar.vol < 0:
        return "tickvol and vol must be non-negative"
    ts = bar.timestamp
    if ts.tzinfo is None:
        return "timestamp must be timezone-aware"
    if ts.second or ts.microsecond or ts.minute % 5:
        return "timestamp must be aligned to a 5-minute boundary"
    return None


@dataclass(frozen=True)
class BarSeries:
    """Ordered, immutable sequence of bars inside one trading-session window."""

    bars: tuple[Bar, ...] = ()
    session_start: time = time(10, 30)
    session_end: time = time(16, 50)
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _stamps: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        bars = tuple(self.bars)
        object.__setattr__(self, "bars", bars)
        for prev, cur in zip(bars, bars[1:]):
            if not cur.timestamp > prev.timestamp:
                raise ValidationError(
                    f"timestamps must be strictly increasing: {prev.timestamp} then {cur.timestamp}"
                )
        for b in bars:
            if not in_session(b.timestamp, self.session_start, self.session_end):
                raise ValidationError(f"bar {b.timestamp} outside session")
        object.__setattr__(self, "_index", {b.timestamp: b for b in bars})
        object.__setattr__(self, "_stamps", [b.timestamp for b in bars])

    def __len__(self) -> int:
        return len(self.bars)

    def __iter__(self) -> Iterator[Bar]:
        return iter(self.bars)

    def __getitem__(self, i):
        return self.bars[i]

    def get(self, window: datetime) -> Bar | None:
        return self._index.get(window)

    def days(self) -> list[date]:
        seen: dict[date, None] = {}
        for b in self.bars:
            seen.setdefault(b.day, None)
        return list(seen)

    def between(self, start: datetime, end: datetime) -> tuple[Bar, ...]:
        """Bars with start <= timestamp < end."""
        lo = bisect_left(self._stamps, start)
        hi = bisect_left(self._stamps, end)
        return self.bars[lo:hi]

    def truncated(self, last: datetime) -> "BarSeries":
        """Series restricted to bars at or before ``last``."""
        return BarSeries(
            tuple(b for b in self.bars if b.timestamp <= last), self.session_start, self.session_end
        )


def in_session(ts: datetime, start: time, end: time) -> bool:
    t = ts.timetz().replace(tzinfo=None)
    return start <= t < end


def floor_to_window(t: datetime, width: timedelta = WINDOW) -> datetime:
    """Round ``t`` down to the nearest multiple of ``width`` past the hour."""
    w = width.total_seconds()
    if w <= 0 or 3600 % w:
        raise ValueError(f"window width {width} must divide one hour evenly")
    w = int(w)
    into_hour = t.minute * 60 + t.second
    top = t.replace(minute=0, second=0, microsecond=0)
    return top + timedelta(seconds=into_hour // w * w)


def lookup_bar(series: BarSeries, window: datetime) -> Bar | None:
    if floor_to_window(window) != window:
        raise ValidationError(f"window {window} is not 5-minute aligned")
    return series.get(window)


def _read_text(reader: IO) -> str:
    data = reader.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    elif data.startswith("﻿"):
        data = data[1:]
    return data


def normalize_header(name: str) -> str:
    return name.strip().strip("<>").strip().lower()


def parse_bars(reader: IO, fmt: BarFormatConfig = BarFormatConfig(), source: str | None = None) -> BarSeries:
    """Parse a delimiter-separated bar export into a validated BarSeries.

    Rows outside the configured session are dropped and counted in the log.
    Duplicate timestamps and OHLC-ordering violations raise ParseError
    carrying the offending line number.
    """
    text = _read_text(reader)
    rows = csv.reader(io.StringIO(text), delimiter=fmt.delimiter)
    try:
        header = next(rows)
    except StopIteration:
        raise ParseError("missing header row", line=1, source=source) from None
    names = [normalize_header(h) for h in header]
    missing = [c for c in BAR_COLUMNS if c not in names]
    if missing:
        raise ParseError(f"header lacks columns {missing}", line=1, source=source)
    pos = {c: names.index(c) for c in BAR_COLUMNS}
    tz = fmt.tz

    parsed: list[tuple[Bar, int]] = []
    dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(names):
            raise ParseError(f"expected {len(names)} fields, got {len(row)}", line=lineno, source=source)
        cell = {c: row[i].strip() for c, i in pos.items()}
        try:
            d = datetime.strptime(cell["date"], fmt.date_format).date()
            t = datetime.strptime(cell["time"], fmt.time_format).time()
            prices = [Decimal(cell[k]) for k in ("open", "high", "low", "close")]
            if not all(p.is_finite() for p in prices):
                raise ValueError("non-finite price")
            tickvol, vol, spread = (int(cell[k]) for k in ("tickvol", "vol", "spread"))
        except (ValueError, InvalidOperation) as exc:
            raise ParseError(f"malformed row {row!r}: {exc}", line=lineno, source=source) from None
        ts = datetime.combine(d, t, tzinfo=tz)
        if not in_session(ts, fmt.session_start, fmt.session_end):
            dropped += 1
            continue
        try:
            bar = Bar(ts, *prices, tickvol=tickvol, vol=vol, spread=spread)
        except ValidationError as exc:
            raise ParseError(f"{exc} (row {row!r})", line=lineno, source=source) from None
        parsed.append((bar, lineno))

    if dropped:
        logger.info("dropped %d bars outside session %s-%s", dropped, fmt.session_start, fmt.session_end)
    parsed.sort(key=lambda item: item[0].timestamp)
    for (prev, _), (cur, line) in zip(parsed, parsed[1:]):
        if cur.timestamp == prev.timestamp:
            raise ParseError(f"duplicate timestamp {cur.timestamp.isoformat()}", line=line, source=source)
    return BarSeries(tuple(b for b, _ in parsed), fmt.session_start, fmt.session_end)


def write_bars(series: Iterable[Bar], writer: IO[str], fmt: BarFormatConfig = BarFormatConfig()) -> None:
    out = csv.writer(writer, delimiter=fmt.delimiter, lineterminator="\n")
    out.writerow([f"<{c.upper()}>" for c in BAR_COLUMNS])
    tz = fmt.tz
    for b in series:
        local = b.timestamp.astimezone(tz)
        out.writerow([
            local.strftime(fmt.date_format),
            local.strftime(fmt.time_format),
            str(b.open), str(b.high), str(b.low), str(b.close),
            b.tickvol, b.vol, b.spread,
        ])

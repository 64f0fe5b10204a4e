"""Tweet ingestion and cleaning.

Records are read from JSON-lines or delimited files, deduplicated,
stripped of links, mentions and non-alphabetic symbols, shifted to the
exchange timezone and filtered for minimum length.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import unicodedata
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import IO, Callable, Iterable, Sequence

from .errors import ConfigError, HookError, ParseError, ValidationError

logger = logging.getLogger(__name__)

COUNT_FIELDS = (
    "like", "quote", "reply", "retweet",
    "user_followers", "user_following", "user_tweets", "user_listed",
)
TWEET_FIELDS = ("created_at", "text") + COUNT_FIELDS

_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_MENTION_RE = re.compile(r"(?<!\S)@\S*")


@dataclass(frozen=True)
class RawTweet:
    created_at: datetime
    text: str
    like: int = 0
    quote: int = 0
    reply: int = 0
    retweet: int = 0
    user_followers: int = 0
    user_following: int = 0
    user_tweets: int = 0
    user_listed: int = 0

    def __post_init__(self):
        if not self.text:
            raise ValidationError("tweet text must be non-empty")
        for name in COUNT_FIELDS:
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.created_at.tzinfo is None:
            raise ValidationError("created_at must be timezone-aware")


@dataclass(frozen=True)
class CleaningConfig:
    strip_urls: bool = True
    strip_mentions: bool = True
    strip_nonalpha: bool = True
    strip_emoji: bool = True
    strip_punctuation: bool = True
    min_words: int = 3
    min_chars: int = 20
    timezone_offset: float = -3.0

    def __post_init__(self):
        if self.min_words < 1:
            raise ConfigError("min_words must be >= 1")
        if self.min_chars < 0:
            raise ConfigError("min_chars must be >= 0")


@dataclass(frozen=True)
class CleanTweet:
    raw: RawTweet
    clean_text: str
    local_time: datetime
    hour: int
    word_count: int
    text_length: int
    # post-strip scorers read this; equals clean_text unless a transform hook ran
    scoring_text: str = ""

    def __post_init__(self):
        if not self.scoring_text:
            object.__setattr__(self, "scoring_text", self.clean_text)

    def numeric(self, name: str) -> float:
        if name in COUNT_FIELDS:
            return float(getattr(self.raw, name))
        if name in ("hour", "word_count", "text_length"):
            return float(getattr(self, name))
        raise KeyError(name)

    def to_record(self) -> dict:
        rec = {k: getattr(self.raw, k) for k in COUNT_FIELDS}
        rec["created_at"] = self.raw.created_at.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        rec["text"] = self.raw.text
        rec["clean_text"] = self.clean_text
        rec["scoring_text"] = self.scoring_text
        rec["local_time"] = self.local_time.isoformat()
        rec["hour"] = self.hour
        rec["word_count"] = self.word_count
        rec["text_length"] = self.text_length
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CleanTweet":
        raw = RawTweet(
            created_at=parse_timestamp(rec["created_at"], "rfc3339"),
            text=rec["text"],
            **{k: int(rec[k]) for k in COUNT_FIELDS},
        )
        return cls(
            raw=raw,
            clean_text=rec["clean_text"],
            local_time=datetime.fromisoformat(rec["local_time"]),
            hour=int(rec["hour"]),
            word_count=int(rec["word_count"]),
            text_length=int(rec["text_length"]),
            scoring_text=rec.get("scoring_text", ""),
        )


@dataclass(frozen=True)
class TweetFormatConfig:
    kind: str = "auto"  # auto | jsonl | csv
    delimiter: str = ","
    time_format: str = "rfc3339"  # or a strptime pattern such as "%Y-%m-%d %H:%M:%S"


def parse_timestamp(value: str, time_format: str = "rfc3339") -> datetime:
    """Parse a tweet timestamp as UTC. Naive values are taken to be UTC."""
    value = value.strip()
    if time_format == "rfc3339":
        if value.endswith(("Z", "z")):
            value = value[:-1] + "+00:00"
        ts = datetime.fromisoformat(value)
    else:
        ts = datetime.strptime(value, time_format)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _count(value, name: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    if isinstance(value, str):
        value = value.strip()
        n = int(value) if value else 0
    elif isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"{name} must be an integer, got {value}")
        n = int(value)
    elif isinstance(value, int):
        n = value
    elif value is None:
        n = 0
    else:
        raise ValueError(f"{name} has unsupported type {type(value).__name__}")
    if n < 0:
        raise ValueError(f"{name} must be >= 0, got {n}")
    return n


def _record_to_tweet(rec: dict, fmt: TweetFormatConfig, lineno: int, source: str | None) -> RawTweet:
    lowered = {str(k).strip().lower(): v for k, v in rec.items()}
    absent = [k for k in TWEET_FIELDS if k not in lowered]
    if absent:
        raise ParseError(f"record missing fields {absent}", line=lineno, source=source)
    text = lowered["text"]
    if not isinstance(text, str) or not text:
        raise ParseError("text must be a non-empty string", line=lineno, source=source)
    try:
        created = parse_timestamp(str(lowered["created_at"]), fmt.time_format)
    except ValueError as exc:
        raise ParseError(f"unparseable created_at: {exc}", line=lineno, source=source) from None
    try:
        counts = {k: _count(lowered[k], k) for k in COUNT_FIELDS}
    except ValueError as exc:
        raise ParseError(str(exc), line=lineno, source=source) from None
    return RawTweet(created_at=created, text=text, **counts)


def parse_tweets(reader: IO, fmt: TweetFormatConfig = TweetFormatConfig(), source: str | None = None) -> list[RawTweet]:
    data = reader.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    kind = fmt.kind
    if kind == "auto":
        kind = "jsonl" if data.lstrip().startswith("{") else "csv"
    out: list[RawTweet] = []
    if kind == "jsonl":
        for lineno, line in enumerate(data.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno, source=source) from None
            if not isinstance(rec, dict):
                raise ParseError("record must be a JSON object", line=lineno, source=source)
            out.append(_record_to_tweet(rec, fmt, lineno, source))
    elif kind == "csv":
        if not data.strip():
            return out
        rows = csv.DictReader(io.StringIO(data), delimiter=fmt.delimiter)
        for lineno, rec in enumerate(rows, start=2):
            rec = {k: v for k, v in rec.items() if k is not None}
            out.append(_record_to_tweet(rec, fmt, lineno, source))
    else:
        raise ConfigError(f"unknown tweet file kind {fmt.kind!r}")
    return out


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    if cp in (0x200D, 0x20E3, 0xFE0F, 0xFE0E) or 0x1F000 <= cp <= 0x1FAFF:
        return True
    return unicodedata.category(ch) in ("So", "Sk")


def _clean_once(s: str, cfg: CleaningConfig) -> str:
    if cfg.strip_urls:
        s = _URL_RE.sub(" ", s)
    if cfg.strip_mentions:
        s = _MENTION_RE.sub(" ", s)
    if cfg.strip_nonalpha:
        s = unicodedata.normalize("NFC", s)
        s = "".join(ch if ch.isalpha() or ch.isspace() else "" for ch in s)
    else:
        if cfg.strip_emoji:
            s = "".join(ch for ch in s if not _is_emoji(ch))
        if cfg.strip_punctuation:
            s = "".join(ch for ch in s if not unicodedata.category(ch).startswith("P"))
    return " ".join(s.split())


def clean_text(raw: str, cfg: CleaningConfig = CleaningConfig()) -> str:
    """Strip URLs, mentions and non-alphabetic symbols, collapse whitespace.

    Symbol removal can splice fragments into a new URL or mention
    (``"http:😀//x"``), so the pass repeats until the text stops changing.
    Every pass either shortens the text or is the last one.
    """
    prev, cur = None, _clean_once(raw, cfg)
    while cur != prev:
        prev, cur = cur, _clean_once(cur, cfg)
    return cur


def normalize_time(t_utc: datetime, cfg: CleaningConfig = CleaningConfig()) -> tuple[datetime, int]:
    local = t_utc.astimezone(timezone(timedelta(hours=cfg.timezone_offset)))
    return local, local.hour


def dedup(tweets: Iterable[RawTweet]) -> list[RawTweet]:
    """Keep the first record for each (created_at, text) pair."""
    seen: set[tuple[datetime, str]] = set()
    out = []
    for t in tweets:
        key = (t.created_at, t.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(t)
    return out


def make_clean(tweet: RawTweet, cfg: CleaningConfig = CleaningConfig()) -> CleanTweet:
    text = clean_text(tweet.text, cfg)
    local, hour = normalize_time(tweet.created_at, cfg)
    return CleanTweet(
        raw=tweet,
        clean_text=text,
        local_time=local,
        hour=hour,
        word_count=len(text.split()),
        text_length=len(text),
    )


def filter_short(tweets: Iterable[CleanTweet], cfg: CleaningConfig = CleaningConfig()) -> list[CleanTweet]:
    return [t for t in tweets if t.word_count >= cfg.min_words and t.text_length >= cfg.min_chars]


TextHook = Callable[[str], str]


def identity(text: str) -> str:
    return text


HOOKS: dict[str, TextHook] = {
    "identity": identity,
    "upper": str.upper,
    "lower": str.lower,
}


def get_hook(name: str) -> TextHook:
    try:
        return HOOKS[name]
    except KeyError:
        raise ConfigError(f"unknown transform hook {name!r}; known: {sorted(HOOKS)}") from None


def transform_hook(text: str, hook: TextHook = identity) -> str:
    return hook(text)


def apply_hook(tweets: Sequence[CleanTweet], hook: TextHook = identity) -> list[CleanTweet]:
    out = []
    for i, t in enumerate(tweets):
        try:
            new = transform_hook(t.clean_text, hook)
        except Exception as exc:
            raise HookError(i, exc) from exc
        out.append(replace(t, scoring_text=new))
    return out


def prepare_corpus(
    tweets: Iterable[RawTweet],
    cfg: CleaningConfig = CleaningConfig(),
    hook: TextHook = identity,
) -> list[CleanTweet]:
    """dedup -> clean -> short filter -> transform hook, in input order."""
    raw = list(tweets)
    unique = dedup(raw)
    cleaned = [make_clean(t, cfg) for t in unique]
    kept = filter_short(cleaned, cfg)
    logger.info(
        "corpus: %d read, %d after dedup, %d after length filter",
        len(raw), len(unique), len(kept),
    )
    return apply_hook(kept, hook)


def write_clean(tweets: Iterable[CleanTweet], writer: IO[str]) -> None:
    for t in tweets:
        writer.write(json.dumps(t.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def read_clean(reader: IO[str]) -> list[CleanTweet]:
    out = []
    for lineno, line in enumerate(reader, start=1):
        if line.strip():
            try:
                out.append(CleanTweet.from_record(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad clean-tweet record: {exc}", line=lineno) from None
    return out


def raw_record(t: RawTweet) -> dict:
    rec = asdict(t)
    rec["created_at"] = t.created_at.strftime("%Y-%m-%dT%H:%M:%SZ")
    return rec

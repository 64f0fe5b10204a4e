"""Declarative run configuration stored as JSON.

The config hash covers every section except ``paths``, so moving the
input files or the output directory does not invalidate artifacts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import time
from pathlib import Path
from typing import Any, Mapping

from .bars import BarFormatConfig
from .corpus import HOOKS, CleaningConfig, TweetFormatConfig
from .errors import ConfigError, ValidationError
from .features import FeatureConfig, LagSpec
from .gbdt import TrainParams
from .sentiment import DEFAULT_SCORERS, KINDS


@dataclass(frozen=True)
class Paths:
    bars: str = "bars.tsv"
    tweets: str = "tweets.jsonl"
    lexicon_dir: str | None = None
    output: str = "out"


@dataclass(frozen=True)
class FoldConfig:
    train_n: int = 200
    val_n: int = 1
    test_n: int = 1
    select_by: str = "logloss"
    threshold: float = 0.5
    workers: int = 1
    save_models: bool = False

    def __post_init__(self):
        if self.select_by not in ("logloss", "auc"):
            raise ConfigError(f"folds.select_by must be 'logloss' or 'auc', got {self.select_by!r}")
        if not 0 < self.threshold < 1:
            raise ConfigError("folds.threshold must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("folds.workers must be >= 1")


@dataclass(frozen=True)
class BacktestConfig:
    lot: int = 100
    frequency: str = "per-bar"
    n_models: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if self.frequency not in ("per-bar", "first-bar-of-day"):
            raise ConfigError(f"backtest.frequency must be per-bar or first-bar-of-day, got {self.frequency!r}")
        if self.lot < 1 or self.n_models < 1:
            raise ConfigError("backtest.lot and backtest.n_models must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    paths: Paths = Paths()
    bar_format: BarFormatConfig = BarFormatConfig()
    tweet_format: TweetFormatConfig = TweetFormatConfig()
    cleaning: CleaningConfig = CleaningConfig()
    hook: str = "identity"
    scorers: tuple = tuple(DEFAULT_SCORERS)
    features: FeatureConfig = FeatureConfig()
    train: TrainParams = TrainParams()
    folds: FoldConfig = FoldConfig()
    backtest: BacktestConfig = BacktestConfig()
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if self.hook not in HOOKS:
            raise ConfigError(f"unknown hook {self.hook!r}; choose from {sorted(HOOKS)}")
        ids = [s.get("id") for s in self.scorers]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"scorer ids must be unique, got {ids}")
        for s in self.scorers:
            if s.get("kind") not in KINDS:
                raise ConfigError(f"scorer {s.get('id')!r}: unknown kind {s.get('kind')!r}")

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.paths.output)

    def to_dict(self) -> dict:
        return {
            "paths": asdict(self.paths),
            "bar_format": _bar_format_dict(self.bar_format),
            "tweet_format": asdict(self.tweet_format),
            "cleaning": asdict(self.cleaning),
            "hook": self.hook,
            "scorers": [dict(s) for s in self.scorers],
            "features": {
                "tweet_attrs": list(self.features.tweet_attrs),
                "scorer_outputs": list(self.features.scorer_outputs),
                "lags": list(self.features.lags.lags),
            },
            "train": asdict(self.train),
            "folds": asdict(self.folds),
            "backtest": asdict(self.backtest),
        }

    def config_hash(self) -> str:
        doc = self.to_dict()
        del doc["paths"]
        return hashlib.sha256(canonical_json(doc).encode()).hexdigest()[:16]

    def validate_paths(self, need_inputs: bool = True) -> None:
        if need_inputs:
            for name in ("bars", "tweets"):
                p = self.resolve(getattr(self.paths, name))
                if not p.is_file():
                    raise ValidationError(f"paths.{name}: file not found: {p}")
        if self.paths.lexicon_dir is not None and not self.resolve(self.paths.lexicon_dir).is_dir():
            raise ValidationError(f"paths.lexicon_dir: not a directory: {self.resolve(self.paths.lexicon_dir)}")


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _bar_format_dict(fmt: BarFormatConfig) -> dict:
    d = asdict(fmt)
    d["session_start"] = fmt.session_start.strftime("%H:%M")
    d["session_end"] = fmt.session_end.strftime("%H:%M")
    return d


def _section(cls, data: Any, name: str, convert: Mapping[str, Any] | None = None):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")
    kw = dict(data)
    for key, fn in (convert or {}).items():
        if key in kw:
            try:
                kw[key] = fn(kw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}.{key}: {exc}") from None
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    except ValidationError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def from_dict(doc: Mapping, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    feats = doc.get("features") or {}
    unknown = sorted(set(feats) - {"tweet_attrs", "scorer_outputs", "lags"})
    if unknown:
        raise ConfigError(f"features: unknown keys {unknown}")
    try:
        features = FeatureConfig(
            tweet_attrs=tuple(feats.get("tweet_attrs", FeatureConfig().tweet_attrs)),
            scorer_outputs=tuple(feats.get("scorer_outputs", FeatureConfig().scorer_outputs)),
            lags=LagSpec(tuple(feats.get("lags", LagSpec().lags))),
        )
    except ValidationError as exc:
        raise ConfigError(f"features: {exc}") from None
    scorers = doc.get("scorers", DEFAULT_SCORERS)
    if not isinstance(scorers, (list, tuple)) or not all(isinstance(s, Mapping) for s in scorers):
        raise ConfigError("scorers must be a list of objects")
    return RunConfig(
        paths=_section(Paths, doc.get("paths"), "paths"),
        bar_format=_section(BarFormatConfig, doc.get("bar_format"), "bar_format",
                            {"session_start": time.fromisoformat, "session_end": time.fromisoformat}),
        tweet_format=_section(TweetFormatConfig, doc.get("tweet_format"), "tweet_format"),
        cleaning=_section(CleaningConfig, doc.get("cleaning"), "cleaning"),
        hook=doc.get("hook", "identity"),
        scorers=tuple(dict(s) for s in scorers),
        features=features,
        train=_section(TrainParams, doc.get("train"), "train"),
        folds=_section(FoldConfig, doc.get("folds"), "folds"),
        backtest=_section(BacktestConfig, doc.get("backtest"), "backtest"),
        base_dir=base_dir,
    )


def load(path: Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(doc, path.parent)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

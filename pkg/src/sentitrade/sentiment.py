"""Lexicon and rule based sentiment scorers.

Seven scorer kinds cover the mechanics of common off-the-shelf methods:
emoticon tables, mean-valence word lists, signed-sum lexicons with
bigrams, positive/negative word counts, mood categories, hashtag
frequencies and a valence heuristic with negation, intensifiers and
elongated words. Each scorer returns a ``Score`` (numeric value plus
ternary polarity). A ``ScorerRegistry`` fixes the order in which scorers
become feature columns.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Mapping, NamedTuple, Sequence

from .errors import ConfigError, ParseError

PRE_STRIP = "pre"
POST_STRIP = "post"
STAGES = (PRE_STRIP, POST_STRIP)

_TOKEN_RE = re.compile(r"\w+")
_HASHTAG_RE = re.compile(r"#\w+")
_ELONGATED_RE = re.compile(r"([^\W\d_])\1{2,}")


class LexiconWarning(UserWarning):
    pass


class Score(NamedTuple):
    value: float
    polarity: int


def sign(x: float) -> int:
    return (x > 0) - (x < 0)


def band_polarity(value: float, band: tuple[float, float]) -> int:
    lo, hi = band
    if value > hi:
        return 1
    if value < lo:
        return -1
    return 0


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Lexicon:
    id: str
    entries: Mapping[str, float]
    scale_min: float = -5.0
    scale_max: float = 5.0
    neutral_band: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.scale_min < self.scale_max:
            raise ConfigError(f"lexicon {self.id}: scale_min must be < scale_max")
        for term, v in self.entries.items():
            if not self.scale_min <= v <= self.scale_max:
                raise ConfigError(f"lexicon {self.id}: {term!r}={v} outside [{self.scale_min}, {self.scale_max}]")
        if self.neutral_band is None:
            mid = self.midpoint
            object.__setattr__(self, "neutral_band", (mid - 1.0, mid + 1.0))
        lo, hi = self.neutral_band
        if not (self.scale_min <= lo <= hi <= self.scale_max):
            raise ConfigError(f"lexicon {self.id}: neutral band {self.neutral_band} not inside scale")

    @property
    def midpoint(self) -> float:
        return (self.scale_min + self.scale_max) / 2

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, term: str) -> float | None:
        return self.entries.get(term)


def read_tsv_pairs(reader: IO, source: str | None = None) -> list[tuple[int, str, str]]:
    data = reader.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    out = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        # hashtag entries also start with '#'; only tab-less '#' lines are comments
        if not line.strip() or (line.lstrip().startswith("#") and "\t" not in line):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise ParseError(f"expected 'term<TAB>value', got {line!r}", line=lineno, source=source)
        out.append((lineno, parts[0].strip(), parts[1].strip()))
    return out


def load_lexicon(
    reader: IO,
    id: str = "lexicon",
    scale: tuple[float, float] | None = None,
    neutral_band: tuple[float, float] | None = None,
    lowercase: bool = True,
    source: str | None = None,
) -> Lexicon:
    """Read a ``term<TAB>score`` file. Later duplicates win, with a warning.

    Without an explicit ``scale`` the range is taken from the entries,
    falling back to [-1, 1] for empty or single-valued files.
    """
    entries: dict[str, float] = {}
    dupes = 0
    for lineno, term, value in read_tsv_pairs(reader, source):
        try:
            v = float(value)
        except ValueError:
            raise ParseError(f"non-numeric score {value!r}", line=lineno, source=source) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite score {value!r}", line=lineno, source=source)
        key = term.lower() if lowercase else term
        if key in entries:
            dupes += 1
        entries[key] = v
    if dupes:
        warnings.warn(f"lexicon {id}: {dupes} duplicate terms, last entry kept", LexiconWarning, stacklevel=2)
    if not entries:
        warnings.warn(f"lexicon {id} is empty", LexiconWarning, stacklevel=2)
    if scale is None:
        lo, hi = (min(entries.values()), max(entries.values())) if entries else (-1.0, 1.0)
        if lo >= hi:
            lo, hi = min(lo, -1.0), max(hi, 1.0)
        scale = (lo, hi)
    return Lexicon(id, entries, float(scale[0]), float(scale[1]), neutral_band)


def load_categories(reader: IO, source: str | None = None) -> dict[str, frozenset[str]]:
    """Read ``term<TAB>category`` lines into category -> term set."""
    cats: dict[str, set[str]] = {}
    for _, term, cat in read_tsv_pairs(reader, source):
        cats.setdefault(cat, set()).add(term.lower())
    return {c: frozenset(ts) for c, ts in cats.items()}


# --- scoring primitives --------------------------------------------------


def score_emoticon(text: str, table: Mapping[str, float]) -> Score:
    if not table or not text:
        return Score(0.0, 0)
    pattern = _emoticon_pattern(tuple(sorted(table, key=lambda e: (-len(e), e))))
    total = sum(table[m] for m in pattern.findall(text))
    return Score(float(total), sign(total))


_PATTERN_CACHE: dict[tuple[str, ...], re.Pattern] = {}


def _emoticon_pattern(keys: tuple[str, ...]) -> re.Pattern:
    pat = _PATTERN_CACHE.get(keys)
    if pat is None:
        pat = re.compile("|".join(re.escape(k) for k in keys))
        _PATTERN_CACHE[keys] = pat
    return pat


def score_mean_valence(text: str, lex: Lexicon) -> Score:
    hits = [v for v in (lex.get(t) for t in tokenize(text)) if v is not None]
    if not hits:
        return Score(lex.midpoint, 0)
    value = sum(hits) / len(hits)
    return Score(value, band_polarity(value, lex.neutral_band))


def match_signed(tokens: Sequence[str], entries: Mapping[str, float]) -> list[float]:
    """Bigram-first left-to-right matching; a matched bigram consumes both tokens."""
    hits = []
    i, n = 0, len(tokens)
    while i < n:
        if i + 1 < n:
            bigram = tokens[i] + " " + tokens[i + 1]
            v = entries.get(bigram)
            if v is not None:
                hits.append(v)
                i += 2
                continue
        v = entries.get(tokens[i])
        if v is not None:
            hits.append(v)
        i += 1
    return hits


def score_signed_sum(text: str, lex: Lexicon) -> Score:
    total = sum(match_signed(tokenize(text), lex.entries))
    return Score(float(total), sign(total))


def score_polarity_count(text: str, pos: frozenset[str], neg: frozenset[str]) -> Score:
    if pos & neg:
        raise ConfigError(f"positive and negative term sets overlap: {sorted(pos & neg)[:5]}")
    toks = tokenize(text)
    diff = sum(t in pos for t in toks) - sum(t in neg for t in toks)
    return Score(float(diff), sign(diff))


def score_mood_categories(
    text: str, cats: Mapping[str, frozenset[str]], cat_sign: Mapping[str, int]
) -> Score:
    toks = tokenize(text)
    counts = {c: sum(t in terms for t in toks) for c, terms in cats.items()}
    best = max(counts.values(), default=0)
    if best == 0:
        return Score(0.0, 0)
    leaders = [c for c, k in counts.items() if k == best]
    if len(leaders) > 1:
        return Score(0.0, 0)
    pol = int(cat_sign.get(leaders[0], 0))
    return Score(float(pol), pol)


def score_hashtag_freq(text: str, tags: Mapping[str, float]) -> Score:
    total = 0.0
    for tag in _HASHTAG_RE.findall(text.lower()):
        total += tags.get(tag, 0.0)
    return Score(total, sign(total))


@dataclass(frozen=True)
class HeuristicRules:
    negations: frozenset[str] = frozenset({"não", "nao", "nunca", "jamais", "nem", "not", "no", "never", "nor"})
    intensifiers: Mapping[str, float] = field(default_factory=lambda: {
        "muito": 1.5, "muita": 1.5, "bem": 1.5, "super": 1.5, "mega": 1.5,
        "very": 1.5, "really": 1.5, "extremely": 1.5, "so": 1.5,
    })
    window: int = 3
    elongation_factor: float = 1.25


def _elongated_forms(tok: str) -> list[str]:
    return [_ELONGATED_RE.sub(r"\1", tok), _ELONGATED_RE.sub(r"\1\1", tok)]


def score_heuristic_valence(text: str, lex: Lexicon, rules: HeuristicRules = HeuristicRules()) -> Score:
    """Sum lexicon valences, flipping or scaling terms after modifiers.

    A negation flips the sign of the next lexicon hit at most ``window``
    tokens later; an intensifier multiplies it. A token with a letter
    repeated three or more times is looked up in collapsed form and its
    valence scaled by ``elongation_factor``.
    """
    total = 0.0
    negs: list[int] = []
    ints: list[tuple[int, float]] = []
    for i, tok in enumerate(tokenize(text)):
        if tok in rules.negations:
            negs.append(i)
            continue
        factor = rules.intensifiers.get(tok)
        if factor is not None:
            ints.append((i, factor))
            continue
        v = lex.get(tok)
        elongated = _ELONGATED_RE.search(tok) is not None
        if v is None and elongated:
            for form in _elongated_forms(tok):
                v = lex.get(form)
                if v is not None:
                    break
        if v is None:
            continue
        flips = sum(1 for j in negs if i - j <= rules.window)
        if flips % 2:
            v = -v
        for j, f in ints:
            if i - j <= rules.window:
                v *= f
        if elongated:
            v *= rules.elongation_factor
        total += v
        negs.clear()
        ints.clear()
    return Score(total, sign(total))


# --- scorer objects ------------------------------------------------------


@dataclass(frozen=True)
class Scorer:
    id: str
    kind: str
    stage: str = POST_STRIP
    lexicon: Lexicon | None = None
    table: Mapping | None = None
    pos: frozenset[str] = frozenset()
    neg: frozenset[str] = frozenset()
    categories: Mapping[str, frozenset[str]] | None = None
    category_signs: Mapping[str, int] | None = None
    rules: HeuristicRules | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scorer kind {self.kind!r}")
        if self.stage not in STAGES:
            raise ConfigError(f"scorer {self.id}: stage must be one of {STAGES}")
        if self.kind in ("mean_valence", "signed_sum", "heuristic_valence") and self.lexicon is None:
            raise ConfigError(f"scorer {self.id}: kind {self.kind} needs a lexicon")
        if self.kind == "polarity_count" and self.pos & self.neg:
            raise ConfigError(f"scorer {self.id}: positive and negative sets overlap")
        if self.kind == "mood_categories":
            seen: set[str] = set()
            for terms in (self.categories or {}).values():
                if seen & terms:
                    raise ConfigError(f"scorer {self.id}: mood categories overlap")
                seen |= terms

    @property
    def neutral_band(self) -> tuple[float, float]:
        if self.kind == "mean_valence":
            return self.lexicon.neutral_band
        return (0.0, 0.0)

    def __call__(self, text: str) -> Score:
        k = self.kind
        if k == "emoticon":
            return score_emoticon(text, self.table or {})
        if k == "mean_valence":
            return score_mean_valence(text, self.lexicon)
        if k == "signed_sum":
            return score_signed_sum(text, self.lexicon)
        if k == "polarity_count":
            return score_polarity_count(text, self.pos, self.neg)
        if k == "mood_categories":
            return score_mood_categories(text, self.categories or {}, self.category_signs or {})
        if k == "hashtag_freq":
            return score_hashtag_freq(text, self.table or {})
        return score_heuristic_valence(text, self.lexicon, self.rules or HeuristicRules())


KINDS = (
    "emoticon", "mean_valence", "signed_sum", "polarity_count",
    "mood_categories", "hashtag_freq", "heuristic_valence",
)


@dataclass(frozen=True)
class SentimentVector:
    scores: dict[str, float]
    polarities: dict[str, int]


@dataclass(frozen=True)
class ScorerRegistry:
    scorers: tuple[Scorer, ...]

    def __post_init__(self):
        object.__setattr__(self, "scorers", tuple(self.scorers))
        ids = [s.id for s in self.scorers]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate scorer ids in registry: {ids}")

    def __len__(self) -> int:
        return len(self.scorers)

    def __iter__(self):
        return iter(self.scorers)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.scorers]


def score_all(raw_text: str, clean: str, reg: ScorerRegistry) -> SentimentVector:
    """Run every scorer; pre-strip scorers see ``raw_text``, the rest ``clean``."""
    if not len(reg):
        raise ConfigError("scorer registry is empty")
    scores, pols = {}, {}
    for s in reg:
        res = s(raw_text if s.stage == PRE_STRIP else clean)
        scores[s.id] = res.value
        pols[s.id] = res.polarity
    return SentimentVector(scores, pols)


# --- registry construction -----------------------------------------------

BUNDLED = "bundled"


def _open_lexicon(name: str, lexicon_dir: Path | None):
    if lexicon_dir is not None:
        p = Path(lexicon_dir) / name
        if p.exists():
            return p.open("rb"), str(p)
    p = Path(name)
    if p.is_absolute() and p.exists():
        return p.open("rb"), str(p)
    res = resources.files("sentitrade") / "data" / "lexicons" / name
    if not res.is_file():
        raise ConfigError(f"lexicon {name!r} not found in {lexicon_dir} or bundled lexicons")
    return res.open("rb"), f"{BUNDLED}:{name}"


def build_scorer(spec: Mapping, lexicon_dir: Path | None = None) -> Scorer:
    try:
        sid, kind = spec["id"], spec["kind"]
    except KeyError as exc:
        raise ConfigError(f"scorer declaration missing {exc}") from None
    stage = spec.get("stage", PRE_STRIP if kind in ("emoticon", "hashtag_freq") else POST_STRIP)
    kw: dict = {}
    if kind not in KINDS:
        raise ConfigError(f"unknown scorer kind {kind!r}")
    name = spec.get("lexicon")
    if name is None:
        raise ConfigError(f"scorer {sid}: missing 'lexicon'")
    if kind == "mood_categories":
        fh, src = _open_lexicon(name, lexicon_dir)
        with fh:
            kw["categories"] = load_categories(fh, src)
        kw["category_signs"] = {k: int(v) for k, v in spec.get("category_signs", {}).items()}
    else:
        fh, src = _open_lexicon(name, lexicon_dir)
        scale = tuple(spec["scale"]) if "scale" in spec else None
        band = tuple(spec["neutral_band"]) if "neutral_band" in spec else None
        with fh:
            lex = load_lexicon(fh, id=sid, scale=scale, neutral_band=band,
                               lowercase=kind != "emoticon", source=src)
        if kind in ("emoticon", "hashtag_freq"):
            kw["table"] = dict(lex.entries)
        elif kind == "polarity_count":
            kw["pos"] = frozenset(t for t, v in lex.entries.items() if v > 0)
            kw["neg"] = frozenset(t for t, v in lex.entries.items() if v < 0)
        else:
            kw["lexicon"] = lex
        if kind == "heuristic_valence":
            defaults = HeuristicRules()
            kw["rules"] = HeuristicRules(
                negations=frozenset(spec.get("negations", defaults.negations)),
                intensifiers=dict(spec.get("intensifiers", defaults.intensifiers)),
                window=int(spec.get("window", defaults.window)),
                elongation_factor=float(spec.get("elongation_factor", defaults.elongation_factor)),
            )
    return Scorer(id=sid, kind=kind, stage=stage, **kw)


def build_registry(specs: Iterable[Mapping], lexicon_dir: Path | str | None = None) -> ScorerRegistry:
    d = Path(lexicon_dir) if lexicon_dir else None
    return ScorerRegistry(tuple(build_scorer(s, d) for s in specs))


DEFAULT_SCORERS = (
    {"id": "emoticons", "kind": "emoticon", "lexicon": "emoticons.tsv", "stage": "pre"},
    {"id": "happiness", "kind": "mean_valence", "lexicon": "valence.tsv", "scale": [1, 9], "neutral_band": [4, 6]},
    {"id": "afinn", "kind": "signed_sum", "lexicon": "signed.tsv", "scale": [-5, 5]},
    {"id": "opinion", "kind": "polarity_count", "lexicon": "opinion.tsv"},
    {"id": "panas", "kind": "mood_categories", "lexicon": "moods.tsv",
     "category_signs": {"joviality": 1, "assurance": 1, "serenity": 1, "attentiveness": 1,
                        "fear": -1, "sadness": -1, "guilt": -1, "hostility": -1, "surprise": 0}},
    {"id": "nrc_hashtag", "kind": "hashtag_freq", "lexicon": "hashtags.tsv", "stage": "pre"},
    {"id": "vader", "kind": "heuristic_valence", "lexicon": "signed.tsv", "scale": [-5, 5]},
)


def default_registry() -> ScorerRegistry:
    return build_registry(DEFAULT_SCORERS)

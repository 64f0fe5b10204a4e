from datetime import timedelta
from decimal import Decimal

import numpy as np

from sentitrade import plotting
from sentitrade.corpus import prepare_corpus
from sentitrade.features import bucket_tweets, score_corpus
from sentitrade.sentiment import build_registry
from sentitrade.synthetic import SyntheticConfig, business_days, generate


def test_business_days_skip_weekends():
    from datetime import date
    days = business_days(date(2021, 1, 1), 4)  # a Friday
    assert [d.isoformat() for d in days] == ["2021-01-01", "2021-01-04", "2021-01-05", "2021-01-06"]


def test_generated_bars_chain_and_step_one_tick():
    cfg = SyntheticConfig(n_days=3, bars_per_day=20, seed=1)
    bars, _ = generate(cfg)
    assert len(bars) == 60 and len(bars.days()) == 3
    for a, b in zip(bars, bars[1:]):
        assert b.open == a.close
    assert all(abs(b.close - b.open) == Decimal("0.05") for b in bars)


def test_planted_agreement_rate():
    """Next-bar direction follows the window's majority tweet polarity about 60% of the time."""
    cfg = SyntheticConfig(n_days=40, seed=2)
    bars, raw = generate(cfg)
    tweets = prepare_corpus(raw)
    reg = build_registry([{"id": "afinn", "kind": "signed_sum", "lexicon": "signed.tsv", "scale": [-5, 5]}])
    groups = bucket_tweets(zip(tweets, score_corpus(tweets, reg)))
    hits = total = 0
    for w, group in groups.items():
        nxt = bars.get(w + timedelta(minutes=5))
        net = sum(np.sign(v.scores["afinn"]) for _, v in group)
        if nxt is None or net == 0:
            continue
        total += 1
        hits += (nxt.close > nxt.open) == (net > 0)
    rate = hits / total
    se = (0.6 * 0.4 / total) ** 0.5
    assert abs(rate - 0.6) < 4 * se + 0.02


def test_generation_is_seeded():
    cfg = SyntheticConfig(n_days=2, bars_per_day=10, seed=3)
    assert generate(cfg) == generate(cfg)


def test_svg_output_is_byte_identical(tmp_path):
    for k in range(2):
        fig = plotting.equity_figure([1.0, 3.0, 2.0], [0.0, -0.5, 0.2])
        plotting.save_svg(fig, tmp_path / f"e{k}.svg", "config_hash=x")
        fig = plotting.polarity_figure({"a": {"-1": 1, "0": 2, "1": 3}})
        plotting.save_svg(fig, tmp_path / f"p{k}.svg", "")
    assert (tmp_path / "e0.svg").read_bytes() == (tmp_path / "e1.svg").read_bytes()
    assert (tmp_path / "p0.svg").read_bytes() == (tmp_path / "p1.svg").read_bytes()
    assert b"config_hash=x" in (tmp_path / "e0.svg").read_bytes()

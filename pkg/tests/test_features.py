import io
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sentitrade.bars import BarSeries, fixed_tz
from sentitrade.corpus import RawTweet, make_clean, prepare_corpus
from sentitrade.errors import ValidationError
from sentitrade.features import (
    BAR_FIELDS, STATS, TWEET_ATTRS, FeatureConfig, FeatureMatrix, LagSpec, add_lags, aggregate_window,
    assemble, attach_label, attribute_names, bucket_tweets, class_balance, exploratory_report, read_matrix,
    score_corpus, stat_columns, window_stats, write_matrix,
)
from sentitrade.sentiment import build_registry
from sentitrade.synthetic import SyntheticConfig, generate

from oracles import stats_oracle

TZ = fixed_tz(-3)
UTC = timezone.utc
TWO = build_registry([
    {"id": "afinn", "kind": "signed_sum", "lexicon": "signed.tsv", "scale": [-5, 5]},
    {"id": "opinion", "kind": "polarity_count", "lexicon": "opinion.tsv"},
])


@pytest.fixture(scope="module")
def small():
    bars, raw = generate(SyntheticConfig(n_days=3, bars_per_day=12, seed=5))
    return bars, prepare_corpus(raw)


def _clean_at(local_hm, text="alta forte no pregão de hoje"):
    h, m = local_hm
    return make_clean(RawTweet(datetime(2021, 10, 27, h + 3, m, tzinfo=UTC), text))


def test_bucket_examples():
    a, b, c = _clean_at((10, 31)), _clean_at((10, 34)), _clean_at((10, 35))
    vecs = score_corpus([a, b, c], TWO)
    groups = bucket_tweets(zip([a, b, c], vecs))
    w30 = datetime(2021, 10, 27, 10, 30, tzinfo=TZ)
    assert [t for t, _ in groups[w30]] == [a, b]
    assert [t for t, _ in groups[w30 + timedelta(minutes=5)]] == [c]
    assert bucket_tweets([]) == {}


def test_window_stats_examples():
    s = window_stats(np.array([[1.0], [3.0]]))
    assert {k: float(v[0]) for k, v in s.items()} == {
        "mean": 2.0, "std": 1.0, "min": 1.0, "max": 3.0, "sum": 4.0, "var": 1.0, "count": 2.0}
    s = window_stats(np.array([[5.0]]))
    assert (s["mean"][0], s["std"][0], s["sum"][0], s["count"][0]) == (5.0, 0.0, 5.0, 1.0)
    s = window_stats(np.array([[0.1], [0.1], [0.1]]))
    assert s["var"][0] == 0.0


def test_window_stats_empty_is_missing_with_zero_count():
    s = window_stats(np.zeros((0, 2)))
    assert np.isnan(s["mean"]).all() and (s["count"] == 0).all()


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@given(st.lists(finite, min_size=1, max_size=40))
def test_window_stats_match_statistics_oracle(vals):
    got = {k: float(v[0]) for k, v in window_stats(np.array(vals).reshape(-1, 1)).items()}
    want = stats_oracle(vals)
    scale = max(1.0, max(abs(v) for v in vals))
    for k in STATS:
        tol = 1e-9 * scale ** (2 if k in ("var",) else 1) * len(vals)
        assert got[k] == pytest.approx(want[k], abs=tol), k
    assert got["min"] <= got["mean"] <= got["max"]
    assert got["sum"] == pytest.approx(got["mean"] * got["count"], rel=1e-9, abs=1e-9 * scale)
    assert got["var"] == pytest.approx(got["std"] ** 2, rel=1e-12, abs=0)


def test_aggregate_window_names_and_values():
    ts = [_clean_at((10, 31), "alta alta forte lucro hoje"), _clean_at((10, 32), "queda ruim no pregão hoje")]
    group = list(zip(ts, score_corpus(ts, TWO)))
    agg = aggregate_window(group, ["word_count", "afinn_score"])
    assert agg["word_count_mean"] == 5.0 and agg["word_count_count"] == 2.0
    assert list(agg) == stat_columns(["word_count", "afinn_score"])


def test_lag_example_and_day_boundary():
    d1 = datetime(2021, 10, 27, 10, 30, tzinfo=TZ)
    d2 = datetime(2021, 10, 28, 10, 30, tzinfo=TZ)
    windows = [d1, d1 + timedelta(minutes=5), d1 + timedelta(minutes=10), d2, d2 + timedelta(minutes=5)]
    x = np.array([[10.0], [20.0], [30.0], [40.0], [50.0]])
    w, v, names = add_lags(windows, x, ["x"], LagSpec((1,)))
    assert names == ["x", "x_lag_1"]
    assert w == [windows[1], windows[2], windows[4]]
    assert v[:, 1].tolist() == [10.0, 20.0, 40.0]


def test_lags_empty_is_identity():
    w = [datetime(2021, 10, 27, 10, 30, tzinfo=TZ)]
    out = add_lags(w, np.array([[1.0]]), ["x"], LagSpec(()))
    assert out[0] == w and out[2] == ["x"]


def test_lag_spec_validation():
    with pytest.raises(ValidationError):
        LagSpec((1, 1))
    with pytest.raises(ValidationError):
        LagSpec((0,))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=9), min_size=1, max_size=5),
       st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=3, unique=True))
def test_lags_exhaustive(day_sizes, lags):
    windows, vals = [], []
    for d, n in enumerate(day_sizes):
        start = datetime(2021, 1, 4 + d, 10, 30, tzinfo=TZ)
        for k in range(n):
            windows.append(start + timedelta(minutes=5 * k))
            vals.append([float(len(vals))])
    w, v, names = add_lags(windows, np.array(vals), ["x"], LagSpec(tuple(lags)))
    idx = {win: i for i, win in enumerate(windows)}
    expected_rows = [win for win in windows if (win - win.replace(hour=10, minute=30)) >= timedelta(minutes=5 * max(lags))]
    assert w == expected_rows
    for r, win in enumerate(w):
        for j, k in enumerate(lags):
            prior = win - timedelta(minutes=5 * k)
            assert prior.date() == win.date()
            assert v[r, 1 + j] == vals[idx[prior]][0]


def test_label_examples(small):
    bars, _ = small
    w = [b.timestamp for b in bars]
    _, _, labels = attach_label(w, np.zeros((len(w), 1)), bars)
    first_day = [b for b in bars if b.day == bars[0].day]
    expect = [1.0 if b.close > a.close else 0.0 for a, b in zip(first_day, first_day[1:])]
    assert labels[: len(expect)].tolist() == expect
    # last bar of each day has no successor and is dropped
    assert len(labels) == len(bars) - len(bars.days())


def test_label_tie_is_zero():
    from decimal import Decimal
    from sentitrade.bars import Bar
    t = datetime(2021, 10, 27, 10, 30, tzinfo=TZ)
    p = Decimal("28.20")
    s = BarSeries((Bar(t, p, p, p, p, 1, 1), Bar(t + timedelta(minutes=5), p, p, p, p, 1, 1)))
    _, _, labels = attach_label([t], np.zeros((1, 1)), s)
    assert labels.tolist() == [0.0]


def test_arity_with_two_scorers_and_ten_attributes(small):
    bars, tweets = small
    ten = tuple(a for a in TWEET_ATTRS if a != "user_listed")
    cfg = FeatureConfig(tweet_attrs=ten, lags=LagSpec(()))
    attrs = attribute_names(TWO.ids, cfg)
    assert len(attrs) == 14
    m = assemble(tweets, bars, TWO, cfg)
    stat_cols = [c for c in m.columns if c not in BAR_FIELDS and c != "label"]
    assert len(stat_cols) == 98
    assert m.columns[: len(BAR_FIELDS)] == list(BAR_FIELDS) and m.columns[-1] == "label"


def test_column_order_with_lags(small):
    bars, tweets = small
    cfg = FeatureConfig(tweet_attrs=("hour",), scorer_outputs=("score",), lags=LagSpec((1, 2)))
    m = assemble(tweets, bars, TWO, cfg)
    base = list(BAR_FIELDS) + stat_columns(["afinn_score", "opinion_score", "hour"])
    assert m.columns == base + [f"{c}_lag_1" for c in base] + [f"{c}_lag_2" for c in base] + ["label"]


def test_matrix_invariants(small):
    bars, tweets = small
    m = assemble(tweets, bars, TWO)
    for a in attribute_names(TWO.ids):
        lo, mu, hi = m.column(f"{a}_min"), m.column(f"{a}_mean"), m.column(f"{a}_max")
        ok = ~np.isnan(mu)
        assert (lo[ok] <= mu[ok]).all() and (mu[ok] <= hi[ok]).all()
        np.testing.assert_allclose(m.column(f"{a}_sum")[ok], (mu * m.column(f"{a}_count"))[ok], rtol=1e-9)
        np.testing.assert_allclose(m.column(f"{a}_var")[ok], m.column(f"{a}_std")[ok] ** 2, rtol=1e-12)
        assert (m.column(f"{a}_count") >= 0).all()


def test_empty_tweets_gives_bar_only_rows(small):
    bars, _ = small
    m = assemble([], bars, TWO, FeatureConfig(lags=LagSpec(())))
    assert len(m) == len(bars) - len(bars.days())
    assert (m.column("hour_count") == 0).all() and np.isnan(m.column("hour_mean")).all()


def test_no_look_ahead(small):
    bars, tweets = small
    full = assemble(tweets, bars, TWO)
    day = bars.days()[1]
    T = [b.timestamp for b in bars if b.day == day][6]
    cut = assemble([t for t in tweets if t.local_time < T + timedelta(minutes=5)], bars.truncated(T), TWO)
    rows_full = {w: r for w, r in zip(full.windows, full.values)}
    compared = 0
    for w, r in zip(cut.windows, cut.values):
        if w <= T - timedelta(minutes=5):
            np.testing.assert_array_equal(r, rows_full[w])
            compared += 1
    assert compared == sum(w <= T - timedelta(minutes=5) for w in full.windows) > 0


def test_byte_identical_and_round_trip(small):
    bars, tweets = small
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        write_matrix(assemble(tweets, bars, TWO), buf, "abc123")
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
    m, h = read_matrix(io.StringIO(outs[0]))
    assert h == "abc123"
    ref = assemble(tweets, bars, TWO)
    assert m.windows == ref.windows and m.columns == ref.columns
    np.testing.assert_array_equal(m.values, ref.values)


def test_matrix_rejects_unsorted_rows():
    t = datetime(2021, 10, 27, 10, 30, tzinfo=TZ)
    with pytest.raises(ValidationError):
        FeatureMatrix([t, t], ["a"], np.zeros((2, 1)))


def test_class_balance_reference_counts():
    cb = class_balance(139_885, 107_718)
    assert cb["up_fraction"] == pytest.approx(0.565, abs=5e-4)
    assert cb["down_fraction"] == pytest.approx(0.435, abs=5e-4)
    assert class_balance(10, 10)["up_fraction"] == 0.5


def test_exploratory_flags_constant_columns(small):
    bars, tweets = small
    m = assemble(tweets, bars, TWO)
    rep = exploratory_report(m)
    const = FeatureMatrix(m.windows, ["k", "label"], np.column_stack([np.ones(len(m)), m.y]))
    assert exploratory_report(const)["label_correlation"]["k"] == {"r": 0.0, "defined": False}
    assert math.isfinite(sum(v["r"] for v in rep["label_correlation"].values()))

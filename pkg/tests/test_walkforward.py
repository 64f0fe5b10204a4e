import io
from datetime import date, datetime, timedelta

import numpy as np
import pytest

from sentitrade import gbdt, walkforward
from sentitrade.bars import fixed_tz
from sentitrade.errors import ValidationError
from sentitrade.features import FeatureMatrix
from sentitrade.gbdt import TrainParams
from sentitrade.synthetic import business_days
from sentitrade.walkforward import (
    FoldSpec, LedgerEntry, PredictionLedger, compute_metrics, make_folds, read_ledger, run_all, run_fold,
    write_history, write_ledger,
)

from oracles import macro_f1_oracle

TZ = fixed_tz(-3)
FAST = TrainParams(n_estimators=12, eta=0.3, max_depth=2, scale_pos_weight=1.0)

# B3 sessions closed on weekdays between January and October 2021
HOLIDAYS_2021 = {date(2021, 1, 25), date(2021, 2, 15), date(2021, 2, 16), date(2021, 4, 2), date(2021, 4, 21),
                 date(2021, 6, 3), date(2021, 7, 9), date(2021, 9, 7), date(2021, 10, 12)}


def _days(n, start=date(2021, 1, 4)):
    return business_days(start, n)


def test_fold_counts():
    assert len(make_folds(_days(202))) == 1
    assert len(make_folds(_days(453))) == 252
    with pytest.raises(ValidationError):
        make_folds(_days(201))


def test_folds_roll_one_day_at_a_time():
    days = _days(205)
    folds = make_folds(days)
    for k, f in enumerate(folds):
        assert f.train_days == tuple(days[k:k + 200])
        assert f.val_day == days[k + 200] and f.test_day == days[k + 201]


def test_first_fold_on_the_2021_calendar():
    sessions = [d for d in _days(260) if d not in HOLIDAYS_2021]
    upto = [d for d in sessions if d <= date(2021, 10, 26)]
    # the stated first training span holds 203 sessions, not 200
    assert len(upto) == 203
    first = make_folds(sessions, train_n=len(upto))[0]
    assert (first.train_days[0], first.train_days[-1]) == (date(2021, 1, 4), date(2021, 10, 26))
    assert (first.val_day, first.test_day) == (date(2021, 10, 27), date(2021, 10, 28))


def test_fold_spec_invariants():
    d = _days(4)
    with pytest.raises(ValidationError):
        FoldSpec((d[0], d[0]), (d[1],), (d[2],))
    with pytest.raises(ValidationError):
        FoldSpec((d[1],), (d[0],), (d[2],))
    with pytest.raises(ValidationError):
        FoldSpec((d[0],), (d[2],), (d[1],))


def _matrix(n_days=6, bars=20, seed=0, skip_day=None):
    """Row-index feature plus a noisy signal feature, so training rows are traceable."""
    rng = np.random.default_rng(seed)
    windows, rows = [], []
    for day in _days(n_days):
        if day == skip_day:
            continue
        for k in range(bars):
            windows.append(datetime(day.year, day.month, day.day, 10, 30, tzinfo=TZ) + timedelta(minutes=5 * k))
            s = rng.normal()
            rows.append([len(rows), s, float(s + rng.normal() > 0)])
    return FeatureMatrix(windows, ["row", "signal", "label"], np.array(rows))


def test_run_fold_never_trains_on_test_rows(monkeypatch):
    m = _matrix()
    seen = []
    real_fit = gbdt.fit

    def spy(X, y, params, eval_X=None, eval_y=None, feature_names=None):
        seen.append(set(X[:, 0].tolist()) | (set() if eval_X is None else set(eval_X[:, 0].tolist())))
        return real_fit(X, y, params, eval_X, eval_y, feature_names)

    monkeypatch.setattr(walkforward.gbdt, "fit", spy)
    days = m.trading_days()
    fold = FoldSpec(tuple(days[:4]), (days[4],), (days[5],))
    res = run_fold(m, fold, FAST)
    test_rows = set(m.rows_for_days([days[5]]).tolist())
    assert len(seen) == 2 and all(not (s & test_rows) for s in seen)
    assert {int(m.column("row")[m.windows.index(e.window)]) for e in res.entries} == test_rows


def test_retrain_uses_selected_round_count():
    m = _matrix()
    days = m.trading_days()
    res = run_fold(m, FoldSpec(tuple(days[:4]), (days[4],), (days[5],)), FAST)
    losses = [r["eval_logloss"] for r in res.history]
    assert res.best_round == int(np.argmin(losses)) + 1
    assert len(res.model.trees) == res.best_round


def test_best_round_equal_to_n_estimators_uses_all_rounds():
    m = _matrix()
    days = m.trading_days()
    params = TrainParams(n_estimators=3, eta=0.01, max_depth=1, scale_pos_weight=1.0)
    res = run_fold(m, FoldSpec(tuple(days[:4]), (days[4],), (days[5],)), params)
    # with a tiny step the validation loss is still falling at the last round
    assert res.best_round == 3 and len(res.model.trees) == 3


def test_shuffled_training_rows_give_identical_predictions():
    m = _matrix()
    days = m.trading_days()
    fold = FoldSpec(tuple(days[:4]), (days[4],), (days[5],))
    a = run_fold(m, fold, FAST)
    # move row contents among the training days; the training multiset is unchanged
    perm = np.r_[np.random.default_rng(1).permutation(80), np.arange(80, len(m))]
    b = run_fold(FeatureMatrix(m.windows, m.columns, m.values[perm]), fold, FAST)
    assert [e.probability for e in a.entries] == [e.probability for e in b.entries]


def test_empty_test_day_skips_with_notice(caplog):
    days = _days(6)
    m = _matrix(skip_day=days[5])
    res = run_fold(m, FoldSpec(tuple(days[:4]), (days[4],), (days[5],)), FAST)
    assert res.skipped and not res.entries
    assert "skipped" in caplog.text


def test_run_all_ledger_complete_and_ordered():
    m = _matrix(n_days=8)
    folds = make_folds(m.trading_days(), train_n=4)
    ledger, results = run_all(m, FAST, folds)
    test_days = [f.test_day for f in folds]
    expected = [w for w in m.windows if w.date() in test_days]
    assert ledger.windows == expected
    assert len(ledger) == 3 * 20


def test_run_all_with_all_folds_skipped_errors():
    days = _days(6)
    m = _matrix(n_days=5)
    with pytest.raises(ValidationError):
        run_all(m, FAST, [FoldSpec(tuple(days[:4]), (days[4],), (days[5],))])
    with pytest.raises(ValidationError):
        run_all(m, FAST, [])


def test_rerun_gives_identical_ledger_file():
    m = _matrix(n_days=7)
    folds = make_folds(m.trading_days(), train_n=4)
    texts = []
    for _ in range(2):
        buf = io.StringIO()
        write_ledger(run_all(m, FAST, folds)[0], buf, "h")
        texts.append(buf.getvalue())
    assert texts[0] == texts[1]
    ledger, h = read_ledger(io.StringIO(texts[0]))
    assert h == "h" and len(ledger) == 40


def test_history_csv_rederives_best_round():
    m = _matrix(n_days=7)
    _, results = run_all(m, FAST, make_folds(m.trading_days(), train_n=4))
    buf = io.StringIO()
    write_history(results, buf)
    rows = [line.split(",") for line in buf.getvalue().splitlines() if not line.startswith("#")]
    header, body = rows[0], rows[1:]
    fi, ri, ei = header.index("fold"), header.index("round"), header.index("eval_logloss")
    for r in results:
        curve = [(float(row[ei]), int(row[ri])) for row in body if int(row[fi]) == r.index]
        assert min(curve)[1] == r.best_round


def _ledger(pred, y, probs=None):
    t0 = datetime(2021, 10, 28, 10, 30, tzinfo=TZ)
    probs = probs or [0.9 if p else 0.1 for p in pred]
    return PredictionLedger([LedgerEntry(t0 + timedelta(minutes=5 * i), pr, p, l)
                             for i, (pr, p, l) in enumerate(zip(probs, pred, y))])


def test_metrics_examples():
    r = compute_metrics(_ledger([1, 0, 1, 0], [1, 0, 1, 0]))
    assert (r.precision, r.recall, r.f1, r.auc) == (1.0, 1.0, 1.0, 1.0)
    r = compute_metrics(_ledger([1, 1, 1, 1], [1, 1, 0, 0]))
    assert r.f1 == pytest.approx(1 / 3) == pytest.approx(macro_f1_oracle([1, 1, 1, 1], [1, 1, 0, 0]))
    assert sum(r.confusion.values()) == r.n == 4


def test_metrics_single_class_auc_undefined():
    r = compute_metrics(_ledger([1, 0], [1, 1]))
    assert r.auc is None
    assert r.to_dict()["auc"] is None


def test_ledger_invariants():
    t = datetime(2021, 10, 28, 10, 30, tzinfo=TZ)
    with pytest.raises(ValidationError):
        PredictionLedger([LedgerEntry(t, 0.7, 0, 1)])
    with pytest.raises(ValidationError):
        PredictionLedger([LedgerEntry(t, 0.7, 1, 1), LedgerEntry(t, 0.7, 1, 1)])
    assert PredictionLedger([LedgerEntry(t, 0.5, 1, 0)]).predictions.tolist() == [1]

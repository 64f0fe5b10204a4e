import json
import math

import numpy as np
import pytest

from sentitrade.errors import SchemaMismatchError, ValidationError
from sentitrade.features import FeatureConfig, LagSpec, assemble
from sentitrade.corpus import prepare_corpus
from sentitrade.gbdt import (
    Model, TrainParams, Tree, deserialize, fit, gradients, predict_proba, serialize, train,
)
from sentitrade.sentiment import build_registry
from sentitrade.synthetic import SyntheticConfig, generate

from oracles import nested, random_split_case, split_tree_oracle, tree_mismatch


def one_round(X, y, *, lam=1.0, gamma=0.0, mcw=1.0, spw=1.0, max_depth=1):
    params = TrainParams(n_estimators=1, max_depth=max_depth, reg_lambda=lam, gamma=gamma,
                         min_child_weight=mcw, scale_pos_weight=spw)
    return fit(X, y, params).trees[0]


def test_four_sample_example():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    tree = one_round(X, y, mcw=0.0)
    assert nested(tree) == {"feature": 0, "threshold": 2.5, "default_left": True,
                            "left": {"leaf": pytest.approx(2 / 3)}, "right": {"leaf": pytest.approx(-2 / 3)}}
    assert tree_mismatch(nested(tree), split_tree_oracle(X, y, mcw=0.0)) is None


def test_four_sample_example_with_default_min_child_weight_stays_a_leaf():
    # each half has hessian 0.5 < 1, so no split is admissible
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    assert one_round(X, y).n_nodes == 1


def test_depth_zero_gives_constant_leaf():
    X = np.arange(6.0).reshape(-1, 1)
    y = np.array([0, 1, 0, 1, 1, 1.0])
    m = fit(X, y, TrainParams(n_estimators=1, max_depth=0, scale_pos_weight=1.0))
    assert len(m.trees) == 1 and m.trees[0].n_nodes == 1
    G = float(np.sum(0.5 - y))
    assert m.trees[0].value[0] == pytest.approx(-G / (6 * 0.25 + 1.0))


def test_param_validation():
    with pytest.raises(ValidationError):
        TrainParams(n_estimators=0)
    with pytest.raises(ValidationError):
        TrainParams(eta=0)
    with pytest.raises(ValidationError):
        TrainParams(scale_pos_weight=0)
    with pytest.raises(ValidationError):
        TrainParams(reg_lambda=-1)


def test_split_search_matches_oracle_fuzz():
    rng = np.random.default_rng(11)
    bad = []
    for case in range(300):
        X, y, p = random_split_case(rng)
        got = nested(one_round(X, y, **p))
        want = split_tree_oracle(X, y, **p)
        diff = tree_mismatch(got, want)
        if diff:
            bad.append((case, diff))
    assert bad == []


def test_missing_values_follow_learned_direction():
    X = np.array([[1.0], [2.0], [np.nan], [np.nan], [5.0], [6.0]])
    y = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
    tree = one_round(X, y, mcw=0.0)
    assert tree.default_left[0]
    assert tree.apply(np.array([[np.nan]]))[0] == tree.left[0]


def test_all_one_class_allowed():
    X = np.arange(5.0).reshape(-1, 1)
    m = fit(X, np.ones(5), TrainParams(n_estimators=50, eta=0.3))
    assert (predict_proba(m, X) > 0.9).all()


def test_fit_input_errors():
    with pytest.raises(ValidationError):
        fit(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValidationError):
        fit(np.zeros((2, 1)), np.array([0.0, 2.0]))
    with pytest.raises(SchemaMismatchError):
        fit(np.zeros((2, 1)), np.array([0.0, 1.0]), eval_X=np.zeros((2, 2)), eval_y=np.zeros(2))


def _data(seed=3, n=300, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)).round(1)
    X[rng.random((n, d)) < 0.1] = np.nan
    y = (np.nan_to_num(X[:, 0]) + 0.5 * rng.normal(size=n) > 0).astype(float)
    return X, y


def test_row_permutation_never_changes_the_model():
    X, y = _data()
    params = TrainParams(n_estimators=20, eta=0.3, max_depth=3)
    ref = serialize(fit(X, y, params))
    perm = np.random.default_rng(0).permutation(len(y))
    assert serialize(fit(X[perm], y[perm], params)) == ref


def test_determinism_byte_identical():
    X, y = _data()
    params = TrainParams(n_estimators=15, max_depth=3)
    assert serialize(fit(X, y, params)) == serialize(fit(X, y, params))


def test_duplicated_rows_give_the_same_model_with_zero_lambda():
    X, y = _data(n=120)
    params = TrainParams(n_estimators=5, eta=0.3, max_depth=3, reg_lambda=0.0, min_child_weight=0.0)
    a = fit(X, y, params)
    b = fit(np.vstack([X, X]), np.r_[y, y], params)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.default_left, tb.default_left)
        np.testing.assert_allclose(ta.threshold, tb.threshold)
        np.testing.assert_allclose(ta.value, tb.value, rtol=1e-9)


def test_duplicated_rows_keep_structure_with_lambda():
    X, y = _data(n=120)
    params = TrainParams(n_estimators=1, max_depth=3, min_child_weight=0.0)
    a, b = fit(X, y, params).trees[0], fit(np.vstack([X, X]), np.r_[y, y], params).trees[0]
    assert a.n_nodes <= b.n_nodes
    assert a.feature[0] == b.feature[0]


def test_unit_weight_is_unweighted_bitwise():
    rng = np.random.default_rng(1)
    p = rng.random(50)
    y = (rng.random(50) < 0.5).astype(float)
    g, h = gradients(y, p, 1.0)
    assert np.array_equal(g, p - y) and np.array_equal(h, p * (1 - p))


def test_positive_weight_scales_positive_rows_only():
    p = np.array([0.3, 0.7])
    y = np.array([1.0, 0.0])
    g, h = gradients(y, p, 0.6)
    np.testing.assert_allclose(g, [0.6 * (0.3 - 1), 0.7])
    np.testing.assert_allclose(h, [0.6 * 0.21, 0.21])


def test_weighted_training_loss_non_increasing():
    bars, raw = generate(SyntheticConfig(n_days=12, seed=9))
    reg = build_registry([{"id": "afinn", "kind": "signed_sum", "lexicon": "signed.tsv", "scale": [-5, 5]}])
    m = assemble(prepare_corpus(raw), bars, reg,
                 FeatureConfig(tweet_attrs=(), scorer_outputs=("score",), lags=LagSpec((1,))))
    model = train(m, TrainParams(n_estimators=60, scale_pos_weight=1.0))
    losses = [r["train_logloss"] for r in model.history]
    assert all(b <= a + 1e-6 for a, b in zip(losses, losses[1:]))


def test_trees_respect_max_depth():
    X, y = _data()
    m = fit(X, y, TrainParams(n_estimators=10, eta=0.3, max_depth=2, min_child_weight=0.0))
    assert max(t.depth() for t in m.trees) <= 2


def test_zero_trees_predict_base_score():
    m = Model(TrainParams(), [], "h", None, ["a"])
    assert np.all(predict_proba(m, np.zeros((3, 1))) == 0.5)


def test_single_leaf_tree_prediction():
    tree = Tree(np.array([-1]), np.array([np.nan]), np.array([True]), np.array([-1]), np.array([-1]), np.array([2.0]))
    m = Model(TrainParams(eta=0.1), [tree], "h", None, ["a"])
    p = predict_proba(m, np.zeros((2, 1)))
    np.testing.assert_allclose(p, 1 / (1 + math.exp(-0.2)))


def _doc_one_split():
    return {
        "format": "sentitrade-gbdt", "version": 1,
        "params": {"eta": 0.5, "n_estimators": 1, "max_depth": 1, "scale_pos_weight": 1.0, "seed": 4321,
                   "objective": "binary:logistic", "reg_lambda": 1.0, "gamma": 0.0,
                   "min_child_weight": 1.0, "base_score": 0.5},
        "schema_hash": "abc", "best_round": None, "feature_names": ["x"],
        "trees": [{"feature": [0, -1, -1], "threshold": [3.0, None, None], "default_left": [False, True, True],
                   "left": [1, -1, -1], "right": [2, -1, -1], "value": [0.0, -2.0, 2.0]}],
    }


def test_hand_written_document_predicts_by_hand():
    m = deserialize(json.dumps(_doc_one_split()))
    p = predict_proba(m, np.array([[1.0], [5.0], [np.nan]]))
    lo, hi = 1 / (1 + math.exp(1.0)), 1 / (1 + math.exp(-1.0))
    np.testing.assert_allclose(p, [lo, hi, hi])


def test_serialize_round_trip():
    X, y = _data()
    m = fit(X, y, TrainParams(n_estimators=5, max_depth=3), eval_X=X[:50], eval_y=y[:50])
    again = deserialize(serialize(m))
    assert again == m
    np.testing.assert_array_equal(predict_proba(again, X), predict_proba(m, X))


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(version=2),
    lambda d: d.update(format="other"),
    lambda d: d["trees"][0].update(left=[5, -1, -1]),
    lambda d: d["trees"][0].update(left=[1, -1, -1], right=[1, -1, -1]),
    lambda d: d["trees"][0].update(feature=[3, -1, -1]),
    lambda d: d["trees"][0].pop("value"),
    lambda d: d.pop("schema_hash"),
])
def test_corrupted_documents_rejected(mutate):
    doc = _doc_one_split()
    mutate(doc)
    with pytest.raises(ValidationError):
        deserialize(json.dumps(doc))


def test_truncated_document_rejected():
    text = json.dumps(_doc_one_split())
    with pytest.raises(ValidationError):
        deserialize(text[: len(text) // 2])


def test_predict_checks_schema():
    X, y = _data()
    m = fit(X, y, TrainParams(n_estimators=2))
    with pytest.raises(SchemaMismatchError):
        predict_proba(m, X[:, :2])


def test_best_round_caps_prediction():
    X, y = _data()
    m = fit(X, y, TrainParams(n_estimators=30, eta=0.3), eval_X=X, eval_y=y)
    assert 1 <= m.best_round <= 30
    np.testing.assert_array_equal(predict_proba(m, X), predict_proba(m, X, m.best_round))

import math

import numpy as np
import pytest

from semcad import baselines as bl
from semcad.baselines import BaselineError, BoostConfig, ForestConfig
from semcad.data_model import EncodedDataset


def dataset(codes, labels, cards=None):
    codes = np.asarray(codes, dtype=np.int64)
    cards = np.asarray(cards if cards is not None else codes.max(0) + 1)
    return EncodedDataset(codes, np.asarray(labels, dtype=np.int64), cards, tuple(f"f{i}" for i in range(codes.shape[1])))


@pytest.fixture
def copy_label(rng):
    y = rng.integers(0, 2, 300)
    noise = rng.integers(1, 6, size=(300, 2))
    return dataset(np.column_stack([y + 1, noise]), y, [3, 6, 6])


def traverse(tree, row):
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if row[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.value[node]


def test_rf_depth_one_perfect(copy_label):
    m = bl.rf_fit(copy_label, ForestConfig(n_trees=10, max_depth=1, min_leaf=1, max_features=3, seed=1))
    pred = (m.predict_proba(copy_label.codes) >= 0.5).astype(int)
    assert (pred == copy_label.labels).all()
    assert all(t.depth() <= 1 for t in m.trees)


def test_rf_mean_of_trees_and_oracle(copy_label, rng):
    m = bl.rf_fit(copy_label, ForestConfig(n_trees=7, max_depth=4, seed=3))
    rows = np.column_stack([rng.integers(0, 3, 100), rng.integers(0, 6, (100, 2))])
    for row in rows:
        expect = sum(traverse(t, row) for t in m.trees) / len(m.trees)
        assert bl.rf_predict(m, row) == pytest.approx(expect, abs=1e-15)
    one = bl.ForestModel(m.trees[:1], m.n_features)
    assert np.array_equal(one.predict_proba(rows), m.trees[0].predict(rows))
    p = m.predict_proba(rows)
    assert ((0 <= p) & (p <= 1)).all()


def test_rf_unanimous_and_errors(copy_label):
    m = bl.rf_fit(copy_label, ForestConfig(n_trees=3, max_depth=1, min_leaf=1, max_features=3))
    assert bl.rf_predict(m, [2, 1, 1]) == 1.0
    with pytest.raises(BaselineError):
        bl.rf_predict(m, [])
    with pytest.raises(BaselineError):
        bl.rf_fit(dataset([[1], [2]], [0, 0]))


def test_rf_deterministic(copy_label):
    a = bl.rf_fit(copy_label, ForestConfig(n_trees=5, seed=11))
    b = bl.rf_fit(copy_label, ForestConfig(n_trees=5, seed=11))
    assert bl.model_to_json(a) == bl.model_to_json(b)


def test_gbt_separable():
    x = np.arange(1, 41).reshape(-1, 1)
    y = (x[:, 0] > 20).astype(int)
    m = bl.gbt_fit(dataset(x, y, [41]), BoostConfig(rounds=50))
    assert ((m.predict_proba(x) >= 0.5) == y).all()
    assert all(b <= a + 1e-12 for a, b in zip(m.loss_trace, m.loss_trace[1:]))


def test_gbt_stumps_small_eta_learn_ordinal_threshold():
    x = np.arange(1, 41).reshape(-1, 1)
    y = (x[:, 0] > 13).astype(int)
    m = bl.gbt_fit(dataset(x, y, [41]), BoostConfig(rounds=400, max_depth=1, learning_rate=0.05))
    assert ((m.predict_proba(x) >= 0.5) == y).all()


def test_gbt_zero_eta_and_zero_trees(copy_label):
    prev = copy_label.labels.mean()
    m = bl.gbt_fit(copy_label, BoostConfig(rounds=10, learning_rate=0.0))
    assert np.allclose(m.predict_proba(copy_label.codes), prev)
    z = bl.gbt_fit(copy_label, BoostConfig(rounds=0))
    assert bl.gbt_predict(z, copy_label.codes[0]) == pytest.approx(prev, abs=1e-15)
    assert z.initial_logit == pytest.approx(math.log(prev / (1 - prev)))


def test_gbt_accumulation_oracle_and_monotone(copy_label, rng):
    m = bl.gbt_fit(copy_label, BoostConfig(rounds=15, max_depth=2))
    rows = np.column_stack([rng.integers(0, 3, 50), rng.integers(0, 6, (50, 2))])
    for row in rows:
        z = m.initial_logit + sum(m.learning_rate * traverse(t, row) for t in m.trees)
        assert bl.gbt_predict(m, row) == pytest.approx(1 / (1 + math.exp(-z)), abs=1e-13)
    base = m.predict_proba(rows)
    t0 = m.trees[0]
    t0.value = t0.value + 0.5
    assert (m.predict_proba(rows) >= base).all()


def test_unknown_codes_predict(copy_label):
    rf = bl.rf_fit(copy_label, ForestConfig(n_trees=3))
    gb = bl.gbt_fit(copy_label, BoostConfig(rounds=3))
    zeros = np.zeros((4, 3), dtype=int)
    assert rf.predict_proba(zeros).shape == (4,)
    assert np.isfinite(gb.predict_proba(zeros)).all()


def test_json_round_trip(tmp_path, copy_label):
    for model in (bl.rf_fit(copy_label, ForestConfig(n_trees=4)), bl.gbt_fit(copy_label, BoostConfig(rounds=4))):
        p = tmp_path / "m.json"
        bl.save_model(model, p, {"note": "x"})
        back, doc = bl.load_model(p)
        assert doc["note"] == "x"
        assert np.array_equal(back.predict_proba(copy_label.codes), model.predict_proba(copy_label.codes))
    doc["format_version"] = 5
    with pytest.raises(BaselineError):
        bl.model_from_json(doc)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tempest.models import tree
from tempest.models.tree import best_split, grow_tree, predict_forest, random_split, train_forest
from tempest.rng import stream

from oracles import exhaustive_split


def _random_problem(rng, integer):
    n = int(rng.integers(2, 7))
    p = int(rng.integers(1, 4))
    if integer:
        X = rng.integers(0, 3, size=(n, p)).astype(float)
        y = rng.integers(0, 4, size=n).astype(float)
    else:
        X = rng.normal(size=(n, p))
        y = rng.normal(size=n)
    return X, y


@pytest.mark.parametrize("integer", [False, True])
def test_best_split_matches_exhaustive(integer):
    rng = np.random.default_rng(4 + integer)
    for _ in range(200):
        X, y = _random_problem(rng, integer)
        got = best_split(X, y, np.arange(X.shape[1]))
        want = exhaustive_split(X, y)
        if want is None:
            assert got is None
            continue
        assert got[:2] == want[:2]
        assert got[2] == pytest.approx(want[2], abs=1e-9)


def test_best_split_min_leaf_matches_exhaustive():
    rng = np.random.default_rng(9)
    for _ in range(100):
        X, y = _random_problem(rng, False)
        got = best_split(X, y, np.arange(X.shape[1]), min_leaf=2)
        want = exhaustive_split(X, y, min_leaf=2)
        assert (got is None) == (want is None)
        if want is not None:
            assert got[:2] == want[:2]


def test_step_function_split():
    X = np.arange(10.0)[:, None]
    y = np.where(X[:, 0] < 5, 1.0, 3.0)
    col, thr, sse = best_split(X, y, np.array([0]))
    assert (col, thr) == (0, 4.5)
    assert sse == 0.0


def test_tie_goes_to_lowest_column_then_threshold():
    # both columns separate y identically
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    assert best_split(X, y, np.array([0, 1]))[:2] == (0, 1.5)
    assert best_split(X, y, np.array([1]))[:2] == (1, 1.5)
    # symmetric y: thresholds 0.5 and 2.5 tie, lower wins
    y = np.array([1.0, 0.0, 0.0, 1.0])
    X = np.arange(4.0)[:, None]
    assert best_split(X, y, np.array([0]))[:2] == (0, 0.5)


def test_constant_feature_never_chosen():
    X = np.column_stack([np.ones(8), np.arange(8.0)])
    y = np.arange(8.0)
    assert best_split(X, y, np.array([0, 1]))[0] == 1
    assert best_split(X, y, np.array([0])) is None


def test_full_tree_memorizes_distinct_inputs():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    t = grow_tree(X, y)
    assert np.allclose(t.predict(X), y)


def test_tree_never_creates_small_leaves():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    t = grow_tree(X, y, min_leaf=5)
    leaves = t.predict(X)
    _, counts = np.unique(leaves, return_counts=True)
    assert counts.min() >= 5


def test_random_split_threshold_inside_range():
    X = np.array([[0.0], [1.0], [2.0], [5.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    for k in range(20):
        col, thr, _ = random_split(X, y, np.array([0]), stream(k, "t"))
        assert 0.0 <= thr < 5.0


def test_forest_deterministic_and_seed_sensitive():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 6))
    y = X[:, 0] + rng.normal(scale=0.1, size=80)
    a = predict_forest(train_forest(X, y, n_trees=5, seed=1), X)
    b = predict_forest(train_forest(X, y, n_trees=5, seed=1), X)
    c = predict_forest(train_forest(X, y, n_trees=5, seed=2), X)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_forest_tree_is_independent_of_ensemble_size():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40)
    few = train_forest(X, y, n_trees=2, seed=8)
    many = train_forest(X, y, n_trees=6, seed=8)
    assert np.array_equal(few[1].threshold, many[1].threshold)


def test_extra_trees_use_full_sample():
    X = np.arange(20.0)[:, None]
    y = np.arange(20.0)
    trees = train_forest(X, y, n_trees=3, min_leaf=1, bootstrap=False, split_rule="random", seed=0)
    for t in trees:
        assert np.allclose(t.predict(X), y)


def test_forest_bad_arguments():
    X, y = np.zeros((4, 2)), np.zeros(4)
    with pytest.raises(ValueError):
        train_forest(X, y, n_trees=0)
    with pytest.raises(ValueError):
        train_forest(X, y, max_features=3)
    with pytest.raises(ValueError):
        grow_tree(X, y, split_rule="median")


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, st.tuples(st.integers(2, 8), st.integers(1, 3)), elements=st.integers(-3, 3).map(float)),
       st.data())
def test_split_property_against_oracle(X, data):
    y = data.draw(hnp.arrays(float, X.shape[0], elements=st.integers(-5, 5).map(float)))
    got = best_split(X, y, np.arange(X.shape[1]))
    want = exhaustive_split(X, y, rtol=tree.TIE_RTOL)
    if want is None:
        assert got is None
    else:
        assert got[:2] == want[:2]

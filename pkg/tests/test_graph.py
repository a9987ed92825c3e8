import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adjseq.graph import (
    HypothesisSet,
    WeightingStrategy,
    closure_weights,
    enumerate_closure,
    is_consonant,
    removal_weights,
    subset_weights,
    update_after_rejection,
    validate_strategy,
)
from conftest import EX_TRANSITION, EX_WEIGHTS
from oracles import random_strategy


@pytest.fixture
def strategy():
    return validate_strategy(WeightingStrategy(EX_WEIGHTS, EX_TRANSITION))


def test_closure_order():
    assert enumerate_closure(3) == [(0, 1, 2), (0, 1), (0, 2), (1, 2), (0,), (1,), (2,)]
    assert len(enumerate_closure(5)) == 31


def test_closure_cap():
    with pytest.raises(ValueError, match="cap"):
        enumerate_closure(17)
    with pytest.raises(ValueError, match="cap"):
        HypothesisSet.numbered(17)


def test_worked_example_weights(strategy):
    assert np.array_equal(subset_weights(strategy, (0, 1, 2)), [0.3, 0.3, 0.4])
    assert np.array_equal(subset_weights(strategy, (0, 1)), [0.5, 0.5])
    for s in ((0, 2), (1, 2)):
        assert subset_weights(strategy, s) == pytest.approx([3 / 7, 4 / 7], abs=1e-15)
    for j in range(3):
        assert subset_weights(strategy, (j,))[0] == 1.0


def test_rejection_update(strategy):
    after = update_after_rejection(strategy, 2)
    assert after.indices == (0, 1)
    assert np.allclose(after.initial_weights, [0.5, 0.5])
    with pytest.raises(ValueError):
        update_after_rejection(after, 2)


def test_explicit_table_passthrough(strategy):
    table = {s: np.full(len(s), 1 / len(s)) for s in enumerate_closure(3)}
    s = validate_strategy(WeightingStrategy(EX_WEIGHTS, EX_TRANSITION, table))
    assert np.array_equal(subset_weights(s, (0, 2)), [0.5, 0.5])


def test_explicit_table_must_be_complete():
    with pytest.raises(ValueError, match="miss"):
        validate_strategy(WeightingStrategy(EX_WEIGHTS, EX_TRANSITION, {(0, 1): [0.5, 0.5]}))


@pytest.mark.parametrize(
    "w, g, msg",
    [
        ([0.5, 0.5], np.zeros((3, 3)), "3x3|2x2"),
        ([-0.1, 0.5], [[0, 1], [1, 0]], "lie in"),
        ([0.6, 0.6], [[0, 1], [1, 0]], "sum"),
        ([0.5, 0.5], [[0.1, 0.9], [1, 0]], "diagonal"),
        ([0.5, 0.5, 0], [[0, 0.7, 0.7], [1, 0, 0], [1, 0, 0]], "row 1"),
    ],
)
def test_validation_errors(w, g, msg):
    with pytest.raises(ValueError, match=msg):
        validate_strategy(WeightingStrategy(w, g))


def test_example_is_consonant(strategy):
    assert is_consonant(strategy)


def test_non_consonant_table_detected():
    table = {s: np.full(len(s), 1 / len(s)) for s in enumerate_closure(3)}
    table[(0, 1)] = np.array([0.2, 0.2])  # smaller than in the full set
    s = validate_strategy(WeightingStrategy([1 / 3] * 3, EX_TRANSITION, table))
    assert not is_consonant(s)


strategies_st = st.builds(
    lambda m, seed: (m, random_strategy(m, np.random.default_rng(seed))),
    st.integers(2, 5),
    st.integers(0, 2**32 - 1),
)


@settings(max_examples=60, deadline=None)
@given(strategies_st, st.data())
def test_removal_order_invariance(case, data):
    m, (w, g) = case
    keep = data.draw(st.lists(st.integers(0, m - 1), min_size=1, max_size=m - 1, unique=True))
    drop = [i for i in range(m) if i not in keep]
    base = removal_weights(w, g, sorted(keep))
    for order in itertools.permutations(drop):
        assert np.allclose(removal_weights(w, g, sorted(keep), order), base, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(strategies_st)
def test_mass_conservation_and_bounds(case):
    m, (w, g) = case
    s = validate_strategy(WeightingStrategy(w, g))
    for sub, ws in closure_weights(s).items():
        assert np.all(ws >= -1e-15)
        assert ws.sum() <= 1 + 1e-12
        # full rows pass all weight on, so nothing is lost
        if np.allclose(g.sum(axis=1), 1) and np.isclose(w.sum(), 1):
            assert ws.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(strategies_st)
def test_graph_weights_are_consonant(case):
    m, (w, g) = case
    assert is_consonant(validate_strategy(WeightingStrategy(w, g)))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sorte.errors import DimensionError, NormalizationError, SchemaError, ValidationError
from sorte.market import (
    MarketModel,
    PricingVector,
    ProbMeasure,
    expectation,
    group_aggregate,
    load_market,
    relative_entropy,
    to_csv,
)


def doc(**over):
    d = {"agents": ["a", "b"], "scenarios": ["s1", "s2"], "probs": [0.5, 0.5], "endowments": [[1.0, -1.0], [0.0, 0.0]]}
    d.update(over)
    return d


def test_load_round_trip():
    m = load_market(doc())
    assert (m.n_agents, m.n_scenarios) == (2, 2)
    assert m.agent_ids == ("a", "b")
    np.testing.assert_array_equal(m.endowments, [[1, -1], [0, 0]])


@pytest.mark.parametrize("probs", [[0.6, 0.5], [1.0, 0.0], [1.2, -0.2]])
def test_bad_probabilities(probs):
    with pytest.raises(ValidationError):
        load_market(doc(probs=probs))


def test_ragged_and_missing():
    with pytest.raises(ValidationError):
        load_market(doc(endowments=[[1.0, 2.0], [1.0]]))
    with pytest.raises(ValidationError):
        load_market(doc(endowments=[[1.0, 2.0]]))
    with pytest.raises(SchemaError):
        load_market({"agents": ["a"]})
    with pytest.raises(SchemaError):
        load_market(doc(probs="0.5"))


def test_model_invariants():
    with pytest.raises(ValidationError):
        MarketModel.from_arrays([0.5, 0.5], [[1.0, np.nan]])
    with pytest.raises((ValidationError, DimensionError)):
        MarketModel.from_arrays([0.5, 0.5], [[1.0, 2.0, 3.0]])
    m = MarketModel.from_arrays([0.25, 0.75], [[1.0, 2.0]])
    assert m.scenario_ids == ("w1", "w2") and m.agent_ids == ("agent1",)
    with pytest.raises((AttributeError, ValueError, TypeError)):
        m.endowments[0, 0] = 5.0


def test_expectation_examples():
    m = MarketModel.from_arrays([0.5, 0.5], [[1.0, -1.0], [0.0, 0.0]])
    assert expectation(m, ProbMeasure(np.ones(2)), m.endowments[0]) == pytest.approx(0.0)
    assert expectation(m, [0.5379, 1.4621], [-0.5, 0.5]) == pytest.approx(0.23105, abs=1e-12)
    assert expectation(m, None, [3.0, 3.0]) == pytest.approx(3.0)
    with pytest.raises(DimensionError):
        expectation(m, None, [1.0, 2.0, 3.0])


def test_relative_entropy_examples():
    m = MarketModel.from_arrays([0.5, 0.5], [[0.0, 0.0]])
    assert relative_entropy(m, np.ones(2)) == 0.0
    assert relative_entropy(m, [2.0, 0.0]) == pytest.approx(math.log(2.0))


def test_group_aggregate():
    m = MarketModel.from_arrays([0.5, 0.5], [[1.0, -1.0], [0.0, 0.0], [2.0, 3.0]])
    np.testing.assert_array_equal(group_aggregate(m, [1]), [0.0, 0.0])
    np.testing.assert_array_equal(group_aggregate(m, [0, 1]), [1.0, -1.0])
    np.testing.assert_array_equal(group_aggregate(m, [0, 1, 2]), m.aggregate)
    with pytest.raises(IndexError):
        group_aggregate(m, [3])
    with pytest.raises(IndexError):
        group_aggregate(m, [])


def test_measures():
    m = MarketModel.from_arrays([0.5, 0.5], [[0.0, 0.0], [0.0, 0.0]])
    q = ProbMeasure([2.0, 0.0])
    assert q.is_valid(m) and not q.is_equivalent
    with pytest.raises(NormalizationError):
        ProbMeasure([0.9, 0.9]).validate(m)
    Q = PricingVector.reference(m)
    Q.validate(m)
    np.testing.assert_allclose(Q.expectations(m, [[1.0, 3.0], [2.0, 2.0]]), [2.0, 2.0])
    assert len(PricingVector.from_measures(Q.measures)) == 2


def test_csv_export():
    text = to_csv([[1.0, 2.5]], ["w1", "w2"], ["a"])
    assert text == ",w1,w2\na,1,2.5\n"
    assert to_csv([0.25, 0.75], ["w1", "w2"]).splitlines()[0] == "w1,w2"
    with pytest.raises(DimensionError):
        to_csv([1.0], ["w1", "w2"])


vectors = st.lists(st.floats(-10, 10), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(vectors, st.integers(0, 2**32 - 1))
def test_expectation_linear_and_entropy_nonnegative(xs, seed):
    rng = np.random.default_rng(seed)
    S = len(xs)
    m = MarketModel.from_arrays(rng.dirichlet(np.ones(S)), [xs])
    d = rng.lognormal(size=S)
    d /= m.probs @ d
    x = np.array(xs)
    y = rng.normal(size=S)
    assert expectation(m, d, 2 * x - y) == pytest.approx(2 * expectation(m, d, x) - expectation(m, d, y), abs=1e-9)
    assert expectation(m, d, np.ones(S)) == pytest.approx(1.0)
    h = relative_entropy(m, d)
    assert h >= 0.0
    if np.ptp(d) > 1e-6:
        assert h > 0.0

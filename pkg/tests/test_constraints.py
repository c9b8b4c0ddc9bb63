import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_cluster_spec, random_scenario_cluster_spec
from sorte.constraints import (
    ConstraintSpec,
    allocation_basis,
    assemble_pricing_vector,
    constraint_matrix,
    measure_structure,
    membership,
    require_cluster,
)
from sorte.errors import DimensionError, NormalizationError, SpecError, ValidationError
from sorte.market import MarketModel


def test_constant_matrix_is_member_of_every_family():
    rng = np.random.default_rng(1)
    Y = np.tile(rng.normal(size=(3, 1)), (1, 4))
    for spec in (
        ConstraintSpec.full(3),
        ConstraintSpec.none(3),
        ConstraintSpec.cluster([[0, 2], [1]], 3),
        ConstraintSpec.scenario_cluster([[0, 1], [2, 3]], [[[0, 1, 2]], [[0], [1], [2]]], 3, 4),
    ):
        assert membership(spec, Y).is_member


def test_membership_examples():
    Y = np.array([[-0.5, 0.5], [0.5, -0.5]])
    m = membership(ConstraintSpec.full(2), Y)
    assert m.is_member
    np.testing.assert_allclose(m.group_sums, [0.0])
    assert m.total == 0.0
    assert not membership(ConstraintSpec.none(2), Y).is_member
    with pytest.raises(DimensionError):
        membership(ConstraintSpec.none(2), np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        membership(ConstraintSpec.none(2), np.array([[0.0, np.inf], [0.0, 0.0]]))


def test_cell_counts():
    assert len(measure_structure(ConstraintSpec.full(4), 3).cells) == 1
    assert len(measure_structure(ConstraintSpec.cluster([[0, 1], [2, 3]], 4), 3).cells) == 2
    assert len(measure_structure(ConstraintSpec.none(4), 3).cells) == 4
    mixed = ConstraintSpec.scenario_cluster([[0, 1], [2]], [[[0, 1, 2, 3]], [[0], [1], [2], [3]]], 4, 3)
    assert len(measure_structure(mixed, 3).cells) == 1 + 4


def test_partition_errors():
    with pytest.raises(ValidationError):
        ConstraintSpec.cluster([[0, 1], [1, 2]], 3)
    with pytest.raises(ValidationError):
        ConstraintSpec.cluster([[0, 1]], 3)
    with pytest.raises(ValidationError):
        ConstraintSpec.cluster([[0, 5]], 2)
    with pytest.raises(ValidationError):
        ConstraintSpec.scenario_cluster([[0], [1]], [[[0, 1]]], 2, 2)
    spec = ConstraintSpec.scenario_cluster([[0], [1]], [[[0, 1]], [[0], [1]]], 2, 2)
    with pytest.raises(DimensionError):
        spec.event_partition(3)
    with pytest.raises(SpecError):
        require_cluster(spec)


def test_canonical_form():
    a = ConstraintSpec.cluster([[3, 1], [2, 0]], 4)
    b = ConstraintSpec.cluster([[0, 2], [1, 3]], 4)
    assert a == b and hash(a) == hash(b)
    s1 = ConstraintSpec.scenario_cluster([[2, 0], [1]], [[[1], [0]], [[0, 1]]], 2, 3)
    s2 = ConstraintSpec.scenario_cluster([[1], [0, 2]], [[[1, 0]], [[0], [1]]], 2, 3)
    assert s1 == s2
    # a single event collapses to the agent-cluster family
    one = ConstraintSpec.scenario_cluster([[0, 1, 2]], [[[0, 1]]], 2, 3)
    assert one.is_cluster and one.groups == ConstraintSpec.full(2).groups


def test_assemble_pricing_vector():
    model = MarketModel.from_arrays([0.25, 0.75], np.zeros((4, 2)))
    one = measure_structure(ConstraintSpec.full(4), 2)
    np.testing.assert_array_equal(assemble_pricing_vector(one, [np.ones(2)], model).densities, np.ones((4, 2)))

    two = measure_structure(ConstraintSpec.cluster([[0, 1], [2, 3]], 4), 2)
    d1, d2 = np.array([2.0, 2.0 / 3.0]), np.array([0.4, 1.2])
    D = assemble_pricing_vector(two, [d1, d2], model).densities
    np.testing.assert_array_equal(D, [d1, d1, d2, d2])

    with pytest.raises(NormalizationError):
        assemble_pricing_vector(one, [np.full(2, 0.9)], model)
    with pytest.raises(NormalizationError):
        assemble_pricing_vector(one, [np.array([-1.0, 5.0 / 3.0])], model)
    with pytest.raises(DimensionError):
        assemble_pricing_vector(two, [d1], model)


def test_describe_round_trips():
    rng = np.random.default_rng(3)
    for _ in range(20):
        spec = random_scenario_cluster_spec(rng, 3, 4)
        d = spec.describe()
        if spec.is_cluster:
            again = ConstraintSpec.cluster(d["groups"], 3)
        else:
            again = ConstraintSpec.scenario_cluster(d["events"], d["event_groups"], 3, 4)
        assert again.agent_partitions() == spec.agent_partitions()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 5), st.booleans())
def test_basis_spans_members(seed, N, S, scenario):
    rng = np.random.default_rng(seed)
    spec = random_scenario_cluster_spec(rng, N, S) if scenario else random_cluster_spec(rng, N)
    B = allocation_basis(spec, S)
    np.testing.assert_allclose(constraint_matrix(spec, S) @ B, 0.0, atol=1e-12)
    Y = (B @ rng.normal(size=B.shape[1])).reshape(N, S)
    assert membership(spec, Y).is_member
    # adding constants keeps membership, zero-sum directions clear at zero
    assert membership(spec, Y + rng.normal(size=(N, 1))).is_member
    Z = allocation_basis(spec, S, clearing=True)
    if Z.shape[1]:
        W = (Z @ rng.normal(size=Z.shape[1])).reshape(N, S)
        np.testing.assert_allclose(W.sum(axis=0), 0.0, atol=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import profile_of, random_instance
from sorte.constraints import ConstraintSpec
from sorte.dual import solve_sorte
from sorte.errors import DomainError, SpecError, ValidationError
from sorte.exponential import (
    buhlmann_equilibrium,
    exp_aggregates,
    sorte_exponential,
    systemic_value_exponential,
    translation_shift,
    weight_translation,
)
from sorte.market import MarketModel


def zero_model(N, S=2):
    return MarketModel.from_arrays(np.full(S, 1.0 / S), np.zeros((N, S)))


def test_toy_closed_form():
    model = zero_model(2)
    sol = sorte_exponential(model, [1.0, 2.0], ConstraintSpec.full(2))
    y = math.log(2.0) / 3
    np.testing.assert_allclose(sol.Y, [[-y, -y], [y, y]], atol=1e-15)
    np.testing.assert_allclose(sol.densities, 1.0, atol=1e-15)
    np.testing.assert_allclose(sol.a, [-y, y], atol=1e-15)
    assert sol.lam == pytest.approx(2 ** (1 / 3), rel=1e-15)
    value = systemic_value_exponential(model, [1.0, 2.0], ConstraintSpec.full(2))
    assert value == pytest.approx(0.110118425157692, abs=1e-14)
    assert sol.primal_value == pytest.approx(value, abs=1e-14)


def test_zero_endowment_value_formula_and_sign():
    rng = np.random.default_rng(0)
    for _ in range(20):
        N = int(rng.integers(1, 6))
        alpha = rng.uniform(0.2, 5.0, size=N)
        beta = float(np.sum(1 / alpha))
        xi = float(np.sum(np.log(1 / alpha) / alpha))
        v = systemic_value_exponential(zero_model(N), alpha, ConstraintSpec.full(N))
        assert v == pytest.approx(N - beta * math.exp(-xi / beta), abs=1e-12)
        assert v >= -1e-14


def test_equal_alpha_full_sharing():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(3, 5))
    model = MarketModel.from_arrays(rng.dirichlet(np.ones(5)), X)
    sol = sorte_exponential(model, [1.5, 1.5, 1.5], ConstraintSpec.full(3))
    np.testing.assert_allclose(sol.Y, -X + X.sum(axis=0) / 3, atol=1e-13)
    log_d = np.log(sol.densities[0]) + 1.5 * X.sum(axis=0) / 3
    assert np.ptp(log_d) <= 1e-13


def test_constant_aggregate_gives_reference_measure():
    model = MarketModel.from_arrays([0.3, 0.7], [[1.0, -1.0], [2.0, 4.0]])
    sol = sorte_exponential(model, [1.0, 0.5], ConstraintSpec.full(2))
    np.testing.assert_allclose(sol.densities, 1.0, atol=1e-14)


def test_full_sharing_density_depends_only_on_aggregate():
    model = MarketModel.from_arrays([0.25] * 4, [[1.0, 0.0, 2.0, 1.5], [0.0, 1.0, -1.0, 0.0]])
    D = sorte_exponential(model, [1.0, 3.0], ConstraintSpec.full(2)).densities
    # aggregate (1, 1, 1, 1.5)
    assert np.ptp(D[0, :3]) <= 1e-15
    assert abs(D[0, 3] - D[0, 0]) > 1e-3


def test_input_errors():
    model = zero_model(2)
    with pytest.raises(ValidationError):
        sorte_exponential(model, [1.0], ConstraintSpec.full(2))
    with pytest.raises(DomainError):
        sorte_exponential(model, [1.0, -2.0], ConstraintSpec.full(2))
    mixed = ConstraintSpec.scenario_cluster([[0], [1]], [[[0, 1]], [[0], [1]]], 2, 2)
    with pytest.raises(SpecError):
        exp_aggregates(model, [1.0, 2.0], mixed)
    with pytest.raises(ValidationError):
        buhlmann_equilibrium(model, [1.0, 2.0], [0.0])


def test_buhlmann_examples():
    model = zero_model(2)
    b = buhlmann_equilibrium(model, [1.0, 2.0], [0.0, 0.0])
    np.testing.assert_allclose(b.Y, 0.0, atol=1e-14)
    np.testing.assert_allclose(b.density, 1.0, atol=1e-15)
    np.testing.assert_allclose(b.multipliers, [1.0, 2.0], rtol=1e-13)
    assert b.value == pytest.approx(0.0, abs=1e-14)
    assert b.value <= systemic_value_exponential(model, [1, 2], ConstraintSpec.full(2))

    rng = np.random.default_rng(2)
    for _ in range(10):
        model, alphas, _, A = random_instance(rng, kind="full")
        sol = sorte_exponential(model, alphas, ConstraintSpec.full(model.n_agents), A)
        b = buhlmann_equilibrium(model, alphas, sol.a)
        np.testing.assert_allclose(b.Y, sol.Y, atol=1e-9 * max(1.0, np.abs(sol.Y).max()))
        assert b.value == pytest.approx(sol.primal_value, abs=1e-9)
        other = buhlmann_equilibrium(model, alphas, sol.a + rng.normal(size=model.n_agents) * 0.3)
        shifted_A = float(np.sum(other.budgets))
        assert other.value <= systemic_value_exponential(model, alphas, ConstraintSpec.full(model.n_agents), shifted_A) + 1e-9


def test_translation_shift_examples():
    np.testing.assert_allclose(translation_shift([1.0, 2.0], [1.0, math.e**2]), [-2 / 3, 2 / 3], atol=1e-15)
    np.testing.assert_array_equal(translation_shift([0.5, 3.0, 1.0], [2.5, 2.5, 2.5]), 0.0)
    with pytest.raises(DomainError):
        translation_shift([1.0, 2.0], [1.0, 0.0])
    with pytest.raises(ValidationError):
        translation_shift([1.0, 2.0], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_shifts_sum_to_zero(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, 8))
    g = translation_shift(rng.uniform(0.2, 5.0, N), rng.lognormal(sigma=2.0, size=N))
    assert abs(g.sum()) <= 1e-14 * max(1.0, np.abs(g).max())


def test_weight_translation_matches_weighted_solve():
    rng = np.random.default_rng(3)
    for _ in range(10):
        model, alphas, spec, A = random_instance(rng)
        gammas = rng.lognormal(size=model.n_agents)
        base = sorte_exponential(model, alphas, spec, A)
        moved = weight_translation(base, alphas, gammas)
        direct = solve_sorte(model, profile_of(alphas, gammas), spec, A)
        scale = max(1.0, float(np.abs(direct.Y).max()))
        np.testing.assert_allclose(moved.Y, direct.Y, atol=1e-8 * scale)
        np.testing.assert_allclose(moved.densities, direct.densities, rtol=1e-8)
        np.testing.assert_allclose(moved.a, direct.a, atol=1e-8 * scale)
        assert moved.primal_value == pytest.approx(direct.primal_value, rel=1e-8, abs=1e-8)
        assert moved.lam == pytest.approx(direct.lam, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_closed_form_agrees_with_dual(seed):
    rng = np.random.default_rng(seed)
    model, alphas, spec, A = random_instance(rng)
    cf = sorte_exponential(model, alphas, spec, A)
    du = solve_sorte(model, profile_of(alphas), spec, A)
    scale = max(1.0, float(np.abs(cf.Y).max()))
    np.testing.assert_allclose(du.Y, cf.Y, atol=1e-8 * scale)
    np.testing.assert_allclose(du.densities, cf.densities, rtol=1e-8)
    assert du.primal_value == pytest.approx(cf.primal_value, rel=1e-8, abs=1e-8)

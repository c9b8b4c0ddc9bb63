"""Random instance generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from sorte.constraints import ConstraintSpec, measure_structure
from sorte.market import MarketModel, PricingVector
from sorte.utility import UtilityProfile


def random_partition(rng: np.random.Generator, size: int) -> list[list[int]]:
    labels = rng.integers(0, size, size=size)
    return [list(np.flatnonzero(labels == k)) for k in np.unique(labels)]


def random_cluster_spec(rng: np.random.Generator, n_agents: int, kind: str | None = None) -> ConstraintSpec:
    kind = kind or rng.choice(["full", "none", "cluster"])
    if kind == "full":
        return ConstraintSpec.full(n_agents)
    if kind == "none":
        return ConstraintSpec.none(n_agents)
    return ConstraintSpec.cluster(random_partition(rng, n_agents), n_agents)


def random_scenario_cluster_spec(rng: np.random.Generator, n_agents: int, n_scenarios: int) -> ConstraintSpec:
    events = random_partition(rng, n_scenarios)
    groups = [random_partition(rng, n_agents) for _ in events]
    return ConstraintSpec.scenario_cluster(events, groups, n_agents, n_scenarios)


def random_instance(
    rng: np.random.Generator,
    max_agents: int = 5,
    max_scenarios: int = 8,
    max_size: int | None = None,
    kind: str | None = None,
    A: float | None = None,
):
    """``(model, alphas, spec, A)`` with alpha in [0.2, 5], X in [-3, 3], A in [-2, 2]."""
    while True:
        N = int(rng.integers(1, max_agents + 1))
        S = int(rng.integers(1, max_scenarios + 1))
        if max_size is None or N * S <= max_size:
            break
    probs = rng.dirichlet(np.ones(S))
    X = rng.uniform(-3.0, 3.0, size=(N, S))
    alphas = rng.uniform(0.2, 5.0, size=N)
    model = MarketModel.from_arrays(probs, X)
    if kind == "scenario_cluster":
        spec = random_scenario_cluster_spec(rng, N, S)
    else:
        spec = random_cluster_spec(rng, N, kind)
    if A is None:
        A = float(rng.uniform(-2.0, 2.0))
    return model, alphas, spec, A


def random_admissible_pricing(rng: np.random.Generator, model: MarketModel, spec: ConstraintSpec) -> PricingVector:
    """Positive densities, common on every (event, group) cell, with event masses shared by all agents."""
    structure = measure_structure(spec, model.n_scenarios)
    p = model.probs
    weights = rng.dirichlet(np.ones(len(structure.events)))
    D = np.empty((model.n_agents, model.n_scenarios))
    for cell in structure.cells:
        ev = list(cell.event)
        raw = rng.lognormal(sigma=1.0, size=len(ev))
        raw *= weights[cell.event_index] / float(p[ev] @ raw)
        for n in cell.group:
            D[n, ev] = raw
    return PricingVector(D)


def profile_of(alphas, gammas=None) -> UtilityProfile:
    return UtilityProfile.exponential(alphas, gammas)


def _s(y):
    # positive root of 2 s^2 + s = y, written without cancellation
    y = np.asarray(y, dtype=float)
    return 2.0 * y / (1.0 + np.sqrt(1.0 + 8.0 * y))


def two_exponential_utility(gamma: float = 1.0):
    """``u(x) = -exp(-x) - exp(-2x)``: not exponential, conjugate in closed form."""
    from sorte.utility import CustomUtility

    return CustomUtility(
        u_fn=lambda x: -np.exp(-x) - np.exp(-2.0 * x),
        du_fn=lambda x: np.exp(-x) + 2.0 * np.exp(-2.0 * x),
        v_fn=lambda y: -_s(y) - _s(y) ** 2 + y * np.log(_s(y)),
        dv_fn=lambda y: np.log(_s(y)),
        gamma=gamma,
        d2u_fn=lambda x: -np.exp(-x) - 4.0 * np.exp(-2.0 * x),
        sup_value=0.0,
        name="two-exponential",
    )


def mixed_profile(rng: np.random.Generator, n_agents: int) -> UtilityProfile:
    """Random mix of exponential and two-exponential agents."""
    from sorte.utility import ExponentialUtility

    utils = []
    for _ in range(n_agents):
        if rng.random() < 0.5:
            utils.append(two_exponential_utility(float(rng.uniform(0.5, 2.0))))
        else:
            utils.append(ExponentialUtility(float(rng.uniform(0.2, 5.0))))
    return UtilityProfile(tuple(utils))

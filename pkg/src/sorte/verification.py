"""Independent checks of a claimed equilibrium and related benchmark problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import null_space
from scipy.special import logsumexp

from .constraints import ConstraintSpec, allocation_basis, membership
from .dual import EquilibriumSolution
from .market import MarketModel, PricingVector
from .roots import monotone_root
from .utility import UtilityProfile


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass(frozen=True)
class SorteReport:
    """Outcome of :func:`verify_sorte`.

    ``checks`` holds the three defining conditions plus supporting
    residuals; ``multipliers`` are the per-agent ``lam_n`` and
    ``utility_gain`` the change in expected utility against no trade
    (informational only).
    """

    checks: tuple[Check, ...]
    multipliers: NDArray[np.float64]
    utility_gain: NDArray[np.float64]
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "residual": c.residual, "detail": c.detail}
                for c in self.checks
            ],
            "multipliers": self.multipliers.tolist(),
            "utility_gain": self.utility_gain.tolist(),
        }


def verify_sorte(
    model: MarketModel,
    profile: UtilityProfile,
    spec: ConstraintSpec,
    A: float,
    sol: EquilibriumSolution,
    tol: float = 1e-7,
) -> SorteReport:
    """Check the three defining conditions of an equilibrium.

    1. ``agent_optimality``: ``u_n'(X^n + Y^n) / (dQ^n/dP)`` is constant in
       the scenario (a multiplier ``lam_n`` exists) and ``E_{Q^n}[Y^n] = a_n``.
    2. ``budget_optimality``: all ``lam_n`` coincide, i.e. the marginal
       utility of budget is equalised across agents.
    3. ``feasibility``: ``Y`` belongs to the family and clears at ``A``.

    Multiplier comparisons are made on logarithms, so ``tol`` is relative.
    """
    Y = np.asarray(sol.Y, dtype=float)
    D = sol.pricing.densities
    W = model.endowments + Y
    checks: list[Check] = []

    masses = D @ model.probs
    mass_res = float(np.max(np.abs(masses - 1.0)))
    checks.append(Check("pricing_measures", bool(mass_res <= tol and np.all(D > 0.0)), mass_res,
                        "every density is positive and integrates to one"))

    log_lams = np.full(model.n_agents, np.nan)
    spread = 0.0
    if np.all(D > 0.0):
        for n, u in enumerate(profile):
            ratio = np.asarray(u.log_du(W[n]), dtype=float) - np.log(D[n])
            spread = max(spread, float(ratio.max() - ratio.min()))
            log_lams[n] = float(np.median(ratio))
    else:
        spread = math.inf
    prices = sol.pricing.expectations(model, Y)
    budget_res = float(np.max(np.abs(prices - sol.a)))
    checks.append(Check(
        "agent_optimality",
        bool(spread <= tol and budget_res <= tol),
        max(spread, budget_res),
        f"marginal ratio spread {spread:.3e}, budget residual {budget_res:.3e}",
    ))

    lam_spread = float(np.nanmax(log_lams) - np.nanmin(log_lams)) if np.all(np.isfinite(log_lams)) else math.inf
    checks.append(Check("budget_optimality", bool(lam_spread <= tol), lam_spread,
                        "spread of ln(lam_n) across agents"))

    mem = membership(spec, Y, tol)
    clearing = float(np.max(np.abs(Y.sum(axis=0) - A)))
    checks.append(Check(
        "feasibility",
        bool(mem.is_member and clearing <= tol),
        max(mem.residual, clearing),
        f"membership residual {mem.residual:.3e}, clearing residual {clearing:.3e}",
    ))

    a_sum = float(abs(sol.a.sum() - A))
    checks.append(Check("budget_sum", bool(a_sum <= tol), a_sum, "sum of budgets equals A"))

    no_trade = profile.agent_utilities(model.endowments, model.probs)
    gain = profile.agent_utilities(W, model.probs) - no_trade
    return SorteReport(tuple(checks), np.exp(log_lams), gain, {"A": A, "tol": tol})


def _direction_basis(model: MarketModel, spec: ConstraintSpec, selector: str, pricing: PricingVector) -> NDArray:
    N, S = model.endowments.shape
    if selector in ("B_A", "b_a", "clearing"):
        return allocation_basis(spec, S, clearing=True)
    if selector in ("Q_budget", "q_budget", "budget"):
        row = (pricing.densities * model.probs).ravel()[None, :]
        return null_space(row)
    raise ValueError(f"unknown feasible-set selector {selector!r}")


@dataclass(frozen=True)
class ParetoSearch:
    is_pareto: bool
    trials: int
    improvement: NDArray[np.float64] | None = None
    gains: NDArray[np.float64] | None = None


def search_pareto_improvement(
    model: MarketModel,
    profile: UtilityProfile,
    spec: ConstraintSpec,
    Y: ArrayLike,
    pricing: PricingVector,
    selector: str = "B_A",
    trials: int = 500,
    seed: int = 0,
    tol: float = 1e-10,
) -> ParetoSearch:
    """Randomised local search for a Pareto improvement of ``Y``.

    Each trial draws a feasible direction, adds the cash side-payments
    (zero-sum constants, feasible for both selectors) that spread its
    first-order gain evenly, and halves the step until either every agent is
    weakly better off with one agent better by more than ``tol`` or the step
    becomes negligible.
    """
    Y = np.asarray(Y, dtype=float)
    N, S = Y.shape
    p = model.probs
    basis = _direction_basis(model, spec, selector, pricing)
    rng = np.random.default_rng(seed)
    W = model.endowments + Y
    U0 = profile.agent_utilities(W, p)
    grads = np.vstack([p * np.asarray(u.du(W[n])) for n, u in enumerate(profile)])
    cash = grads.sum(axis=1)
    scale = max(1.0, float(np.max(np.abs(Y))))
    if basis.shape[1] == 0:
        return ParetoSearch(True, trials)
    for trial in range(trials):
        d = (basis @ rng.normal(size=basis.shape[1])).reshape(N, S)
        d /= np.linalg.norm(d)
        g = np.sum(grads * d, axis=1)
        G = float(np.sum(g / cash))
        if abs(G) <= 1e-13 * float(np.sum(np.abs(g) / cash) + 1.0):
            continue
        if G < 0.0:
            d, g, G = -d, -g, -G
        side = (G * cash / N - g) / cash
        direction = d + side[:, None]
        t = scale
        for _ in range(60):
            cand = Y + t * direction
            gains = profile.agent_utilities(model.endowments + cand, p) - U0
            if np.all(gains >= 0.0) and gains.max() > tol:
                return ParetoSearch(False, trial + 1, cand, gains)
            t *= 0.5
    return ParetoSearch(True, trials)


def check_pareto(
    model: MarketModel,
    profile: UtilityProfile,
    spec: ConstraintSpec,
    sol: EquilibriumSolution,
    selector: str = "B_A",
    trials: int = 500,
    seed: int = 0,
    tol: float = 1e-10,
) -> bool:
    """``True`` when no Pareto improvement of ``sol.Y`` is found.

    ``selector`` picks the feasible set: ``"B_A"`` (admissible allocations
    with total at most ``A``) or ``"Q_budget"`` (any allocation whose total
    price under ``sol.pricing`` is at most ``A``).
    """
    return search_pareto_improvement(
        model, profile, spec, sol.Y, sol.pricing, selector, trials, seed, tol
    ).is_pareto


def check_fair_pricing(
    model: MarketModel,
    spec: ConstraintSpec,
    Q: PricingVector,
    samples: int = 200,
    seed: int = 0,
    tol: float = 1e-9,
) -> bool:
    """Sampled test of ``sum_n E_{Q^n}[Y^n] <= sum_n Y^n`` over ``Y`` in the family."""
    N, S = model.endowments.shape
    basis = allocation_basis(spec, S)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        Y = (basis @ rng.normal(size=basis.shape[1])).reshape(N, S)
        for sign in (1.0, -1.0):
            Ys = sign * Y
            price = float(Q.expectations(model, Ys).sum())
            total = float(Ys.sum(axis=0).mean())
            if price > total + tol * max(1.0, float(np.max(np.abs(Ys)))):
                return False
    return True


@dataclass(frozen=True)
class DeterministicAllocation:
    a: NDArray[np.float64]
    value: float
    multiplier: float


def deterministic_allocation(model: MarketModel, profile: UtilityProfile, A: float = 0.0) -> DeterministicAllocation:
    """Best split of ``A`` into cash amounts ``a_n`` (no state-contingent exchange).

    Marginal expected utilities ``E[u_n'(X^n + a_n)]`` are equalised at a
    common level ``kappa`` found by a monotone root search on ``ln kappa``.
    """
    profile.check_size(model.n_agents)
    log_p = np.log(model.probs)
    X = model.endowments
    guess = np.full(model.n_agents, A / model.n_agents)

    def log_marginal(n: int, a: float) -> float:
        return float(logsumexp(log_p + np.asarray(profile[n].log_du(X[n] + a))))

    def amount(n: int, log_k: float) -> float:
        a, _ = monotone_root(lambda x: log_marginal(n, x) - log_k, guess[n], increasing=False, xtol=1e-14)
        guess[n] = a
        return a

    def excess(log_k: float) -> float:
        return sum(amount(n, log_k) for n in range(model.n_agents)) - A

    start = float(np.median([log_marginal(n, A / model.n_agents) for n in range(model.n_agents)]))
    log_k, _ = monotone_root(excess, start, increasing=False, xtol=1e-15)
    a = np.array([amount(n, log_k) for n in range(model.n_agents)])
    value = profile.total_utility(X + a[:, None], model.probs)
    return DeterministicAllocation(a, value, math.exp(log_k))

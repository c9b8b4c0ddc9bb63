"""Closed-form equilibria for exponential utilities ``u_n(x) = 1 - exp(-alpha_n x)``.

These formulas cover the agent-cluster families (full sharing, clusters, no
sharing) and serve as an independent check of the numerical dual solver.
All exponential moments go through a log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .constraints import ConstraintSpec, require_cluster
from .dual import EquilibriumSolution, optimize_agent
from .errors import DomainError, ValidationError
from .market import MarketModel, PricingVector
from .utility import ExponentialUtility


@dataclass(frozen=True)
class ExpAggregates:
    """Group-level constants of the exponential closed form.

    ``log_norm[m]`` is ``ln E[exp(-Xbar_m / beta_m)]``; ``mu`` and
    ``lambda_hat`` are the intermediate scalars of the derivation, kept for
    diagnostics.
    """

    groups: tuple[tuple[int, ...], ...]
    beta_m: NDArray[np.float64]
    beta: float
    xi: float
    R: NDArray[np.float64]
    log_norm: NDArray[np.float64]
    d_m: NDArray[np.float64]
    mu: float
    lambda_hat: float


def _alphas(model: MarketModel, alphas: ArrayLike) -> NDArray[np.float64]:
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if a.shape != (model.n_agents,):
        raise ValidationError(f"expected {model.n_agents} risk aversions, got {a.size}")
    if np.any(~(a > 0.0)):
        raise DomainError("risk aversions must be positive")
    return a


def exp_aggregates(model: MarketModel, alphas: ArrayLike, spec: ConstraintSpec, A: float = 0.0) -> ExpAggregates:
    require_cluster(spec)
    alpha = _alphas(model, alphas)
    inv = 1.0 / alpha
    beta = float(inv.sum())
    xi = float(np.sum(inv * np.log(inv)))
    log_p = np.log(model.probs)
    beta_m, log_norm = [], []
    for g in spec.groups:
        b = float(inv[list(g)].sum())
        xbar = model.endowments[list(g)].sum(axis=0)
        beta_m.append(b)
        log_norm.append(float(logsumexp(log_p - xbar / b)))
    beta_m = np.array(beta_m)
    log_norm = np.array(log_norm)
    weighted = float(np.sum(beta_m * log_norm))
    d_m = weighted / beta - log_norm
    mu = A - weighted
    return ExpAggregates(
        spec.groups, beta_m, beta, xi, inv / beta, log_norm, d_m, mu, math.exp(-(mu + xi) / beta)
    )


def sorte_exponential(
    model: MarketModel, alphas: ArrayLike, spec: ConstraintSpec, A: float = 0.0
) -> EquilibriumSolution:
    """Equilibrium ``(Y, Q, a)`` from the explicit exponential formulas."""
    alpha = _alphas(model, alphas)
    agg = exp_aggregates(model, alpha, spec, A)
    mean_log_alpha = float(agg.R @ np.log(alpha))
    log_D = np.empty_like(model.endowments)
    Y = np.empty_like(model.endowments)
    for m, g in enumerate(agg.groups):
        xbar = model.endowments[list(g)].sum(axis=0)
        log_D[list(g)] = -xbar / agg.beta_m[m] - agg.log_norm[m]
        for k in g:
            Y[k] = (
                -model.endowments[k]
                + (xbar / agg.beta_m[m] - agg.d_m[m]) / alpha[k]
                + (A / agg.beta + math.log(alpha[k]) - mean_log_alpha) / alpha[k]
            )
    pricing = PricingVector(np.exp(log_D))
    a = pricing.expectations(model, Y)
    W = model.endowments + Y
    primal = float(sum(model.probs @ (-np.expm1(-alpha[n] * W[n])) for n in range(model.n_agents)))
    dual = model.n_agents - agg.beta * agg.lambda_hat
    diagnostics = {"mu": agg.mu, "d_m": agg.d_m.tolist(), "log_norm": agg.log_norm.tolist()}
    return EquilibriumSolution(Y, pricing, a, agg.lambda_hat, primal, dual, float(A), diagnostics)


def systemic_value_exponential(
    model: MarketModel, alphas: ArrayLike, spec: ConstraintSpec, A: float = 0.0
) -> float:
    """Maximal systemic expected utility ``N - beta * lambda_hat``."""
    agg = exp_aggregates(model, alphas, spec, A)
    return model.n_agents - agg.beta * math.exp(
        -(agg.mu + agg.xi) / agg.beta
    )


@dataclass(frozen=True)
class BuhlmannEquilibrium:
    Y: NDArray[np.float64]
    density: NDArray[np.float64]
    budgets: NDArray[np.float64]
    multipliers: NDArray[np.float64]
    agent_values: NDArray[np.float64]

    @property
    def value(self) -> float:
        return float(self.agent_values.sum())

    @property
    def A(self) -> float:
        return float(self.budgets.sum())

    @property
    def pricing(self) -> PricingVector:
        return PricingVector(np.tile(self.density, (self.budgets.size, 1)))

    def to_solution(self, model: MarketModel) -> EquilibriumSolution:
        """Package as a claimed solution (``lam`` is the mean multiplier)."""
        return EquilibriumSolution(
            self.Y, self.pricing, self.budgets, float(np.mean(self.multipliers)),
            self.value, math.nan, self.A, {"multipliers": self.multipliers.tolist()},
        )


def buhlmann_equilibrium(model: MarketModel, alphas: ArrayLike, a: ArrayLike) -> BuhlmannEquilibrium:
    """Risk exchange equilibrium with one pricing measure and budgets ``a``.

    The pricing density is ``exp(-Xbar/beta) / E[exp(-Xbar/beta)]``; each
    agent then solves its own fixed-measure problem with budget ``a_n``.
    """
    alpha = _alphas(model, alphas)
    budgets = np.atleast_1d(np.asarray(a, dtype=float))
    if budgets.shape != (model.n_agents,):
        raise ValidationError(f"expected {model.n_agents} budgets, got {budgets.size}")
    beta = float(np.sum(1.0 / alpha))
    expo = -model.aggregate / beta
    density = np.exp(expo - logsumexp(np.log(model.probs) + expo))
    Y = np.empty_like(model.endowments)
    lams = np.empty(model.n_agents)
    vals = np.empty(model.n_agents)
    for n in range(model.n_agents):
        Y[n], lams[n], vals[n] = optimize_agent(
            model, ExponentialUtility(float(alpha[n])), model.endowments[n], density, float(budgets[n])
        )
    return BuhlmannEquilibrium(Y, density, budgets, lams, vals)


def translation_shift(alphas: ArrayLike, gammas: ArrayLike) -> NDArray[np.float64]:
    """``g_k = (ln gamma_k - E_R[ln gamma]) / alpha_k``; the entries sum to zero."""
    alpha = np.atleast_1d(np.asarray(alphas, dtype=float))
    gamma = np.atleast_1d(np.asarray(gammas, dtype=float))
    if gamma.shape != alpha.shape:
        raise ValidationError("one weight per agent is required")
    if np.any(~(gamma > 0.0)):
        raise DomainError("weights must be strictly positive")
    inv = 1.0 / alpha
    R = inv / inv.sum()
    log_g = np.log(gamma)
    return inv * (log_g - float(R @ log_g))


def weight_translation(base: EquilibriumSolution, alphas: ArrayLike, gammas: ArrayLike) -> EquilibriumSolution:
    """Equilibrium for the weighted utilities ``gamma_n u_n`` from the unweighted one.

    Allocations and budgets shift by :func:`translation_shift`, the pricing
    vector is unchanged.  The multiplier and the (weighted) objective values
    follow from ``gamma_k exp(-alpha_k g_k) = exp(E_R[ln gamma])``.
    """
    g = translation_shift(alphas, gammas)
    gamma = np.asarray(gammas, dtype=float)
    alpha = np.asarray(alphas, dtype=float)
    inv = 1.0 / alpha
    scale = math.exp(float((inv / inv.sum()) @ np.log(gamma)))
    N = g.size
    return EquilibriumSolution(
        base.Y + g[:, None],
        base.pricing,
        base.a + g,
        base.lam * scale,
        float(gamma.sum()) - scale * (N - base.primal_value),
        float(gamma.sum()) - scale * (N - base.dual_value),
        base.A,
        {"shift": g.tolist()},
    )

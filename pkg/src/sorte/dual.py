"""Dual computation of the systemic optimal risk transfer equilibrium.

The dual problem minimises, over a shadow price ``lam > 0`` and a pricing
vector ``Q`` compatible with the allocation family,

    K(lam, Q) = lam * (sum_j E_{Q^j}[X^j] + A) + sum_j E[v_j(lam dQ^j/dP)].

For a fixed ``lam`` the minimisation over ``Q`` splits into cells (an event
together with a group of agents sharing one density there).  Inside a cell
the first-order condition reads

    sum_{n in group} v_n'(lam q(w)) = -(Xbar(w) + s)

for a scalar ``s`` that turns out to be the deterministic total the group
keeps on that event; ``s`` is tuned so that the cell carries its share of
probability mass.  When the scenario space is split into several events,
every agent must put the same mass on each event, and these masses are
chosen so that the totals ``sum_m s_m`` agree across events.  The outer
problem in ``lam`` is one-dimensional and convex; its derivative is
``A - sigma(lam)`` where ``sigma`` is that common total.

Cell levels depend on ``lam`` and on the event mass ``w`` only through
``ln(lam * w)``.  Setting ``sigma = A`` therefore pins down ``lam * w_i``
event by event, and ``sum_i w_i = 1`` yields the minimising ``lam`` without
an outer search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .constraints import Cell, ConstraintSpec, MeasureStructure, measure_structure
from .errors import BoundaryError, DomainError, ValidationError
from .market import MarketModel, PricingVector
from .roots import monotone_root
from .utility import AgentUtility, ExponentialUtility, UtilityProfile, group_log_marginal

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class DualPoint:
    lam: float
    pricing: PricingVector

    def __post_init__(self) -> None:
        if not self.lam > 0.0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")


@dataclass(frozen=True)
class CellMeasure:
    """Optimal density of one cell for a fixed ``lam``.

    ``level`` is the deterministic group total of the allocation on the
    event, ``group_budget`` is ``E[q (Xbar + level); event]``.
    """

    cell: Cell
    density: NDArray[np.float64]
    log_density: NDArray[np.float64]
    level: float
    mass: float
    group_budget: float
    evaluations: int


@dataclass(frozen=True)
class EquilibriumSolution:
    """The triple ``(Y, Q, a)`` with the multiplier and both objective values."""

    Y: NDArray[np.float64]
    pricing: PricingVector
    a: NDArray[np.float64]
    lam: float
    primal_value: float
    dual_value: float
    A: float
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def densities(self) -> NDArray[np.float64]:
        return self.pricing.densities

    @property
    def gap(self) -> float:
        return self.dual_value - self.primal_value

    def to_dict(self, model: MarketModel | None = None) -> dict:
        out = {
            "A": self.A,
            "lambda": self.lam,
            "Y": self.Y.tolist(),
            "densities": self.densities.tolist(),
            "a": self.a.tolist(),
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
        }
        if model is not None:
            out["agents"] = list(model.agent_ids)
            out["scenarios"] = list(model.scenario_ids)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EquilibriumSolution":
        return cls(
            np.asarray(data["Y"], dtype=float),
            PricingVector(np.asarray(data["densities"], dtype=float)),
            np.asarray(data["a"], dtype=float),
            float(data["lambda"]),
            float(data["primal_value"]),
            float(data["dual_value"]),
            float(data["A"]),
        )


@dataclass
class _InnerSolution:
    cells: list[CellMeasure]
    sigma: float
    event_masses: NDArray[np.float64]


class _DualEngine:
    """Cell, event and lambda level solves for a fixed (model, profile, structure).

    Everything is expressed through ``tau = ln(lam * mass)``: the level of a
    cell depends on ``lam`` and on the cell's event mass only through it.
    """

    def __init__(self, model: MarketModel, profile: UtilityProfile, structure: MeasureStructure, tol: float):
        profile.check_size(model.n_agents)
        self.model = model
        self.profile = profile
        self.structure = structure
        self.tol = tol
        self.nfev = 0
        self._xbar, self._log_p, self._utils, self._exp = [], [], [], []
        log_p = np.log(model.probs)
        for cell in structure.cells:
            ev, grp = list(cell.event), list(cell.group)
            xbar = model.endowments[grp][:, ev].sum(axis=0)
            utils = [profile[n] for n in grp]
            self._xbar.append(xbar)
            self._log_p.append(log_p[ev])
            self._utils.append(utils)
            if all(isinstance(u, ExponentialUtility) for u in utils):
                c = sum(u.log_inverse_marginal_coeffs()[0] for u in utils)
                b = sum(u.log_inverse_marginal_coeffs()[1] for u in utils)
                # ln z = (c - xbar - s) / b, so the level is b * (norm - tau)
                self._exp.append((b, float(logsumexp(log_p[ev] + (c - xbar) / b))))
            else:
                self._exp.append(None)
        self._event_cells = [
            [k for k, c in enumerate(structure.cells) if c.event_index == i] for i in range(len(structure.events))
        ]
        self._level_guess = [0.0] * len(structure.cells)
        self._tau_guess = [0.0] * len(structure.events)
        self._sigma_guess = 0.0

    # -- cell level -------------------------------------------------------
    def _log_z(self, k: int, level: float) -> NDArray[np.float64]:
        return group_log_marginal(self._utils[k], self._xbar[k] + level)

    def level(self, k: int, tau: float) -> float:
        """Group total ``s`` with ``E[z(Xbar + s); event] = exp(tau)``."""
        if self._exp[k] is not None:
            b, norm = self._exp[k]
            return b * (norm - tau)

        def excess(level: float) -> float:
            return float(logsumexp(self._log_p[k] + self._log_z(k, level))) - tau

        step = float(len(self.structure.cells[k].group))
        level, nfev = monotone_root(excess, self._level_guess[k], increasing=False, step=step, xtol=self.tol * 1e-2)
        self._level_guess[k] = level
        self.nfev += nfev
        return level

    def cell(self, k: int, lam: float, mass: float = 1.0) -> CellMeasure:
        tau = math.log(lam) + math.log(mass)
        level = self.level(k, tau)
        log_q = self._log_z(k, level) - math.log(lam)
        q = np.exp(log_q)
        cell = self.structure.cells[k]
        p = self.model.probs[list(cell.event)]
        return CellMeasure(cell, q, log_q, level, float(p @ q), float(p @ (q * (self._xbar[k] + level))), 0)

    # -- event level -------------------------------------------------------
    def event_tau(self, i: int, sigma: float) -> float:
        """``tau`` of event ``i`` at which its group totals add up to ``sigma``."""
        ks = self._event_cells[i]
        if all(self._exp[k] is not None for k in ks):
            b = sum(self._exp[k][0] for k in ks)
            return (sum(self._exp[k][0] * self._exp[k][1] for k in ks) - sigma) / b

        def excess(tau: float) -> float:
            return sum(self.level(k, tau) for k in ks) - sigma

        tau, nfev = monotone_root(excess, self._tau_guess[i], increasing=False, step=1.0, xtol=self.tol * 1e-2)
        self._tau_guess[i] = tau
        self.nfev += nfev
        return tau

    def at_sigma(self, sigma: float) -> tuple[float, _InnerSolution]:
        """Multiplier and inner solution whose common group total is ``sigma``.

        Each event's ``tau_i`` is fixed by ``sigma`` alone; the masses must sum
        to one, hence ``lam = sum_i exp(tau_i)``.
        """
        taus = np.array([self.event_tau(i, sigma) for i in range(len(self.structure.events))])
        log_lam = float(logsumexp(taus))
        lam = math.exp(log_lam) if log_lam < 709.0 else math.inf
        if not 0.0 < lam < math.inf:
            raise BoundaryError(
                f"dual multiplier leaves the floating-point range (ln lam = {log_lam:.4g}); "
                "the budget saturates or exhausts the utilities"
            )
        ws = np.exp(taus - log_lam)
        cells = [self.cell(k, lam, ws[c.event_index]) for k, c in enumerate(self.structure.cells)]
        return lam, _InnerSolution(cells, sigma, ws)

    # -- fixed lambda ------------------------------------------------------
    def inner(self, lam: float) -> _InnerSolution:
        """Inner minimiser over pricing vectors for a fixed ``lam``."""
        if len(self.structure.events) == 1:
            cms = [self.cell(k, lam, 1.0) for k in range(len(self.structure.cells))]
            return _InnerSolution(cms, sum(c.level for c in cms), np.ones(1))
        log_lam = math.log(lam)

        def excess(sigma: float) -> float:
            taus = [self.event_tau(i, sigma) for i in range(len(self.structure.events))]
            return float(logsumexp(taus)) - log_lam

        sigma, _ = monotone_root(excess, self._sigma_guess, increasing=False, step=1.0, xtol=self.tol * 1e-2)
        self._sigma_guess = sigma
        taus = np.array([self.event_tau(i, sigma) for i in range(len(self.structure.events))])
        ws = np.exp(taus - logsumexp(taus))
        cells = [self.cell(k, lam, ws[c.event_index]) for k, c in enumerate(self.structure.cells)]
        return _InnerSolution(cells, sigma, ws)

    def pricing(self, inner: _InnerSolution) -> PricingVector:
        S = self.model.n_scenarios
        D = np.empty((self.model.n_agents, S))
        for cm in inner.cells:
            for n in cm.cell.group:
                D[n, list(cm.cell.event)] = cm.density
        return PricingVector(D)


def _initial_log_lambda(model: MarketModel, profile: UtilityProfile, A: float) -> float:
    share = A / model.n_agents
    with np.errstate(all="ignore"):
        logs = [
            float(logsumexp(np.log(model.probs) + np.asarray(u.log_du(model.endowments[n] + share))))
            for n, u in enumerate(profile)
        ]
    t0 = float(np.median(logs))
    return t0 if math.isfinite(t0) else 0.0


def dual_objective(model: MarketModel, profile: UtilityProfile, A: float, point: DualPoint) -> float:
    """``K(lam, Q)``; a zero density contributes the limit ``v(0+) = sup u``."""
    lam = point.lam
    D = point.pricing.densities
    if D.shape != model.endowments.shape:
        raise ValidationError(f"pricing vector has shape {D.shape}, expected {model.endowments.shape}")
    if np.any(D < 0.0):
        raise DomainError("densities must be nonnegative")
    p = model.probs
    total = lam * (float(np.sum((D * model.endowments) @ p)) + A)
    for n, u in enumerate(profile):
        y = lam * D[n]
        pos = y > 0.0
        vals = np.full(y.shape, u.u_sup)
        if np.any(pos):
            vals[pos] = u.v(y[pos])
        total += float(p @ vals)
    return total


def inner_cell_measure(
    model: MarketModel,
    profile: UtilityProfile,
    cell: Cell,
    lam: float,
    mass: float = 1.0,
    tol: float = DEFAULT_TOL,
) -> CellMeasure:
    """Optimal common density of ``cell`` for a fixed multiplier ``lam``."""
    if not lam > 0.0:
        raise DomainError("lambda must be positive")
    structure = MeasureStructure((cell,), (cell.event,), model.n_agents, model.n_scenarios)
    return _DualEngine(model, profile, structure, tol).cell(0, lam, mass)


def stationarity(model: MarketModel, profile: UtilityProfile, spec: ConstraintSpec, A: float, lam: float) -> float:
    """``A - sigma(lam)``, the derivative of the concentrated dual in ``ln lam``.

    It is increasing in ``lam`` and vanishes at the dual minimiser.
    """
    if not lam > 0.0:
        raise DomainError("lambda must be positive")
    engine = _DualEngine(model, profile, measure_structure(spec, model.n_scenarios), DEFAULT_TOL)
    return A - engine.inner(lam).sigma


def solve_lambda(
    model: MarketModel,
    profile: UtilityProfile,
    spec: ConstraintSpec,
    A: float,
    tol: float = DEFAULT_TOL,
) -> DualPoint:
    """Dual minimiser ``(lam, Q)``, where ``sigma(lam) = A``."""
    engine = _DualEngine(model, profile, measure_structure(spec, model.n_scenarios), tol)
    lam, inner = engine.at_sigma(A)
    return DualPoint(lam, engine.pricing(inner))


def recover_allocation(model: MarketModel, profile: UtilityProfile, point: DualPoint) -> NDArray[np.float64]:
    """``Y^j = -X^j - v_j'(lam dQ^j/dP)``."""
    D = point.pricing.densities
    if np.any(D <= 0.0):
        raise DomainError("a density vanishes: the marginal condition has no finite solution")
    Y = np.empty_like(model.endowments)
    for n, u in enumerate(profile):
        Y[n] = -model.endowments[n] - np.asarray(u.dv(point.lam * D[n]))
    return Y


def _dv_condition(profile: UtilityProfile, lam: float, D: NDArray[np.float64]) -> float:
    """Spread of ``v''`` over the marginal utilities met at the solution."""
    ratios = []
    for n, u in enumerate(profile):
        y = lam * D[n]
        lo, hi = float(y.min()), float(y.max())
        grid = np.array([lo, hi]) if hi > lo else np.array([lo])
        h = 1e-6 * grid
        curv = (np.asarray(u.dv(grid + h)) - np.asarray(u.dv(grid - h))) / (2 * h)
        ratios.append(float(curv.max() / curv.min()))
    return float(max(ratios))


def solve_sorte(
    model: MarketModel,
    profile: UtilityProfile,
    spec: ConstraintSpec,
    A: float = 0.0,
    tol: float = DEFAULT_TOL,
) -> EquilibriumSolution:
    """Systemic optimal risk transfer equilibrium via the dual problem."""
    if spec.n_agents != model.n_agents:
        raise ValidationError(f"spec is for {spec.n_agents} agents, model has {model.n_agents}")
    structure = measure_structure(spec, model.n_scenarios)
    engine = _DualEngine(model, profile, structure, tol)
    lam, inner = engine.at_sigma(A)
    pricing = engine.pricing(inner)
    point = DualPoint(lam, pricing)
    Y = recover_allocation(model, profile, point)
    a = pricing.expectations(model, Y)
    primal = profile.total_utility(model.endowments + Y, model.probs)
    dual = dual_objective(model, profile, A, point)

    W = model.endowments + Y
    foc = max(
        float(np.max(np.abs(np.asarray(u.du(W[n])) - lam * pricing.densities[n]))) for n, u in enumerate(profile)
    )
    diagnostics: dict[str, Any] = {
        "root_evaluations": engine.nfev,
        "clearing_residual": float(np.max(np.abs(Y.sum(axis=0) - A))),
        "budget_residual": float(abs(a.sum() - A)),
        "foc_residual": foc,
        "gap": dual - primal,
        "min_density": float(pricing.densities.min()),
        "event_masses": inner.event_masses.tolist(),
        "group_levels": [c.level for c in inner.cells],
        "dv_condition": _dv_condition(profile, lam, pricing.densities),
        "warnings": [],
    }
    if diagnostics["min_density"] <= 1e-14:
        diagnostics["warnings"].append("pricing measure is not equivalent to P (density <= 1e-14)")
    return EquilibriumSolution(Y, pricing, a, lam, primal, dual, float(A), diagnostics)


@dataclass(frozen=True)
class QOptimal:
    Y: NDArray[np.float64]
    a: NDArray[np.float64]
    value: float
    lam: float


def _allocation_for(model: MarketModel, profile: UtilityProfile, D: NDArray[np.float64], lam: float) -> NDArray[np.float64]:
    Y = np.empty_like(model.endowments)
    for n, u in enumerate(profile):
        Y[n] = -model.endowments[n] - np.asarray(u.dv(lam * D[n]))
    return Y


def solve_q_optimal(
    model: MarketModel,
    profile: UtilityProfile,
    Q: PricingVector,
    A: float = 0.0,
    tol: float = DEFAULT_TOL,
) -> QOptimal:
    """Optimal allocation and budgets when the pricing vector is fixed.

    Every agent's marginal utility is proportional to its own density with a
    common factor ``lam``, chosen so that total prices equal ``A``.
    """
    Q.validate(model)
    D = Q.densities
    if np.any(D <= 0.0):
        raise DomainError("fixed pricing vector must have strictly positive densities")

    def excess(t: float) -> float:
        Y = _allocation_for(model, profile, D, math.exp(t))
        return float(Q.expectations(model, Y).sum()) - A

    t0 = _initial_log_lambda(model, profile, A)
    t, _ = monotone_root(excess, t0, increasing=False, step=1.0, xtol=1e-15)
    lam = math.exp(t)
    Y = _allocation_for(model, profile, D, lam)
    return QOptimal(Y, Q.expectations(model, Y), profile.total_utility(model.endowments + Y, model.probs), lam)


def optimize_agent(
    model: MarketModel,
    utility: AgentUtility,
    endowment: ArrayLike,
    density: ArrayLike,
    budget: float,
) -> tuple[NDArray[np.float64], float, float]:
    """Single-agent problem ``sup E[u(X + Y)]`` subject to ``E_Q[Y] = budget``.

    Returns ``(Y, multiplier, value)``.
    """
    x = np.asarray(endowment, dtype=float)
    q = np.asarray(density, dtype=float)
    if np.any(q <= 0.0):
        raise DomainError("density must be strictly positive")
    p = model.probs

    def excess(t: float) -> float:
        Y = -x - np.asarray(utility.dv(math.exp(t) * q))
        return float(p @ (q * Y)) - budget

    with np.errstate(all="ignore"):
        t0 = float(np.log(p @ np.asarray(utility.du(x + budget))))
    t, _ = monotone_root(excess, t0 if math.isfinite(t0) else 0.0, increasing=False, step=1.0, xtol=1e-15)
    lam = math.exp(t)
    Y = -x - np.asarray(utility.dv(lam * q))
    return Y, lam, float(p @ np.asarray(utility.u(x + Y)))

"""Utility functions on the real line together with their convex conjugates.

Each agent utility exposes the quadruple ``(u, u', v, v')`` where
``v(y) = sup_x {u(x) - x y}``.  The equilibrium solver only ever touches
this quadruple, plus ``u''`` for the brute-force oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import BracketError, DomainError, ValidationError

# exp() overflows just above 709
_EXP_LIMIT = 700.0

Y_GRID = np.logspace(-6, 6, 61)


def _as_float(x):
    arr = np.asarray(x, dtype=float)
    return arr if arr.ndim else float(arr)


class AgentUtility:
    """Interface shared by the utility families; subclasses fill in the maps."""

    family: str = "abstract"
    gamma: float = 1.0

    def u(self, x):
        raise NotImplementedError

    def du(self, x):
        raise NotImplementedError

    def d2u(self, x):
        raise NotImplementedError

    def v(self, y):
        raise NotImplementedError

    def dv(self, y):
        raise NotImplementedError

    @property
    def u_sup(self) -> float:
        """``lim_{x -> +inf} u(x)``, which is also ``v(0+)``."""
        raise NotImplementedError

    def inverse_marginal(self, z):
        """Wealth level at which the marginal utility equals ``z`` (``-v'(z)``)."""
        return -self.dv(z)

    def log_du(self, x):
        return np.log(self.du(x))

    def weighted(self, gamma: float) -> "AgentUtility":
        raise NotImplementedError


def _check_positive(y) -> NDArray[np.float64]:
    arr = np.asarray(y, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError("conjugate is evaluated on y > 0 only")
    return arr


@dataclass(frozen=True)
class ExponentialUtility(AgentUtility):
    """``u(x) = gamma (1 - exp(-alpha x))``."""

    alpha: float
    gamma: float = 1.0
    family: str = field(default="exponential", init=False)

    def __post_init__(self) -> None:
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise DomainError(f"risk aversion must be positive, got {self.alpha!r}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise DomainError(f"weight must be positive, got {self.gamma!r}")

    def u(self, x):
        x = np.asarray(x, dtype=float)
        # gamma - exp(ln gamma - alpha x); -inf once the exponent leaves double range
        expo = math.log(self.gamma) - self.alpha * x
        with np.errstate(over="ignore"):
            out = np.where(expo > _EXP_LIMIT, -np.inf, -self.gamma * np.expm1(-self.alpha * np.minimum(x, 1e300)))
        return _as_float(out)

    def du(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return _as_float(np.exp(self.log_du(x)))

    def log_du(self, x):
        return _as_float(math.log(self.gamma * self.alpha) - self.alpha * np.asarray(x, dtype=float))

    def d2u(self, x):
        return _as_float(-self.alpha * np.asarray(self.du(x)))

    def v(self, y):
        y = _check_positive(y)
        r = y / self.alpha
        return _as_float(self.gamma - r + r * np.log(y / (self.gamma * self.alpha)))

    def dv(self, y):
        y = _check_positive(y)
        return _as_float(np.log(y / (self.gamma * self.alpha)) / self.alpha)

    def log_inverse_marginal_coeffs(self) -> tuple[float, float]:
        """``(c, b)`` with ``-v'(z) = c - b ln z``; lets groups invert in closed form."""
        return math.log(self.gamma * self.alpha) / self.alpha, 1.0 / self.alpha

    @property
    def u_sup(self) -> float:
        return self.gamma

    def weighted(self, gamma: float) -> "ExponentialUtility":
        if not gamma > 0.0:
            raise DomainError(f"weight must be positive, got {gamma!r}")
        return ExponentialUtility(self.alpha, self.gamma * gamma)


@dataclass(frozen=True)
class CustomUtility(AgentUtility):
    """A user supplied quadruple ``(u, u', v, v')``, optionally scaled by ``gamma``.

    The base maps describe the unweighted utility; scaling is applied through
    ``v_gamma(y) = gamma v(y / gamma)`` and ``v'_gamma(y) = v'(y / gamma)``.
    Construction runs :func:`check_utility` and raises on any failure.
    """

    u_fn: Callable
    du_fn: Callable
    v_fn: Callable
    dv_fn: Callable
    gamma: float = 1.0
    d2u_fn: Callable | None = None
    sup_value: float | None = None
    name: str = "custom"
    validate: bool = True
    family: str = field(default="custom", init=False)

    def __post_init__(self) -> None:
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise DomainError(f"weight must be positive, got {self.gamma!r}")
        if self.validate:
            report = check_utility(self)
            failed = [k for k, ok in report["passed"].items() if not ok]
            if failed:
                raise ValidationError(f"utility {self.name!r} fails checks: {failed}")

    def u(self, x):
        return _as_float(self.gamma * np.asarray(self.u_fn(np.asarray(x, dtype=float)), dtype=float))

    def du(self, x):
        return _as_float(self.gamma * np.asarray(self.du_fn(np.asarray(x, dtype=float)), dtype=float))

    def d2u(self, x):
        x = np.asarray(x, dtype=float)
        if self.d2u_fn is not None:
            return _as_float(self.gamma * np.asarray(self.d2u_fn(x), dtype=float))
        h = 1e-5 * np.maximum(1.0, np.abs(x))
        return _as_float((np.asarray(self.du(x + h)) - np.asarray(self.du(x - h))) / (2 * h))

    def v(self, y):
        y = _check_positive(y)
        return _as_float(self.gamma * np.asarray(self.v_fn(y / self.gamma), dtype=float))

    def dv(self, y):
        y = _check_positive(y)
        return _as_float(np.asarray(self.dv_fn(y / self.gamma), dtype=float))

    @property
    def u_sup(self) -> float:
        if self.sup_value is not None:
            return self.gamma * self.sup_value
        return float(self.v(1e-300))

    def weighted(self, gamma: float) -> "CustomUtility":
        if not gamma > 0.0:
            raise DomainError(f"weight must be positive, got {gamma!r}")
        return CustomUtility(
            self.u_fn, self.du_fn, self.v_fn, self.dv_fn, self.gamma * gamma,
            self.d2u_fn, self.sup_value, self.name, validate=False,
        )


def u_eval(au: AgentUtility, x):
    return au.u(x)


def u_prime(au: AgentUtility, x):
    return au.du(x)


def v_eval(au: AgentUtility, y):
    return au.v(y)


def v_prime(au: AgentUtility, y):
    return au.dv(y)


def check_utility(au: AgentUtility, y_grid: ArrayLike = Y_GRID, tol: float = 1e-10) -> dict:
    """Numerical checks of the standing assumptions on a utility.

    Returns a dict with ``residuals`` and boolean ``passed`` entries.  The
    conjugacy and inverse-marginal identities are measured relative to
    ``max(1, |value|)`` so large ``y`` do not fail on rounding alone.
    """
    y = np.asarray(y_grid, dtype=float)
    x = np.linspace(-20.0, 20.0, 81)
    res: dict[str, float] = {}
    with np.errstate(all="ignore"):
        ux = np.asarray(au.u(x), dtype=float)
        dux = np.asarray(au.du(x), dtype=float)
        res["monotone"] = float(np.min(np.diff(ux)))
        res["marginal_positive"] = float(np.min(dux))
        res["concave"] = float(np.max(np.diff(dux)))

        r_neg = float(au.u(-1e6)) / -1e6
        r_mid = float(au.u(-1e3)) / -1e3
        r_pos = float(au.u(1e6)) / 1e6
        res["growth_left"] = r_neg
        res["growth_right"] = r_pos

        vy = np.asarray(au.v(y), dtype=float)
        dvy = np.asarray(au.dv(y), dtype=float)
        lhs = np.asarray(au.u(-dvy), dtype=float)
        rhs = vy - y * dvy
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        res["conjugacy"] = float(np.max(np.abs(lhs - rhs) / scale))
        marg = np.asarray(au.du(-dvy), dtype=float)
        res["inverse_marginal"] = float(np.max(np.abs(marg - y) / np.maximum(1.0, y)))
        res["dv_increasing"] = float(np.min(np.diff(dvy)))

        # second differences of v on a uniform grid inside [1e-3, 1e3]
        yy = np.linspace(1e-3, 10.0, 200)
        vv = np.asarray(au.v(yy), dtype=float)
        res["v_convex"] = float(np.min(vv[2:] - 2 * vv[1:-1] + vv[:-2]))

    passed = {
        "monotone": res["monotone"] > 0.0 or np.isnan(res["monotone"]),
        "marginal_positive": res["marginal_positive"] > 0.0,
        "concave": res["concave"] <= 0.0,
        # super-linear loss on the left; overflow to -inf counts as such
        "growth_left": r_neg == math.inf or (r_neg > max(r_mid, 0.0) and r_neg > 0.0),
        "growth_right": abs(r_pos) < 1e-3 * max(1.0, abs(float(au.du(0.0)))),
        "conjugacy": res["conjugacy"] <= tol,
        "inverse_marginal": res["inverse_marginal"] <= 1e3 * tol,
        "dv_increasing": res["dv_increasing"] > 0.0,
        "v_convex": res["v_convex"] >= -1e-9,
    }
    # u(-20) may overflow and u may round to its supremum on the right, so
    # u is only required to be non-decreasing on the grid; strictness comes
    # from the marginal_positive check
    fin = ux[np.isfinite(ux)]
    passed["monotone"] = bool(fin.size > 1 and np.all(np.diff(fin) >= 0.0) and fin[-1] > fin[0])
    return {"residuals": res, "passed": passed}


@dataclass(frozen=True)
class UtilityProfile:
    """The utilities of the ``N`` agents, in agent order."""

    utilities: tuple[AgentUtility, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "utilities", tuple(self.utilities))
        if not self.utilities:
            raise ValidationError("a profile needs at least one agent")

    @classmethod
    def exponential(cls, alphas: ArrayLike, gammas: ArrayLike | None = None) -> "UtilityProfile":
        a = np.atleast_1d(np.asarray(alphas, dtype=float))
        g = np.ones_like(a) if gammas is None else np.atleast_1d(np.asarray(gammas, dtype=float))
        if g.shape != a.shape:
            raise ValidationError("alphas and gammas must have the same length")
        return cls(tuple(ExponentialUtility(float(x), float(w)) for x, w in zip(a, g)))

    def __len__(self) -> int:
        return len(self.utilities)

    def __getitem__(self, n: int) -> AgentUtility:
        return self.utilities[n]

    def __iter__(self):
        return iter(self.utilities)

    @property
    def is_exponential(self) -> bool:
        return all(isinstance(u, ExponentialUtility) for u in self.utilities)

    @property
    def alphas(self) -> NDArray[np.float64]:
        if not self.is_exponential:
            raise ValidationError("profile is not exponential")
        return np.array([u.alpha for u in self.utilities])

    @property
    def gammas(self) -> NDArray[np.float64]:
        return np.array([u.gamma for u in self.utilities])

    def check_size(self, n_agents: int) -> None:
        if len(self) != n_agents:
            raise ValidationError(f"profile has {len(self)} utilities for {n_agents} agents")

    def total_utility(self, wealth: ArrayLike, probs: ArrayLike) -> float:
        """``sum_n E[u_n(W^n)]`` for an ``N x S`` wealth matrix."""
        W = np.asarray(wealth, dtype=float)
        return float(sum(np.asarray(u.u(W[n])) @ np.asarray(probs) for n, u in enumerate(self.utilities)))

    def agent_utilities(self, wealth: ArrayLike, probs: ArrayLike) -> NDArray[np.float64]:
        W = np.asarray(wealth, dtype=float)
        return np.array([np.asarray(u.u(W[n])) @ np.asarray(probs) for n, u in enumerate(self.utilities)])


def apply_weights(profile: UtilityProfile, gammas: ArrayLike) -> UtilityProfile:
    """Profile whose ``n``-th utility is ``gamma_n u_n``."""
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    if g.shape != (len(profile),):
        raise ValidationError(f"expected {len(profile)} weights, got {g.size}")
    if np.any(~(g > 0.0)):
        raise DomainError("weights must be strictly positive")
    return UtilityProfile(tuple(u.weighted(float(w)) for u, w in zip(profile, g)))


def group_log_marginal(
    utilities: Sequence[AgentUtility],
    totals: ArrayLike,
    max_iter: int = 200,
) -> NDArray[np.float64]:
    """Solve ``sum_n -v_n'(z) = t`` for ``ln z``, elementwise in ``t``.

    ``z`` is the common marginal utility that splits the total wealth ``t``
    optimally across the group.  Exponential groups are inverted in closed
    form; otherwise a vectorised Illinois (regula falsi) iteration on ``ln z`` is run.
    """
    t = np.asarray(totals, dtype=float)
    if all(isinstance(u, ExponentialUtility) for u in utilities):
        c = b = 0.0
        for u in utilities:
            cu, bu = u.log_inverse_marginal_coeffs()
            c += cu
            b += bu
        return (c - t) / b
    if len(utilities) == 1:
        # a lone agent keeps the whole total: z = u'(t)
        return np.asarray(utilities[0].log_du(t), dtype=float)

    def excess(logz):
        z = np.exp(logz)
        return sum(np.asarray(u.inverse_marginal(z), dtype=float) for u in utilities) - t

    lo = np.full_like(t, -5.0)
    hi = np.full_like(t, 5.0)
    # excess is decreasing in ln z; widen until it changes sign
    for _ in range(60):
        bad = excess(lo) < 0.0
        if not np.any(bad):
            break
        lo = np.where(bad, 2.0 * lo - 1.0, lo)
        lo = np.maximum(lo, math.log(1e-300))
    for _ in range(60):
        bad = excess(hi) > 0.0
        if not np.any(bad):
            break
        hi = np.where(bad, 2.0 * hi + 1.0, hi)
        hi = np.minimum(hi, 700.0)
    if np.any(excess(lo) < 0.0) or np.any(excess(hi) > 0.0):
        raise BracketError("cannot bracket the group marginal utility; check v'(0+) and v'(inf)")
    # vectorised Illinois iteration: regula falsi with halving of a stale end
    f_lo, f_hi = excess(lo), excess(hi)
    side = np.zeros(t.shape)
    mid = 0.5 * (lo + hi)
    scale = np.maximum(1.0, np.abs(t))
    for _ in range(max_iter):
        with np.errstate(invalid="ignore", divide="ignore"):
            mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        inside = (mid > lo) & (mid < hi)
        mid = np.where(inside, mid, 0.5 * (lo + hi))
        f = excess(mid)
        pos = f > 0.0
        lo, f_lo = np.where(pos, mid, lo), np.where(pos, f, f_lo)
        hi, f_hi = np.where(pos, hi, mid), np.where(pos, f_hi, f)
        f_hi = np.where(pos & (side > 0), 0.5 * f_hi, f_hi)
        f_lo = np.where(~pos & (side < 0), 0.5 * f_lo, f_lo)
        side = np.where(pos, 1.0, -1.0)
        if np.all((np.abs(f) <= 4e-16 * scale) | (hi - lo <= 1e-15 * np.maximum(1.0, np.abs(mid)))):
            break
    return mid

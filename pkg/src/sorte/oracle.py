"""Direct primal maximisation, used as an oracle for the dual solver.

The equality constraints (family membership plus clearing) are eliminated
with an orthonormal null-space basis; the remaining unconstrained concave
problem is climbed from several random starting points.  Only ``u``, ``u'``
and ``u''`` are used, never the conjugates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .constraints import ConstraintSpec, allocation_basis
from .errors import ConvergenceError, ScaleError
from .market import MarketModel
from .utility import UtilityProfile

MAX_SIZE = 64


@dataclass(frozen=True)
class BruteForceResult:
    Y: NDArray[np.float64]
    value: float
    start_values: tuple[float, ...]
    iterations: tuple[int, ...]


def _objective(model: MarketModel, profile: UtilityProfile, Y: NDArray[np.float64]):
    W = model.endowments + Y
    p = model.probs
    val = 0.0
    grad = np.empty_like(W)
    hess = np.empty_like(W)
    with np.errstate(over="ignore", invalid="ignore"):
        for n, u in enumerate(profile):
            val += float(p @ np.asarray(u.u(W[n])))
            grad[n] = p * np.asarray(u.du(W[n]))
            hess[n] = p * np.asarray(u.d2u(W[n]))
    return val, grad.ravel(), hess.ravel()


def brute_force_primal(
    model: MarketModel,
    profile: UtilityProfile,
    spec: ConstraintSpec,
    A: float = 0.0,
    *,
    starts: int = 4,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-13,
) -> BruteForceResult:
    """Maximise ``sum_n E[u_n(X^n + Y^n)]`` over ``Y in B`` with ``sum_n Y^n = A``.

    Each ascent step is the projected gradient preconditioned by the reduced
    Hessian (falling back to the plain gradient if that is not negative
    definite), followed by Armijo backtracking.
    """
    N, S = model.endowments.shape
    if N * S > MAX_SIZE:
        raise ScaleError(f"N*S = {N * S} exceeds the brute-force limit of {MAX_SIZE}")
    profile.check_size(N)
    basis = allocation_basis(spec, S, clearing=True)
    y0 = np.full(N * S, A / N)
    rng = np.random.default_rng(seed)

    def at(z):
        return (y0 + basis @ z).reshape(N, S)

    best: tuple[float, NDArray[np.float64]] | None = None
    values, iters = [], []
    for start in range(starts):
        z = np.zeros(basis.shape[1]) if start == 0 else rng.normal(scale=1.0, size=basis.shape[1])
        f, g_y, h_y = _objective(model, profile, at(z))
        k = 0
        for k in range(1, max_iter + 1):
            g = basis.T @ g_y
            H = basis.T @ (h_y[:, None] * basis)
            try:
                L = np.linalg.cholesky(-H)
                d = np.linalg.solve(L.T, np.linalg.solve(L, g))
            except np.linalg.LinAlgError:
                d = g
            slope = float(g @ d)
            if slope <= tol * max(1.0, abs(f)) * 1e-3 or not np.isfinite(slope):
                break
            t = 1.0
            while True:
                z_new = z + t * d
                f_new, g_new, h_new = _objective(model, profile, at(z_new))
                if np.isfinite(f_new) and f_new >= f + 1e-4 * t * slope:
                    break
                t *= 0.5
                if t < 1e-20:
                    break
            if t < 1e-20:
                break
            # progress below rounding level: the optimum is resolved
            stalled = f_new - f <= 4 * np.finfo(float).eps * max(1.0, abs(f))
            z, f, g_y, h_y = z_new, f_new, g_new, h_new
            if stalled:
                break
        else:
            raise ConvergenceError(f"primal ascent did not converge in {max_iter} iterations")
        values.append(f)
        iters.append(k)
        if best is None or f > best[0]:
            best = (f, at(z))
    return BruteForceResult(best[1], best[0], tuple(values), tuple(iters))

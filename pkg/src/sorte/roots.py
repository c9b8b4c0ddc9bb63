"""Bracket-then-Brent root finding for monotone scalar equations."""

from __future__ import annotations

import math
from typing import Callable

from scipy.optimize import brentq

from .errors import BracketError, ConvergenceError


def monotone_root(
    f: Callable[[float], float],
    x0: float,
    *,
    increasing: bool,
    step: float = 1.0,
    lower: float = -math.inf,
    upper: float = math.inf,
    xtol: float = 1e-14,
    rtol: float = 4 * 2.220446049250313e-16,
    maxiter: int = 200,
    max_expand: int = 80,
) -> tuple[float, int]:
    """Root of a monotone ``f`` starting from the guess ``x0``.

    The bracket is grown geometrically away from ``x0`` in the direction
    indicated by the sign of ``f(x0)``; hitting ``lower``/``upper`` without
    a sign change raises :class:`BracketError`.

    Returns ``(root, number_of_evaluations)``.
    """
    # Brent re-evaluates the bracket ends; memoising keeps their signs
    # consistent when ``f`` itself depends on warm-started inner solves.
    seen: dict[float, float] = {}
    raw = f

    def f(x: float) -> float:
        if x not in seen:
            seen[x] = raw(x)
        return seen[x]

    nfev = 1
    f0 = f(x0)
    if f0 == 0.0:
        return x0, nfev
    if math.isnan(f0):
        raise BracketError(f"function is nan at the starting point {x0!r}")
    # move right when f must grow towards zero
    go_right = (f0 < 0.0) == increasing
    a, fa = x0, f0
    h = step
    for _ in range(max_expand):
        b = a + h if go_right else a - h
        b = min(b, upper) if go_right else max(b, lower)
        fb = f(b)
        nfev += 1
        if math.isnan(fb):
            raise BracketError(f"function is nan at {b!r} while bracketing")
        if fb == 0.0:
            return b, nfev
        if (fb > 0.0) != (fa > 0.0):
            lo, hi = (a, b) if a < b else (b, a)
            root, info = brentq(f, lo, hi, xtol=xtol, rtol=rtol, maxiter=maxiter, full_output=True, disp=False)
            nfev += info.function_calls
            if not info.converged:
                raise ConvergenceError(f"Brent iteration did not converge: {info.flag}")
            return float(root), nfev
        if b == (upper if go_right else lower):
            raise BracketError(f"no sign change before reaching the limit {b!r}")
        a, fa = b, fb
        h *= 2.0
    raise BracketError("no sign change found while expanding the bracket")

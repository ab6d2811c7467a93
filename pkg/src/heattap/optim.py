"""Limited-memory BFGS with a backtracking Armijo line search.

Deterministic and monotone: a step is only accepted when it decreases the
objective by at least ``c1 * step * slope``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    n_eval: int
    converged: bool
    message: str
    trace: list[float] = field(default_factory=list)


def lbfgs(fun: Objective, x0: np.ndarray, *, max_iter: int = 1000, gtol: float = 1e-6,
          ftol: float = 0.0, history: int = 10, c1: float = 1e-4,
          max_backtracks: int = 40) -> OptimResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops when the gradient's Euclidean norm drops to ``gtol``, when the
    relative decrease of an accepted step is at most ``ftol``, or after
    ``max_iter`` iterations.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    n_eval = 1
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    pairs: deque[tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=history)
    trace = [f]
    gnorm = float(np.linalg.norm(g))

    for it in range(max_iter):
        if gnorm <= gtol:
            return OptimResult(x, f, gnorm, it, n_eval, True, "gradient norm below tolerance", trace)

        d = -_two_loop(g, pairs)
        slope = float(g @ d)
        if slope >= 0:  # lost descent; restart from steepest descent
            pairs.clear()
            d = -g
            slope = -gnorm ** 2
        step = 1.0 if pairs else min(1.0, 1.0 / gnorm)

        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            n_eval += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            # safeguarded quadratic interpolation of the step
            if np.isfinite(f_new):
                denom = 2.0 * (f_new - f - step * slope)
                trial = -slope * step * step / denom if denom > 0 else 0.5 * step
                step = min(max(trial, 0.1 * step), 0.5 * step)
            else:
                step *= 0.1
        else:
            return OptimResult(x, f, gnorm, it, n_eval, False, "line search failed", trace)

        s, yv = x_new - x, g_new - g
        sy = float(s @ yv)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(yv):
            pairs.append((s, yv, 1.0 / sy))
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        trace.append(f)
        if decrease <= 0:  # accepted only within rounding; nothing left to gain
            return OptimResult(x, f, gnorm, it + 1, n_eval, gnorm <= gtol,
                               "no decrease at machine precision", trace)
        if ftol > 0 and decrease <= ftol * max(abs(f), 1.0):
            return OptimResult(x, f, gnorm, it + 1, n_eval, True, "relative decrease below ftol", trace)

    converged = gnorm <= gtol
    msg = "gradient norm below tolerance" if converged else "iteration limit reached"
    return OptimResult(x, f, gnorm, max_iter, n_eval, converged, msg, trace)


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    """Apply the L-BFGS inverse-Hessian approximation to ``g``."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q

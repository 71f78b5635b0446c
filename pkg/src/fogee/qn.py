"""BFGS with Armijo backtracking, for the unconstrained AL subproblems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QNResult:
    x: np.ndarray
    f: float
    grad_inf: float
    iterations: int
    evaluations: int
    converged: bool
    degraded: bool


def bfgs(fun, x0, tol=None, max_iter=500, c1=1e-4, shrink=0.5, max_backtrack=50):
    """Minimize ``fun(x) -> (f, g)``.

    Stops when ``||g||_inf <= tol(f)`` (``tol`` may be a float or a callable of
    ``f``). A failed line search ends the run with ``degraded=True`` and the
    best iterate so far.
    """
    if tol is None:
        tol = lambda f: 1e-4 * (1.0 + abs(f))  # noqa: E731
    elif not callable(tol):
        tol_value = float(tol)
        tol = lambda f: tol_value  # noqa: E731

    x = np.array(x0, dtype=float)
    f, g = fun(x)
    n_eval = 1
    Hinv = np.eye(x.size)
    first = True
    for it in range(max_iter):
        gmax = np.max(np.abs(g))
        if gmax <= tol(f):
            return QNResult(x, f, gmax, it, n_eval, True, False)
        p = -Hinv @ g
        slope = p @ g
        if slope >= 0:
            # lost descent; restart from steepest descent
            Hinv = np.eye(x.size)
            first = True
            p = -g
            slope = -(g @ g)
        if first:
            # scale the first step to a unit move in the largest coordinate
            p = p / max(1.0, np.max(np.abs(p)))
            slope = p @ g
        step = 1.0
        for _ in range(max_backtrack):
            x_new = x + step * p
            f_new, g_new = fun(x_new)
            n_eval += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            return QNResult(x, f, gmax, it, n_eval, False, True)

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            if first:
                Hinv = np.eye(x.size) * (sy / (y @ y))
                first = False
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv += (rho * rho * (y @ Hy) + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        x, f, g = x_new, f_new, g_new
    gmax = np.max(np.abs(g))
    return QNResult(x, f, gmax, max_iter, n_eval, gmax <= tol(f), False)

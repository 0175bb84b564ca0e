"""Limited-memory BFGS with a strong Wolfe line search.

Self-contained dense-vector implementation (two-loop recursion, history of
``memory`` curvature pairs).  The line search brackets and zooms until both
strong Wolfe conditions hold (sufficient decrease with c1, curvature with
c2); on failure the driver falls back to a backtracking steepest-descent
step before giving up, so a stalled search returns the best iterate seen
rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ValueAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

_MAX_BRACKET = 20
_MAX_ZOOM = 30


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    status: str
    n_evals: int


def _zoom(fg: ValueAndGrad, x, d, phi0, dphi0, c1, c2,
          a_lo, phi_lo, dphi_lo, a_hi, phi_hi, evals):
    """Wolfe zoom phase on the bracket [a_lo, a_hi] (order-free)."""
    for _ in range(_MAX_ZOOM):
        span = a_hi - a_lo
        # quadratic model through (a_lo, phi_lo, dphi_lo) and (a_hi, phi_hi),
        # safeguarded to the interior of the bracket
        denom = 2.0 * (phi_hi - phi_lo - dphi_lo * span)
        if denom != 0.0 and np.isfinite(denom):
            a_j = a_lo - dphi_lo * span * span / denom
        else:
            a_j = a_lo + 0.5 * span
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        width = hi - lo
        if not (lo + 0.1 * width <= a_j <= hi - 0.1 * width):
            a_j = lo + 0.5 * width
        if width <= 1e-14 * max(1.0, abs(a_lo)):
            break
        phi_j, g_j = fg(x + a_j * d)
        evals[0] += 1
        dphi_j = float(g_j @ d)
        if not np.isfinite(phi_j) or phi_j > phi0 + c1 * a_j * dphi0 or phi_j >= phi_lo:
            a_hi, phi_hi = a_j, phi_j
        else:
            if abs(dphi_j) <= -c2 * dphi0:
                return a_j, phi_j, g_j, True
            if dphi_j * (a_hi - a_lo) >= 0.0:
                a_hi, phi_hi = a_lo, phi_lo
            a_lo, phi_lo, dphi_lo = a_j, phi_j, dphi_j
    # bracket exhausted: hand back the sufficient-decrease point if any
    if phi_lo < phi0 + c1 * a_lo * dphi0 and a_lo > 0.0:
        phi_l, g_l = fg(x + a_lo * d)
        evals[0] += 1
        return a_lo, phi_l, g_l, False
    return 0.0, phi0, None, False


def wolfe_line_search(fg: ValueAndGrad, x: np.ndarray, d: np.ndarray,
                      phi0: float, g0: np.ndarray, c1: float = 1e-4,
                      c2: float = 0.9, alpha0: float = 1.0):
    """Find a step along ``d`` satisfying the strong Wolfe conditions.

    Returns ``(alpha, value, grad, n_evals, ok)``; ``ok`` is False when only
    plain decrease (or nothing) was achieved.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        return 0.0, phi0, None, 0, False
    evals = [0]
    a_prev, phi_prev, dphi_prev = 0.0, phi0, dphi0
    alpha = alpha0
    for i in range(_MAX_BRACKET):
        phi_a, g_a = fg(x + alpha * d)
        evals[0] += 1
        if not np.isfinite(phi_a):
            alpha = 0.5 * (a_prev + alpha)
            continue
        dphi_a = float(g_a @ d)
        if phi_a > phi0 + c1 * alpha * dphi0 or (i > 0 and phi_a >= phi_prev):
            out = _zoom(fg, x, d, phi0, dphi0, c1, c2,
                        a_prev, phi_prev, dphi_prev, alpha, phi_a, evals)
            return out[0], out[1], out[2], evals[0], out[3]
        if abs(dphi_a) <= -c2 * dphi0:
            return alpha, phi_a, g_a, evals[0], True
        if dphi_a >= 0.0:
            out = _zoom(fg, x, d, phi0, dphi0, c1, c2,
                        alpha, phi_a, dphi_a, a_prev, phi_prev, evals)
            return out[0], out[1], out[2], evals[0], out[3]
        a_prev, phi_prev, dphi_prev = alpha, phi_a, dphi_a
        alpha = 2.0 * alpha
    return 0.0, phi0, None, evals[0], False


def _backtrack(fg: ValueAndGrad, x, d, phi0, g0, c1=1e-4, max_halvings=40):
    """Armijo backtracking; last-resort step when the Wolfe search fails."""
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        return 0.0, phi0, None, 0
    alpha = 1.0
    for n in range(max_halvings):
        phi_a, g_a = fg(x + alpha * d)
        if np.isfinite(phi_a) and phi_a <= phi0 + c1 * alpha * dphi0:
            return alpha, phi_a, g_a, n + 1
        alpha *= 0.5
    return 0.0, phi0, None, max_halvings


def minimize_lbfgs(fg: ValueAndGrad, x0: np.ndarray, memory: int = 10,
                   grad_tol: float = 1e-8, max_iters: int = 500,
                   c1: float = 1e-4, c2: float = 0.9) -> LbfgsResult:
    """Minimize ``fg`` from ``x0``.

    Stops when the gradient infinity norm drops below
    ``grad_tol * max(1, |value|)`` or after ``max_iters`` accepted steps.
    Line-search probes may legitimately overflow on steep objectives; the
    resulting non-finite values are handled by shrinking the step, so float
    warnings are suppressed for the whole run.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _minimize_lbfgs(fg, x0, memory, grad_tol, max_iters, c1, c2)


def _minimize_lbfgs(fg, x0, memory, grad_tol, max_iters, c1, c2) -> LbfgsResult:
    x = np.asarray(x0, dtype=float).copy()
    value, grad = fg(x)
    n_evals = 1
    if not np.isfinite(value):
        return LbfgsResult(x, value, grad, 0, False, "non_finite_start", n_evals)

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    failures = 0

    for it in range(max_iters):
        if np.max(np.abs(grad)) <= grad_tol * max(1.0, abs(value)):
            return LbfgsResult(x, value, grad, it, True, "converged", n_evals)

        # two-loop recursion
        d = -grad.copy()
        alphas = np.empty(len(s_hist))
        for i in range(len(s_hist) - 1, -1, -1):
            alphas[i] = rho_hist[i] * (s_hist[i] @ d)
            d -= alphas[i] * y_hist[i]
        if s_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            d *= gamma
        for i in range(len(s_hist)):
            beta = rho_hist[i] * (y_hist[i] @ d)
            d += (alphas[i] - beta) * s_hist[i]

        if float(grad @ d) >= 0.0:
            # curvature history unusable; restart from steepest descent
            s_hist, y_hist, rho_hist = [], [], []
            d = -grad.copy()

        alpha0 = 1.0 if s_hist else min(1.0, 1.0 / max(1.0, np.max(np.abs(grad))))
        alpha, new_value, new_grad, evals, ok = wolfe_line_search(
            fg, x, d, value, grad, c1=c1, c2=c2, alpha0=alpha0)
        n_evals += evals
        if alpha == 0.0 or new_grad is None:
            # fall back once to plain gradient descent with backtracking
            s_hist, y_hist, rho_hist = [], [], []
            alpha, new_value, new_grad, evals = _backtrack(
                fg, x, -grad, value, grad, c1=c1)
            n_evals += evals
            if alpha == 0.0 or new_grad is None:
                return LbfgsResult(x, value, grad, it, False,
                                   "line_search_failed", n_evals)
            failures += 1
            if failures >= 2:
                x = x + alpha * (-grad)
                return LbfgsResult(x, new_value, new_grad, it + 1, False,
                                   "line_search_failed", n_evals)
            d = -grad

        x_new = x + alpha * d
        s = x_new - x
        y = new_grad - grad
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            if len(s_hist) == memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x, value, grad = x_new, new_value, new_grad

    converged = bool(np.max(np.abs(grad)) <= grad_tol * max(1.0, abs(value)))
    return LbfgsResult(x, value, grad, max_iters, converged, "max_iters", n_evals)

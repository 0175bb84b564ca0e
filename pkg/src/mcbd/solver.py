"""Rank-1 factored solver for the lifted deconvolution problem.

Minimizes |p|^2 + |q|^2 subject to matching the Fourier-domain observations,
via the augmented Lagrangian / method of multipliers: an L-BFGS inner solve
over the factor pair at fixed multipliers, a first-order multiplier update,
and penalty growth whenever feasibility stalls.  The problem is non-convex,
so a stalled misfit well above tolerance triggers a restart from a fresh
random initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lbfgs import minimize_lbfgs
from .model import CandidateSolution, ProblemInstance, adjoint_p, adjoint_q, forward

# penalty ceiling: beyond this the multipliers carry all remaining progress,
# and growing sigma further only risks overflow on infeasible instances
_SIGMA_MAX = 1e14


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and schedule constants; every field is CLI-overridable.

    ``tol_misfit`` is relative: the solve stops when the squared residual
    drops below ``tol_misfit`` times the squared observation norm.  For noisy
    data set it from the noise budget (1.1 * sigma_noise^2), since the
    residual cannot fall below the noise power.
    """

    tol_misfit: float = 1e-10
    sigma0: float = 1.0
    penalty_growth: float = 10.0
    feasibility_factor: float = 0.25
    max_outer_iters: int = 10_000
    lbfgs_memory: int = 10
    lbfgs_grad_tol: float = 1e-8
    lbfgs_max_iters: int = 500
    plateau_window: int = 20
    plateau_rel_decrease: float = 1e-3
    plateau_misfit_factor: float = 1e3
    max_restarts: int = 50
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.tol_misfit, self.sigma0, self.lbfgs_grad_tol,
               self.plateau_rel_decrease, self.plateau_misfit_factor) <= 0:
            raise ValueError("tolerances and penalty constants must be positive")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty_growth must exceed 1")
        if not 0.0 < self.feasibility_factor < 1.0:
            raise ValueError("feasibility_factor must lie in (0, 1)")
        if self.plateau_window < 2:
            raise ValueError("plateau_window must be at least 2")


@dataclass
class SolverState:
    """Mutable per-solve state; not shareable across threads mid-solve."""

    p: np.ndarray            # (L,)
    q: np.ndarray            # (N, K)
    lam: np.ndarray          # (N, L) complex Lagrange multipliers
    sigma: float
    misfit_history: list[float] = field(default_factory=list)
    attempts: int = 0
    outer_iter: int = 0
    prev_feasibility: float | None = None
    grad_norm: float = np.inf


@dataclass(frozen=True)
class SolveResult:
    solution: CandidateSolution
    attempts: int
    converged: bool
    final_misfit: float
    outer_iters_total: int
    trace: tuple | None = None  # rows (attempt, outer_iter, misfit, sigma, grad_norm)


def residual(p: np.ndarray, q: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    """Fourier-domain constraint residual of the factor pair."""
    return forward(p, q) - inst.observations_fourier


def misfit(p: np.ndarray, q: np.ndarray, inst: ProblemInstance) -> float:
    """Squared residual norm (the quantity the stopping rule thresholds)."""
    r = residual(p, q, inst)
    return float(np.sum((np.conj(r) * r).real))


def augmented_lagrangian(p, q, lam, sigma, inst: ProblemInstance) -> float:
    """0.5(|p|^2 + |q|^2) - Re<lam, r> + (sigma/2)|r|^2 with r the residual."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = residual(p, q, inst)
    return (0.5 * (float(p @ p) + float(np.sum(q * q)))
            - float(np.sum((np.conj(lam) * r).real))
            + 0.5 * sigma * float(np.sum((np.conj(r) * r).real)))


def al_gradient(p, q, lam, sigma, inst: ProblemInstance):
    """Exact gradient of the augmented Lagrangian in the real factors.

    The residual terms enter through the operator adjoints applied to the
    effective weight sigma*r - lam; the norm terms contribute p and q.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w = sigma * residual(p, q, inst) - lam
    grad_p = p + adjoint_p(w, q)
    grad_q = q + adjoint_q(w, p, q.shape[-1])
    return grad_p, grad_q


def _pack(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.concatenate([p, q.reshape(-1)])


def _make_objective(lam, sigma, inst: ProblemInstance):
    L, K, N = inst.dims.L, inst.dims.K, inst.dims.N

    def fg(z: np.ndarray):
        p = z[:L]
        q = z[L:].reshape(N, K)
        value = augmented_lagrangian(p, q, lam, sigma, inst)
        grad_p, grad_q = al_gradient(p, q, lam, sigma, inst)
        return value, _pack(grad_p, grad_q)

    return fg


def inner_minimize(state: SolverState, config: SolverConfig,
                   inst: ProblemInstance) -> SolverState:
    """L-BFGS minimization of the augmented Lagrangian at fixed (lam, sigma)."""
    fg = _make_objective(state.lam, state.sigma, inst)
    res = minimize_lbfgs(fg, _pack(state.p, state.q),
                         memory=config.lbfgs_memory,
                         grad_tol=config.lbfgs_grad_tol,
                         max_iters=config.lbfgs_max_iters)
    L = inst.dims.L
    state.p = res.x[:L]
    state.q = res.x[L:].reshape(inst.dims.N, inst.dims.K)
    state.grad_norm = float(np.max(np.abs(res.grad)))
    return state


def multiplier_update(state: SolverState, config: SolverConfig,
                      inst: ProblemInstance) -> SolverState:
    """First-order multiplier step; grow the penalty when feasibility stalls."""
    r = residual(state.p, state.q, inst)
    feasibility = float(np.linalg.norm(r))
    state.lam = state.lam - state.sigma * r
    if (state.prev_feasibility is not None
            and feasibility > config.feasibility_factor * state.prev_feasibility):
        state.sigma = min(state.sigma * config.penalty_growth, _SIGMA_MAX)
    state.prev_feasibility = feasibility
    return state


def plateau_detected(misfit_history, config: SolverConfig,
                     obs_norm_sq: float) -> bool:
    """True when the misfit has stalled well above the stopping threshold.

    Looks at the last ``plateau_window`` outer misfits: stalled means the
    relative decrease over the window is below ``plateau_rel_decrease`` while
    the latest value still exceeds ``plateau_misfit_factor`` times the
    stopping threshold.
    """
    w = config.plateau_window
    if len(misfit_history) < w:
        return False
    first = misfit_history[-w]
    last = misfit_history[-1]
    if last < config.plateau_misfit_factor * config.tol_misfit * obs_norm_sq:
        return False
    if first <= 0.0:
        return False
    return (first - last) < config.plateau_rel_decrease * first


def _init_attempt(state: SolverState, config: SolverConfig,
                  inst: ProblemInstance, rng: np.random.Generator) -> None:
    dims = inst.dims
    state.p = rng.standard_normal(dims.L)
    state.q = rng.standard_normal((dims.N, dims.K))
    state.lam = np.zeros((dims.N, dims.L), dtype=complex)
    state.sigma = config.sigma0
    state.prev_feasibility = None


def solve(inst: ProblemInstance, config: SolverConfig,
          collect_trace: bool = False) -> SolveResult:
    """Run the full multiplier loop with plateau-triggered restarts.

    Returns converged=False (never raises) when the restart or outer
    iteration budget runs out.
    """
    rng = np.random.default_rng(config.rng_seed)
    obs_norm_sq = float(np.sum(np.abs(inst.observations_fourier) ** 2))
    threshold = config.tol_misfit * obs_norm_sq

    state = SolverState(p=np.empty(0), q=np.empty(0), lam=np.empty(0),
                        sigma=config.sigma0)
    _init_attempt(state, config, inst, rng)

    trace: list[tuple] | None = [] if collect_trace else None
    attempt_start = 0
    converged = False
    current = misfit(state.p, state.q, inst)
    if current <= threshold:
        converged = True

    while not converged and state.outer_iter < config.max_outer_iters:
        inner_minimize(state, config, inst)
        current = misfit(state.p, state.q, inst)
        state.outer_iter += 1
        state.misfit_history.append(current)
        if trace is not None:
            trace.append((state.attempts, state.outer_iter, current,
                          state.sigma, state.grad_norm))
        if current <= threshold:
            converged = True
            break
        multiplier_update(state, config, inst)
        if plateau_detected(state.misfit_history[attempt_start:], config,
                            obs_norm_sq):
            if state.attempts >= config.max_restarts:
                break
            state.attempts += 1
            _init_attempt(state, config, inst, rng)
            attempt_start = len(state.misfit_history)

    return SolveResult(
        solution=CandidateSolution(p=state.p.copy(), q=state.q.copy()),
        attempts=state.attempts,
        converged=converged,
        final_misfit=current,
        outer_iters_total=state.outer_iter,
        trace=tuple(trace) if trace is not None else None,
    )

"""Recovery campaigns: phase-transition grid and noise-robustness sweep.

Every trial derives its own random stream from (base_seed, N, K, snr, trial
index) through ``numpy.random.SeedSequence``, so cells are independent,
individually re-runnable, and the whole campaign is reproducible regardless
of execution order or worker count.  Aggregation reduces outcomes in a
canonical sort order, which keeps the emitted CSVs byte-identical across
repeat runs.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .model import GroundTruthLift, ProblemDims, ProblemInstance, make_instance, \
    relative_outer_error
from .solver import SolverConfig, solve

DEFAULT_SUCCESS_THRESHOLD = 0.02

# entropy word marking "no noise" in the per-trial seed derivation; distinct
# from the bit pattern of every float including 0.0
_NOISELESS_KEY = (1 << 64) + 1


class DegenerateObservationError(ValueError):
    """Raised when noise is requested for an all-zero observation."""


@dataclass(frozen=True)
class TrialOutcome:
    L: int
    N: int
    K: int
    trial_index: int
    success: bool
    rel_error: float
    attempts: int
    snr_db: float | None
    seed: int
    wall_time: float


@dataclass(frozen=True)
class GridSpec:
    """Noiseless phase-transition campaign over (N, K) cells at fixed L."""

    L: int = 32
    N_values: tuple[int, ...] = tuple(range(2, 11))
    K_values: tuple[int, ...] = tuple(range(1, 33))
    trials_per_cell: int = 20
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD
    base_seed: int = 0

    def __post_init__(self):
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")
        if not 0.0 < self.success_threshold < 1.0:
            raise ValueError("success_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class NoiseSpec:
    """SNR sweep over a set of (L, K, N) configurations."""

    snr_db_list: tuple[float, ...] = tuple(float(s) for s in range(0, 90, 10))
    configs: tuple[tuple[int, int, int], ...] = ((32, 8, 4), (32, 8, 6), (32, 8, 8))
    trials_per_point: int = 20
    base_seed: int = 0

    def __post_init__(self):
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")


@dataclass(frozen=True)
class CellAggregate:
    """Order-independent per-cell (or per-SNR-point) reduction."""

    L: int
    N: int
    K: int
    snr_db: float | None
    trials: int
    successes: int
    success_prob: float | None
    mean_attempts_success: float | None
    mean_rel_err: float | None
    median_rel_err: float | None


@dataclass(frozen=True)
class PhaseGridResult:
    outcomes: tuple[TrialOutcome, ...]
    cells: tuple[CellAggregate, ...]
    boundary: tuple[tuple[int, int], ...]  # (N, K_star)


@dataclass(frozen=True)
class NoiseSweepResult:
    outcomes: tuple[TrialOutcome, ...]
    points: tuple[CellAggregate, ...]
    # per-config slope of log10(mean rel error) vs SNR over points >= 10 dB
    slopes_per_db: tuple[tuple[tuple[int, int, int], float], ...]


def sample_instance(dims: ProblemDims, rng: np.random.Generator) -> ProblemInstance:
    """Draw signal and channels with i.i.d. standard normal entries.

    Channels drawn this way satisfy both well-posedness conditions almost
    surely, so the instance is identifiable up to the scalar ambiguity.
    """
    signal = rng.standard_normal(dims.L)
    channels = rng.standard_normal((dims.N, dims.K))
    return make_instance(dims, signal, channels)


def add_noise(inst: ProblemInstance, snr_db: float | None,
              rng: np.random.Generator) -> ProblemInstance:
    """Corrupt each observation with Gaussian noise scaled to the exact SNR.

    The per-channel noise norm is pinned to sigma_noise * |y_n| with
    sigma_noise = 10^(-snr_db / 20); ``snr_db`` of None or +inf leaves the
    instance untouched.
    """
    if snr_db is None or np.isinf(snr_db):
        return inst
    sigma = 10.0 ** (-float(snr_db) / 20.0)
    y = inst.observations.copy()
    for n in range(inst.dims.N):
        norm = np.linalg.norm(y[n])
        if norm == 0.0:
            raise DegenerateObservationError(f"observation {n} is all zero")
        nu = rng.standard_normal(inst.dims.L)
        y[n] = y[n] + sigma * norm * nu / np.linalg.norm(nu)
    return make_instance(inst.dims, inst.signal, inst.channels, observations=y)


def noise_sigma(snr_db: float) -> float:
    """Noise level sigma_noise for a given SNR in dB."""
    return 10.0 ** (-float(snr_db) / 20.0)


def noisy_solver_config(config: SolverConfig, snr_db: float | None,
                        dims: ProblemDims | None = None) -> SolverConfig:
    """Adapt the solver tolerances to a known noise budget.

    The residual cannot fall below the noise floor, so the relative misfit
    tolerance is set proportional to sigma_noise^2.  The rank-1 fit absorbs
    the noise component tangent to the solution manifold, so when the
    dimensions are known the reachable floor is only the orthogonal fraction
    1 - (L + KN - 1) / (LN) of the noise power; the tolerance is set at 1.5x
    that floor (capped at 1.1x the full noise power).  Keeping the tolerance
    close to the floor matters at low SNR: a looser ball also admits wrong
    factor pairs that happen to fit the data within noise.  The plateau
    misfit factor drops to 1 because any stall above the tolerance is then a
    trapped attempt, not slow convergence.
    """
    if snr_db is None or np.isinf(snr_db):
        return config
    budget = 1.1
    if dims is not None:
        ortho_frac = 1.0 - (dims.L + dims.K * dims.N - 1) / (dims.L * dims.N)
        if ortho_frac > 0.0:
            budget = min(1.1, 1.5 * ortho_frac)
    sigma = noise_sigma(snr_db)
    return replace(config,
                   tol_misfit=max(config.tol_misfit, budget * sigma * sigma),
                   plateau_misfit_factor=min(config.plateau_misfit_factor, 1.0))


def trial_seed_sequence(base_seed: int, N: int, K: int,
                        snr_db: float | None, trial_index: int) -> np.random.SeedSequence:
    """Deterministic, well-mixed per-trial seed derivation."""
    if snr_db is None or np.isinf(snr_db):
        snr_key = _NOISELESS_KEY
    else:
        snr_key = int(np.float64(snr_db).view(np.uint64))
    return np.random.SeedSequence([base_seed, N, K, snr_key, trial_index])


def boundary_k_star(L: int, N: int) -> int:
    """Largest filter length K with L*N >= L + K*N - 1 (recovery countable)."""
    return (L * (N - 1) + 1) // N


def _run_trial(task) -> TrialOutcome:
    (L, K, N, snr_db, trial_index, base_seed, threshold, config) = task
    ss = trial_seed_sequence(base_seed, N, K, snr_db, trial_index)
    inst_ss, noise_ss, solver_ss = ss.spawn(3)
    dims = ProblemDims(L=L, K=K, N=N)
    inst = sample_instance(dims, np.random.default_rng(inst_ss))
    if snr_db is not None and not np.isinf(snr_db):
        inst = add_noise(inst, snr_db, np.random.default_rng(noise_ss))
    seed = int(solver_ss.generate_state(1)[0])
    cfg = replace(noisy_solver_config(config, snr_db, dims), rng_seed=seed)

    start = time.perf_counter()
    result = solve(inst, cfg)
    wall = time.perf_counter() - start

    rel_error = relative_outer_error(GroundTruthLift.from_instance(inst),
                                     result.solution)
    attempts = result.attempts
    if not result.converged:
        # a spent budget is recorded as a plain failure, never discarded
        rel_error = 1.0
        attempts = config.max_restarts
    return TrialOutcome(L=L, N=N, K=K, trial_index=trial_index,
                        success=rel_error < threshold, rel_error=rel_error,
                        attempts=attempts, snr_db=snr_db, seed=seed,
                        wall_time=wall)


def _map_trials(tasks, jobs: int) -> list[TrialOutcome]:
    if jobs <= 1:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(tasks) // (jobs * 8))
        return list(pool.map(_run_trial, tasks, chunksize=chunk))


def _sort_key(out: TrialOutcome):
    snr = out.snr_db
    return (out.L, out.N, out.K, snr is not None, snr if snr is not None else 0.0,
            out.trial_index)


def aggregate(outcomes) -> tuple[CellAggregate, ...]:
    """Reduce outcomes to per-cell rows; invariant to input ordering."""
    ordered = sorted(outcomes, key=_sort_key)
    groups: dict[tuple, list[TrialOutcome]] = {}
    for out in ordered:
        groups.setdefault((out.L, out.N, out.K, out.snr_db), []).append(out)
    rows = []
    for (L, N, K, snr_db), outs in groups.items():
        trials = len(outs)
        successes = sum(1 for o in outs if o.success)
        errors = [o.rel_error for o in outs]
        attempts_ok = [o.attempts for o in outs if o.success]
        rows.append(CellAggregate(
            L=L, N=N, K=K, snr_db=snr_db, trials=trials, successes=successes,
            success_prob=successes / trials if trials else None,
            mean_attempts_success=(float(np.mean(attempts_ok))
                                   if attempts_ok else None),
            mean_rel_err=float(np.mean(errors)) if errors else None,
            median_rel_err=float(np.median(errors)) if errors else None,
        ))
    return tuple(rows)


def run_phase_grid(spec: GridSpec, solver_config: SolverConfig,
                   jobs: int = 1) -> PhaseGridResult:
    """Noiseless recovery probability over the (N, K) grid.

    Each trial draws a fresh instance; failures are data (error clamped to 1,
    attempts at the restart budget), never discarded.
    """
    tasks = [(spec.L, K, N, None, t, spec.base_seed, spec.success_threshold,
              solver_config)
             for N in spec.N_values for K in spec.K_values
             for t in range(spec.trials_per_cell)]
    outcomes = _map_trials(tasks, jobs)
    boundary = tuple((N, boundary_k_star(spec.L, N)) for N in sorted(spec.N_values))
    return PhaseGridResult(outcomes=tuple(sorted(outcomes, key=_sort_key)),
                           cells=aggregate(outcomes), boundary=boundary)


def run_noise_sweep(spec: NoiseSpec, solver_config: SolverConfig,
                    jobs: int = 1) -> NoiseSweepResult:
    """Mean recovery error against SNR for each configuration.

    Fresh instance and fresh noise per trial.  The per-point solver tolerance
    follows the noise budget (see ``noisy_solver_config``).
    """
    tasks = [(L, K, N, float(snr), t, spec.base_seed, DEFAULT_SUCCESS_THRESHOLD,
              solver_config)
             for (L, K, N) in spec.configs for snr in spec.snr_db_list
             for t in range(spec.trials_per_point)]
    outcomes = _map_trials(tasks, jobs)
    points = aggregate(outcomes)

    slopes = []
    for (L, K, N) in spec.configs:
        fit_pts = [(p.snr_db, p.mean_rel_err) for p in points
                   if (p.L, p.K, p.N) == (L, K, N)
                   and p.snr_db is not None and p.snr_db >= 10.0
                   and p.mean_rel_err and p.mean_rel_err > 0.0]
        if len(fit_pts) >= 2:
            snrs = np.array([s for s, _ in fit_pts])
            logs = np.log10([e for _, e in fit_pts])
            slopes.append(((L, K, N), float(np.polyfit(snrs, logs, 1)[0])))
    return NoiseSweepResult(outcomes=tuple(sorted(outcomes, key=_sort_key)),
                            points=points, slopes_per_db=tuple(slopes))


# ---------------------------------------------------------------------------
# CSV emission (deterministic formatting; schema per output kind)
# ---------------------------------------------------------------------------

PHASE_CSV_HEADER = "L,N,K,trials,successes,success_prob,mean_attempts_success,mean_rel_err"
NOISE_CSV_HEADER = "L,N,K,snr_db,trials,mean_rel_err,median_rel_err"
BOUNDARY_CSV_HEADER = "N,K_star"


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def phase_csv(cells) -> str:
    lines = [PHASE_CSV_HEADER]
    for c in cells:
        lines.append(",".join([str(c.L), str(c.N), str(c.K), str(c.trials),
                               str(c.successes), _fmt(c.success_prob),
                               _fmt(c.mean_attempts_success), _fmt(c.mean_rel_err)]))
    return "\n".join(lines) + "\n"


def noise_csv(points) -> str:
    lines = [NOISE_CSV_HEADER]
    for c in points:
        lines.append(",".join([str(c.L), str(c.N), str(c.K), _fmt(c.snr_db),
                               str(c.trials), _fmt(c.mean_rel_err),
                               _fmt(c.median_rel_err)]))
    return "\n".join(lines) + "\n"


def boundary_csv(boundary) -> str:
    lines = [BOUNDARY_CSV_HEADER]
    for (N, k_star) in boundary:
        lines.append(f"{N},{k_star}")
    return "\n".join(lines) + "\n"

"""Command-line front end: instance generation, identifiability checks,
single solves, and the two experiment campaigns.

Exit codes: 0 success, 1 solver non-convergence (``solve`` only), 2 bad
input (malformed files, unknown flags, unusable CSVs).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (DEFAULT_SUCCESS_THRESHOLD, GridSpec, NoiseSpec,
                          boundary_csv, boundary_k_star, noise_csv, phase_csv,
                          run_noise_sweep, run_phase_grid, sample_instance)
from .identifiability import REPORT_CSV_HEADER, analyze, report_csv_row
from .model import (GroundTruthLift, ProblemDims, load_instance,
                    relative_outer_error, save_instance)
from .solver import SolverConfig, solve

PAPER_GRID_TRIALS = 100
PAPER_NOISE_TRIALS = 2800


class InputError(ValueError):
    """User-facing input problem; reported on stderr with exit code 2."""


def _int_list(text: str) -> tuple[int, ...]:
    """Parse '2:10' (inclusive range) or '2,4,8' into a tuple of ints."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"cannot parse integer list {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"cannot parse float list {text!r}") from None


def _configs_list(text: str) -> tuple[tuple[int, int, int], ...]:
    """Parse 'L,K,N;L,K,N;...' triples."""
    out = []
    for part in text.split(";"):
        values = part.split(",")
        if len(values) != 3:
            raise InputError(f"config {part!r} is not an L,K,N triple")
        try:
            out.append(tuple(int(v) for v in values))
        except ValueError:
            raise InputError(f"config {part!r} is not an L,K,N triple") from None
    return tuple(out)


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0,
                   help="base seed; all randomness derives from it (default 0)")
    p.add_argument("--out-dir", default=None,
                   help="output directory (default: $MCBD_OUT_DIR or '.')")
    return p


def _solver_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = SolverConfig()
    g = p.add_argument_group("solver options")
    g.add_argument("--tol-misfit", type=float, default=d.tol_misfit,
                   help="relative squared-misfit stopping tolerance")
    g.add_argument("--sigma0", type=float, default=d.sigma0,
                   help="initial penalty parameter")
    g.add_argument("--penalty-growth", type=float, default=d.penalty_growth,
                   help="penalty multiplier when feasibility stalls")
    g.add_argument("--feasibility-factor", type=float, default=d.feasibility_factor,
                   help="required per-iteration feasibility shrink factor")
    g.add_argument("--max-outer-iters", type=int, default=d.max_outer_iters,
                   help="total outer-iteration budget")
    g.add_argument("--lbfgs-memory", type=int, default=d.lbfgs_memory,
                   help="number of curvature pairs kept by the inner solver")
    g.add_argument("--lbfgs-grad-tol", type=float, default=d.lbfgs_grad_tol,
                   help="inner-solve gradient tolerance")
    g.add_argument("--lbfgs-max-iters", type=int, default=d.lbfgs_max_iters,
                   help="inner-solve iteration cap")
    g.add_argument("--plateau-window", type=int, default=d.plateau_window,
                   help="outer iterations inspected for a stall")
    g.add_argument("--plateau-rel-decrease", type=float, default=d.plateau_rel_decrease,
                   help="relative decrease below which the misfit counts as stalled")
    g.add_argument("--plateau-misfit-factor", type=float, default=d.plateau_misfit_factor,
                   help="stall only counts above this multiple of the tolerance")
    g.add_argument("--max-restarts", type=int, default=d.max_restarts,
                   help="random reinitializations before giving up")
    return p


def _solver_config(args, seed: int) -> SolverConfig:
    return SolverConfig(
        tol_misfit=args.tol_misfit, sigma0=args.sigma0,
        penalty_growth=args.penalty_growth,
        feasibility_factor=args.feasibility_factor,
        max_outer_iters=args.max_outer_iters,
        lbfgs_memory=args.lbfgs_memory, lbfgs_grad_tol=args.lbfgs_grad_tol,
        lbfgs_max_iters=args.lbfgs_max_iters, plateau_window=args.plateau_window,
        plateau_rel_decrease=args.plateau_rel_decrease,
        plateau_misfit_factor=args.plateau_misfit_factor,
        max_restarts=args.max_restarts, rng_seed=seed)


def _out_dir(args) -> Path:
    if args.out_dir is not None:
        path = Path(args.out_dir)
    else:
        path = Path(os.environ.get("MCBD_OUT_DIR", "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    solver_p = _solver_parent()
    parser = argparse.ArgumentParser(
        prog="mcbd",
        description="Multi-channel blind deconvolution with short filters.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common],
                       help="sample a random instance and write it to a file")
    p.add_argument("--L", type=int, required=True, help="signal length")
    p.add_argument("--K", type=int, required=True, help="filter length")
    p.add_argument("--N", type=int, required=True, help="channel count")
    p.add_argument("--snr-db", type=float, default=None,
                   help="record a noise recipe applied on load")
    p.add_argument("-o", "--output", required=True, help="instance file path")

    p = sub.add_parser("check", parents=[common],
                       help="identifiability report for an instance file")
    p.add_argument("instance", help="instance file")
    p.add_argument("--svd-tol", type=float, default=1e-8,
                   help="relative singular-value cutoff for the null space")
    p.add_argument("--csv", default=None, help="also write the report as a CSV row")

    p = sub.add_parser("solve", parents=[common, solver_p],
                       help="solve a single instance")
    p.add_argument("instance", help="instance file")
    p.add_argument("--trace", default=None,
                   help="write a per-outer-iteration trace CSV")

    p = sub.add_parser("phase", parents=[common, solver_p],
                       help="noiseless phase-transition grid")
    p.add_argument("--L", type=int, default=32)
    p.add_argument("--N", default="2:10", help="channel counts, e.g. 2:10 or 2,4,8")
    p.add_argument("--K", default="1:32", help="filter lengths, e.g. 1:32 or 2,4,8")
    p.add_argument("--trials", type=int, default=20, help="trials per cell")
    p.add_argument("--success-threshold", type=float,
                   default=DEFAULT_SUCCESS_THRESHOLD)
    p.add_argument("--paper-scale", action="store_true",
                   help=f"use {PAPER_GRID_TRIALS} trials per cell (long run)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--plots", action="store_true", help="render heatmaps")

    p = sub.add_parser("noise", parents=[common, solver_p],
                       help="noise-robustness sweep over SNR")
    p.add_argument("--snr", default="0,10,20,30,40,50,60,70,80",
                   help="SNR points in dB, comma separated")
    p.add_argument("--configs", default="32,8,4;32,8,6;32,8,8",
                   help="semicolon-separated L,K,N triples")
    p.add_argument("--trials", type=int, default=20, help="trials per point")
    p.add_argument("--paper-scale", action="store_true",
                   help=f"use {PAPER_NOISE_TRIALS} trials per point (very long run)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--plots", action="store_true", help="render the error curve")
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    dims = ProblemDims(L=args.L, K=args.K, N=args.N)
    sample_ss, noise_ss = np.random.SeedSequence(args.seed).spawn(2)
    inst = sample_instance(dims, np.random.default_rng(sample_ss))
    noise_seed = int(noise_ss.generate_state(1)[0]) if args.snr_db is not None else None
    save_instance(inst, args.output, snr_db=args.snr_db, noise_seed=noise_seed)
    print(f"wrote {args.output} (L={dims.L} K={dims.K} N={dims.N}"
          + (f", noise {args.snr_db} dB" if args.snr_db is not None else "") + ")")
    return 0


def _yesno(flag: bool) -> str:
    return "yes" if flag else "no"


def _cmd_check(args) -> int:
    inst = load_instance(args.instance)
    report = analyze(inst, svd_rel_tol=args.svd_tol)
    dims = inst.dims
    print(f"instance {args.instance}: L={dims.L} K={dims.K} N={dims.N}")
    print(f"  information count ok   : {_yesno(report.info_count_ok)} "
          f"(L*N={dims.L * dims.N}, L+K*N-1={dims.L + dims.K * dims.N - 1})")
    print(f"  condition 1 (top tap)  : {_yesno(report.condition1_ok)}")
    print(f"  condition 2 (coprime)  : {_yesno(report.condition2_ok)}")
    print(f"  fourier zero free      : {_yesno(report.fourier_zero_free)}")
    print(f"  nullspace dimension    : {report.nullspace_dim}")
    sig = ", ".join(f"{v:.3e}" for v in report.smallest_singular_values)
    print(f"  smallest singular vals : {sig}")
    print(f"  ambiguity residual     : {report.ambiguity_vector_residual:.3e}")
    verdict = (report.nullspace_dim == 1)
    print(f"  well-posed             : {_yesno(verdict)}")
    if args.csv:
        Path(args.csv).write_text(REPORT_CSV_HEADER + "\n"
                                  + report_csv_row(report) + "\n")
        print(f"wrote {args.csv}")
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    config = _solver_config(args, args.seed)
    result = solve(inst, config, collect_trace=args.trace is not None)
    error = relative_outer_error(GroundTruthLift.from_instance(inst),
                                 result.solution)
    obs_sq = float(np.sum(np.abs(inst.observations_fourier) ** 2))
    print(f"converged        : {_yesno(result.converged)}")
    print(f"rel_outer_error  : {error:.6e}")
    print(f"final_misfit_rel : {result.final_misfit / obs_sq:.6e}")
    print(f"attempts         : {result.attempts}")
    print(f"outer_iterations : {result.outer_iters_total}")
    if args.trace is not None:
        lines = ["attempt,outer_iter,misfit,sigma,grad_norm"]
        for attempt, outer, mis, sigma, grad in result.trace:
            lines.append(f"{attempt},{outer},{mis:.12g},{sigma:.12g},{grad:.12g}")
        Path(args.trace).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.trace}")
    return 0 if result.converged else 1


def _cmd_phase(args) -> int:
    trials = PAPER_GRID_TRIALS if args.paper_scale else args.trials
    spec = GridSpec(L=args.L, N_values=_int_list(args.N), K_values=_int_list(args.K),
                    trials_per_cell=trials, success_threshold=args.success_threshold,
                    base_seed=args.seed)
    config = _solver_config(args, args.seed)
    result = run_phase_grid(spec, config, jobs=args.jobs)
    out = _out_dir(args)
    grid_path = out / "phase_grid.csv"
    bound_path = out / "boundary.csv"
    grid_path.write_text(phase_csv(result.cells))
    bound_path.write_text(boundary_csv(result.boundary))
    print(f"wrote {grid_path} ({len(result.cells)} cells, {trials} trials each)")
    print(f"wrote {bound_path}")
    if args.plots:
        for path in render_plots([grid_path], out):
            print(f"wrote {path}")
    return 0


def _cmd_noise(args) -> int:
    trials = PAPER_NOISE_TRIALS if args.paper_scale else args.trials
    spec = NoiseSpec(snr_db_list=_float_list(args.snr),
                     configs=_configs_list(args.configs),
                     trials_per_point=trials, base_seed=args.seed)
    config = _solver_config(args, args.seed)
    result = run_noise_sweep(spec, config, jobs=args.jobs)
    out = _out_dir(args)
    path = out / "noise_sweep.csv"
    path.write_text(noise_csv(result.points))
    print(f"wrote {path} ({len(result.points)} points, {trials} trials each)")
    for (L, K, N), slope in result.slopes_per_db:
        print(f"  (L={L},K={K},N={N}) slope of log10(err) vs SNR: {slope:+.4f} per dB")
    if args.plots:
        for p in render_plots([path], out):
            print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text().strip()
    if not text:
        raise InputError(f"{path}: empty CSV")
    lines = text.splitlines()
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise InputError(f"{path}: no data rows")
    return header, rows


def _column(header, rows, name, path, convert=float):
    if name not in header:
        raise InputError(f"{path}: missing column {name!r}")
    idx = header.index(name)
    out = []
    for row in rows:
        cell = row[idx] if idx < len(row) else ""
        out.append(convert(cell) if cell != "" else None)
    return out


def _render_phase(path, out_dir) -> list:
    header, rows = _read_csv(path)
    Ls = _column(header, rows, "L", path, int)
    Ns = _column(header, rows, "N", path, int)
    Ks = _column(header, rows, "K", path, int)
    prob = _column(header, rows, "success_prob", path)
    attempts = _column(header, rows, "mean_attempts_success", path)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n_axis = sorted(set(Ns))
    k_axis = sorted(set(Ks))
    L = Ls[0]
    shape = (len(k_axis), len(n_axis))
    prob_img = np.full(shape, np.nan)
    att_img = np.full(shape, np.nan)
    for n, k, p, a in zip(Ns, Ks, prob, attempts):
        i, j = k_axis.index(k), n_axis.index(n)
        prob_img[i, j] = np.nan if p is None else p
        att_img[i, j] = np.nan if a is None else a

    written = []
    curve_n = np.array(n_axis, dtype=float)
    curve_k = np.array([boundary_k_star(L, n) for n in n_axis], dtype=float)
    for img, label, fname, cmap in [
            (prob_img, "empirical success probability", "phase_success.png", "gray"),
            (att_img, "mean attempts among successes", "phase_attempts.png",
             "gray_r")]:
        fig, ax = plt.subplots(figsize=(6, 5))
        masked = np.ma.masked_invalid(img)
        mesh = ax.pcolormesh(n_axis, k_axis, masked, cmap=cmap, shading="nearest")
        ax.plot(curve_n, curve_k, "r-", linewidth=2,
                label="information-theoretic limit")
        ax.set_xlabel("channels N")
        ax.set_ylabel("filter length K")
        ax.set_title(f"{label} (L={L})")
        ax.legend(loc="upper left")
        fig.colorbar(mesh, ax=ax)
        out_path = Path(out_dir) / fname
        fig.savefig(out_path, dpi=120)
        plt.close(fig)
        written.append(out_path)
    return written


def _render_noise(path, out_dir) -> list:
    header, rows = _read_csv(path)
    Ns = _column(header, rows, "N", path, int)
    Ks = _column(header, rows, "K", path, int)
    Ls = _column(header, rows, "L", path, int)
    snrs = _column(header, rows, "snr_db", path)
    means = _column(header, rows, "mean_rel_err", path)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for key in sorted(set(zip(Ls, Ks, Ns))):
        xs = [s for (l, k, n), s in zip(zip(Ls, Ks, Ns), snrs) if (l, k, n) == key]
        ys = [m for (l, k, n), m in zip(zip(Ls, Ks, Ns), means) if (l, k, n) == key]
        pairs = sorted((x, y) for x, y in zip(xs, ys) if x is not None and y is not None)
        ax.semilogy([x for x, _ in pairs], [y for _, y in pairs], "o-",
                    label=f"L={key[0]}, K={key[1]}, N={key[2]}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("mean relative outer-product error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    out_path = Path(out_dir) / "noise_error.png"
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return [out_path]


def render_plots(csv_paths, out_dir) -> list:
    """Render figure files from campaign CSVs, dispatching on the header.

    Grid CSVs produce the success and attempts heatmaps with the
    information-theoretic boundary overlaid; noise CSVs produce the
    error-versus-SNR chart with a logarithmic error axis.
    """
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    written = []
    for path in csv_paths:
        if not Path(path).exists():
            raise InputError(f"{path}: no such file")
        header = Path(path).read_text().splitlines()
        first = header[0] if header else ""
        if "snr_db" in first.split(","):
            written.extend(_render_noise(path, out_dir))
        elif "success_prob" in first.split(","):
            written.extend(_render_phase(path, out_dir))
        else:
            raise InputError(f"{path}: unrecognized CSV schema")
    return written


_COMMANDS = {
    "gen": _cmd_gen,
    "check": _cmd_check,
    "solve": _cmd_solve,
    "phase": _cmd_phase,
    "noise": _cmd_noise,
}


def run(argv) -> int:
    """Parse ``argv`` (without the program name) and execute one subcommand."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        # every domain error (format, dimension, degenerate input) is a
        # ValueError subclass; solver failures never raise
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

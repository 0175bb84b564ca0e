"""Well-posedness certification for deconvolution instances.

An instance is locally well-posed exactly when the misfit Hessian at ground
truth has a one-dimensional null space (the unavoidable scalar rescaling
between signal and filters).  The Hessian equals J*J for the Jacobian J of
the Fourier-domain bilinear map, so the null-space dimension is read off the
SVD of J.  Two cheap filter conditions predict the same verdict: some channel
must use the last tap of the support, and the channel polynomials must not
share a common root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .fourier import dft, pad
from .model import ProblemDims, ProblemInstance

# trailing polynomial coefficients below this are treated as absent when
# determining the effective degree
_DEGREE_TRIM_TOL = 1e-12


class DegenerateChannelError(ValueError):
    """Raised when a channel has all-zero coefficients."""


@dataclass(frozen=True)
class FilterPolynomial:
    """A channel viewed as the polynomial sum_k coeffs[k] z^k."""

    coeffs: np.ndarray   # ascending, untrimmed (length K)
    roots: np.ndarray    # complex roots of the effective-degree polynomial

    @classmethod
    def from_coeffs(cls, coeffs) -> "FilterPolynomial":
        coeffs = np.asarray(coeffs, dtype=float)
        trimmed = npoly.polytrim(coeffs, tol=_DEGREE_TRIM_TOL)
        if trimmed.size == 1 and abs(trimmed[0]) <= _DEGREE_TRIM_TOL:
            raise DegenerateChannelError("all-zero channel polynomial")
        if trimmed.size == 1:
            roots = np.empty(0, dtype=complex)
        else:
            # companion-matrix eigenvalues
            roots = npoly.polyroots(trimmed)
        return cls(coeffs=coeffs, roots=roots)

    @property
    def degree(self) -> int:
        return max(len(self.roots), 0)


@dataclass(frozen=True)
class IdentifiabilityReport:
    info_count_ok: bool
    condition1_ok: bool
    condition2_ok: bool
    nullspace_dim: int
    smallest_singular_values: tuple[float, ...]
    ambiguity_vector_residual: float
    fourier_zero_free: bool


REPORT_CSV_HEADER = ("info_count_ok,cond1,cond2,nullspace_dim,"
                     "sigma_min1,sigma_min2,sigma_min3,fourier_zero_free")


def report_csv_row(report: IdentifiabilityReport) -> str:
    sig = list(report.smallest_singular_values)
    while len(sig) < 3:
        sig.append(float("nan"))
    return ",".join([
        str(int(report.info_count_ok)),
        str(int(report.condition1_ok)),
        str(int(report.condition2_ok)),
        str(report.nullspace_dim),
        f"{sig[0]:.12g}", f"{sig[1]:.12g}", f"{sig[2]:.12g}",
        str(int(report.fourier_zero_free)),
    ])


def info_count_ok(dims: ProblemDims) -> bool:
    """Observation count supports a one-dimensional ambiguity: L*N >= L + K*N - 1."""
    return dims.L * dims.N >= dims.L + dims.K * dims.N - 1


def build_jacobian(inst: ProblemInstance) -> np.ndarray:
    """Jacobian of the Fourier-domain bilinear map at the ground truth.

    Shape (L*N, L + K*N).  Block row n holds diag of the padded channel
    spectrum in the first L columns and (signal spectrum) * F_K in channel
    block n of the remainder, everything scaled by sqrt(L) so that J is the
    exact linearization of ``forward`` in the (signal spectrum, filters)
    variables.
    """
    L, K, N = inst.dims.L, inst.dims.K, inst.dims.N
    root_l = np.sqrt(L)
    s_hat = dft(inst.signal)
    w_hat = dft(pad(inst.channels, L))          # (N, L)
    f_k = dft(pad(np.eye(K), L)).T              # (L, K), first K columns of F
    right = root_l * s_hat[:, None] * f_k
    jac = np.zeros((L * N, L + K * N), dtype=complex)
    rows = np.arange(L)
    for n in range(N):
        jac[n * L + rows, rows] = root_l * w_hat[n]
        jac[n * L:(n + 1) * L, L + n * K:L + (n + 1) * K] = right
    return jac


def nullspace_dim(jac: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Numerical null-space dimension of J from its singular values.

    Counts directions with singular value below ``rel_tol`` times the largest
    one; columns beyond the row count are null by construction.  SVD
    non-convergence propagates as ``numpy.linalg.LinAlgError``.
    """
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals.size == 0 or svals[0] <= 0.0:
        return jac.shape[1]
    rank = int(np.count_nonzero(svals > rel_tol * svals[0]))
    return jac.shape[1] - rank


def ambiguity_vector(inst: ProblemInstance) -> np.ndarray:
    """The exact null direction produced by scalar rescaling.

    Length L + K*N: the negated signal spectrum stacked over the
    concatenated filters.
    """
    return np.concatenate([-dft(inst.signal),
                           inst.channels.reshape(-1).astype(complex)])


def condition1(channels: np.ndarray, tol_abs: float = 1e-12) -> bool:
    """True iff some channel has a nonzero last tap (full support on top)."""
    channels = np.atleast_2d(np.asarray(channels, dtype=float))
    return bool(np.max(np.abs(channels[:, -1])) > tol_abs)


def condition2(channels: np.ndarray, tol_root: float = 1e-7) -> bool:
    """True iff the channel polynomials share no common root.

    Roots come from companion-matrix eigenvalues after trimming negligible
    trailing coefficients; a root is common when every other polynomial has
    a root within ``tol_root`` of it (absolute distance in the complex
    plane).  A single channel with K >= 2 is reported not coprime by
    convention; K == 1 constants are vacuously coprime.
    """
    channels = np.atleast_2d(np.asarray(channels, dtype=float))
    polys = [FilterPolynomial.from_coeffs(row) for row in channels]
    if len(polys) == 1:
        return channels.shape[1] == 1
    base = polys[0]
    others = polys[1:]
    for root in base.roots:
        shared = all(p.roots.size and np.min(np.abs(p.roots - root)) <= tol_root
                     for p in others)
        if shared:
            return False
    return True


def analyze(inst: ProblemInstance, svd_rel_tol: float = 1e-8,
            top_tap_tol: float = 1e-12,
            root_tol: float = 1e-7) -> IdentifiabilityReport:
    """Full well-posedness report for an instance."""
    jac = build_jacobian(inst)
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals.size == 0 or svals[0] <= 0.0:
        ndim = jac.shape[1]
    else:
        ndim = jac.shape[1] - int(np.count_nonzero(svals > svd_rel_tol * svals[0]))
    smallest = tuple(float(v) for v in np.sort(svals)[:3])

    vec = ambiguity_vector(inst)
    residual = float(np.linalg.norm(jac @ vec) / np.linalg.norm(vec))

    s_hat = np.abs(dft(inst.signal))
    zero_free = bool(np.min(s_hat) > 1e-10 * np.max(s_hat))

    return IdentifiabilityReport(
        info_count_ok=info_count_ok(inst.dims),
        condition1_ok=condition1(inst.channels, top_tap_tol),
        condition2_ok=condition2(inst.channels, root_tol),
        nullspace_dim=ndim,
        smallest_singular_values=smallest,
        ambiguity_vector_residual=residual,
        fourier_zero_free=zero_free,
    )


def make_counterexample(dims: ProblemDims, kind: str,
                        rng: np.random.Generator,
                        shared_root_at: float = 0.5) -> np.ndarray:
    """Random channel sets violating one well-posedness condition.

    ``no_top_tap``: Gaussian channels with the last tap forced to zero, so no
    polynomial reaches full degree.  ``shared_root``: Gaussian polynomials of
    degree K-2, each multiplied by (z - shared_root_at), so all channels
    share that root.  Both need K >= 2.
    """
    if dims.K < 2:
        raise ValueError(f"counterexamples need K >= 2, got K={dims.K}")
    if kind == "no_top_tap":
        channels = rng.standard_normal((dims.N, dims.K))
        channels[:, -1] = 0.0
        return channels
    if kind == "shared_root":
        factor = np.array([-shared_root_at, 1.0])
        channels = np.zeros((dims.N, dims.K))
        for n in range(dims.N):
            base = rng.standard_normal(dims.K - 1)
            channels[n] = npoly.polymul(factor, base)
        return channels
    raise ValueError(f"unknown counterexample kind: {kind!r}")

"""Problem instances and the bilinear observation operator.

An instance couples an L-sample signal with N short filters of K taps each;
the observations are the N circular convolutions, kept both in the time and
in the Fourier domain.  The rank-1 lift of a candidate pair ``(p, q)`` is
never materialized: ``forward`` and the two adjoints evaluate the lifted
linear operator directly on the factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fourier import DimensionError, circ_conv, dft, idft, pad


class DegenerateTruthError(ValueError):
    """Raised when the ground-truth lift has zero Frobenius norm."""


class InstanceFormatError(ValueError):
    """Raised on malformed instance files; message carries the line number."""


@dataclass(frozen=True)
class ProblemDims:
    """Dimensions of a deconvolution problem: signal length L, filter
    support K, channel count N."""

    L: int
    K: int
    N: int

    def __post_init__(self):
        if not (1 <= self.K <= self.L):
            raise DimensionError(f"need 1 <= K <= L, got K={self.K}, L={self.L}")
        if self.N < 1:
            raise DimensionError(f"need N >= 1, got N={self.N}")


@dataclass(frozen=True)
class ProblemInstance:
    """Ground truth plus (possibly noisy) observations."""

    dims: ProblemDims
    signal: np.ndarray            # (L,) real
    channels: np.ndarray          # (N, K) real
    observations: np.ndarray      # (N, L) real
    observations_fourier: np.ndarray  # (N, L) complex


@dataclass(frozen=True)
class CandidateSolution:
    """Factor pair of the rank-1 lift: signal estimate p and filters q."""

    p: np.ndarray  # (L,) real
    q: np.ndarray  # (N, K) real

    @property
    def q_concat(self) -> np.ndarray:
        return self.q.reshape(-1)


@dataclass(frozen=True)
class GroundTruthLift:
    """Summary of the ground-truth outer product needed by the error metric."""

    signal: np.ndarray          # (L,)
    channels_concat: np.ndarray  # (K*N,)
    frobenius_sq: float

    @classmethod
    def from_instance(cls, inst: ProblemInstance) -> "GroundTruthLift":
        s = inst.signal
        h = inst.channels.reshape(-1)
        return cls(signal=s, channels_concat=h,
                   frobenius_sq=float(s @ s) * float(h @ h))


def make_instance(dims: ProblemDims, signal, channels,
                  observations=None) -> ProblemInstance:
    """Build an instance; observations default to the noiseless convolutions.

    Passing ``observations`` overrides the time-domain data (used for noise
    injection); the Fourier-domain copy is always recomputed.
    """
    signal = np.array(signal, dtype=float)
    channels = np.atleast_2d(np.array(channels, dtype=float))
    if signal.shape != (dims.L,):
        raise DimensionError(f"signal shape {signal.shape} != ({dims.L},)")
    if channels.shape != (dims.N, dims.K):
        raise DimensionError(
            f"channels shape {channels.shape} != ({dims.N}, {dims.K})")
    if observations is None:
        padded = pad(channels, dims.L)
        observations = np.stack([circ_conv(signal, padded[n])
                                 for n in range(dims.N)])
    else:
        observations = np.array(observations, dtype=float)
        if observations.shape != (dims.N, dims.L):
            raise DimensionError(
                f"observations shape {observations.shape} != ({dims.N}, {dims.L})")
    return ProblemInstance(dims=dims, signal=signal, channels=channels,
                           observations=observations,
                           observations_fourier=dft(observations))


def forward(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Fourier-domain observations of the factor pair.

    Returns the (N, L) complex array of sqrt(L) * dft(p) * dft(pad(q_n));
    bilinear in (p, q).
    """
    p = np.asarray(p, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    length = p.shape[-1]
    w_hat = dft(pad(q, length))
    return np.sqrt(length) * dft(p)[None, :] * w_hat


def adjoint_p(r: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Adjoint of ``p -> forward(p, q)`` under the real pairing.

    Satisfies Re<forward(p, q), r> == dot(p, adjoint_p(r, q)).
    """
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    length = r.shape[-1]
    w_hat = dft(pad(q, length))
    return np.sqrt(length) * idft((np.conj(w_hat) * r).sum(axis=0)).real


def adjoint_q(r: np.ndarray, p: np.ndarray, k: int) -> np.ndarray:
    """Adjoint of ``q -> forward(p, q)`` for K-tap filters.

    Satisfies Re<forward(p, q), r> == dot(q.ravel(), adjoint_q(r, p, K).ravel()).
    """
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    p = np.asarray(p, dtype=float)
    length = p.shape[-1]
    if not 1 <= k <= length:
        raise DimensionError(f"need 1 <= k <= L, got k={k}, L={length}")
    back = idft(np.conj(dft(p))[None, :] * r)
    return np.sqrt(length) * back[:, :k].real


def relative_outer_error(truth: GroundTruthLift, cand: CandidateSolution) -> float:
    """Relative Frobenius error of the candidate outer product.

    Evaluated through the norm/inner-product expansion

        |X0 - p q^T|_F^2 = |s|^2 |h|^2 - 2 <s,p><h,q> + |p|^2 |q|^2

    so the L x KN matrices never exist; the value is invariant under the
    scalar rebalancing (p, q) -> (a p, q / a).
    """
    if truth.frobenius_sq <= 0.0:
        raise DegenerateTruthError("ground-truth lift has zero norm")
    s, h = truth.signal, truth.channels_concat
    p, qc = cand.p, cand.q_concat
    err_sq = (truth.frobenius_sq
              - 2.0 * float(s @ p) * float(h @ qc)
              + float(p @ p) * float(qc @ qc))
    return float(np.sqrt(max(err_sq, 0.0) / truth.frobenius_sq))


# ---------------------------------------------------------------------------
# instance file format (line-oriented text):
#   line 1: "L K N"
#   line 2: L signal values
#   lines 3 .. N+2: K values per channel
#   optional last line: "NOISE <snr_db> <seed>"
# Observations are recomputed on load; the NOISE line re-injects noise
# deterministically from the recorded seed.
# ---------------------------------------------------------------------------

def save_instance(inst: ProblemInstance, path, snr_db: float | None = None,
                  noise_seed: int | None = None) -> None:
    """Write ground truth to ``path``; optionally record a noise recipe."""
    lines = [f"{inst.dims.L} {inst.dims.K} {inst.dims.N}",
             " ".join(repr(float(v)) for v in inst.signal)]
    for row in inst.channels:
        lines.append(" ".join(repr(float(v)) for v in row))
    if snr_db is not None:
        lines.append(f"NOISE {float(snr_db)!r} {0 if noise_seed is None else noise_seed}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_floats(text: str, count: int, lineno: int, what: str) -> np.ndarray:
    parts = text.split()
    if len(parts) != count:
        raise InstanceFormatError(
            f"line {lineno}: expected {count} {what} values, got {len(parts)}")
    try:
        return np.array([float(v) for v in parts])
    except ValueError as exc:
        raise InstanceFormatError(f"line {lineno}: {exc}") from None


def load_instance(path) -> ProblemInstance:
    """Parse an instance file; observations are rebuilt from the ground truth."""
    raw = Path(path).read_text().splitlines()
    lines = [(i + 1, ln) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise InstanceFormatError("line 1: empty instance file")
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 3:
        raise InstanceFormatError(f"line {lineno}: header must be 'L K N'")
    try:
        L, K, N = (int(v) for v in parts)
    except ValueError:
        raise InstanceFormatError(
            f"line {lineno}: non-integer dimensions in header") from None
    try:
        dims = ProblemDims(L=L, K=K, N=N)
    except DimensionError as exc:
        raise InstanceFormatError(f"line {lineno}: {exc}") from None

    body = lines[1:]
    if len(body) < 1 + N:
        raise InstanceFormatError(
            f"line {lines[-1][0]}: expected signal plus {N} channel lines")
    lineno, text = body[0]
    signal = _parse_floats(text, L, lineno, "signal")
    channels = []
    for n in range(N):
        lineno, text = body[1 + n]
        channels.append(_parse_floats(text, K, lineno, f"channel {n}"))

    noise = None
    rest = body[1 + N:]
    if rest:
        lineno, text = rest[0]
        parts = text.split()
        if parts[0] != "NOISE" or len(parts) != 3:
            raise InstanceFormatError(
                f"line {lineno}: expected 'NOISE <snr_db> <seed>'")
        if len(rest) > 1:
            raise InstanceFormatError(
                f"line {rest[1][0]}: trailing content after NOISE line")
        try:
            noise = (float(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise InstanceFormatError(f"line {lineno}: {exc}") from None

    inst = make_instance(dims, signal, np.stack(channels))
    if noise is not None:
        from .experiments import add_noise  # deferred: experiments imports model
        snr_db, seed = noise
        inst = add_noise(inst, snr_db, np.random.default_rng(seed))
    return inst

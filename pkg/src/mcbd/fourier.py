"""Unitary DFT, short-filter padding and circular convolution/correlation.

All transforms use the unitary normalization (1/sqrt(L) in both directions),
so ``dft`` preserves the l2 norm.  The convolution theorem then carries an
explicit sqrt(L) factor::

    dft(circ_conv(a, b)) == sqrt(L) * dft(a) * dft(b)

Functions operate on the last axis, so a stack of N sequences of length L can
be transformed in one call.
"""

import numpy as np

# imaginary residue above this fraction of the result norm means the inputs
# were not really real
_IMAG_RTOL = 1e-10


class DimensionError(ValueError):
    """Raised when sequence lengths are inconsistent."""


def dft(x: np.ndarray) -> np.ndarray:
    """Unitary DFT of ``x`` along the last axis."""
    x = np.asarray(x)
    return np.fft.fft(x, axis=-1) / np.sqrt(x.shape[-1])


def idft(x: np.ndarray) -> np.ndarray:
    """Inverse unitary DFT of ``x`` along the last axis."""
    x = np.asarray(x)
    return np.fft.ifft(x, axis=-1) * np.sqrt(x.shape[-1])


def dft_direct(x: np.ndarray) -> np.ndarray:
    """Unitary DFT by the direct O(L^2) sum (1-D only).

    Slow reference path; kept as the always-available fallback and as the
    oracle the FFT route is tested against.
    """
    x = np.asarray(x)
    length = x.shape[-1]
    k = np.arange(length)
    kernel = np.exp(-2j * np.pi * np.outer(k, k) / length)
    return kernel @ x.astype(complex) / np.sqrt(length)


def idft_direct(x: np.ndarray) -> np.ndarray:
    """Inverse unitary DFT by the direct O(L^2) sum (1-D only)."""
    x = np.asarray(x)
    length = x.shape[-1]
    k = np.arange(length)
    kernel = np.exp(2j * np.pi * np.outer(k, k) / length)
    return kernel @ x.astype(complex) / np.sqrt(length)


def pad(h: np.ndarray, length: int) -> np.ndarray:
    """Zero-pad filter coefficients to ``length`` samples along the last axis.

    Realizes the embedding of a K-tap filter into the ambient signal space
    (the filter occupies the first K samples).
    """
    h = np.asarray(h)
    k = h.shape[-1]
    if k > length:
        raise DimensionError(f"filter length {k} exceeds ambient length {length}")
    if k == length:
        return h.copy()
    widths = [(0, 0)] * (h.ndim - 1) + [(0, length - k)]
    return np.pad(h, widths)


def _as_equal_length(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return a, b


def _real_part(z: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(z)
    resid = np.linalg.norm(z.imag)
    assert resid <= _IMAG_RTOL * max(norm, 1e-300), "imaginary residue too large"
    return z.real.copy()


def circ_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular convolution of two equal-length real sequences."""
    a, b = _as_equal_length(a, b)
    length = a.shape[-1]
    out = idft(np.sqrt(length) * dft(a) * dft(b))
    if np.isrealobj(a) and np.isrealobj(b):
        return _real_part(out)
    return out


def circ_corr(y: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Adjoint of ``x -> circ_conv(x, b)`` applied to ``y``.

    Satisfies ``dot(circ_conv(x, b), y) == dot(x, circ_corr(y, b))`` for all
    real x, y.
    """
    y, b = _as_equal_length(y, b)
    length = y.shape[-1]
    out = idft(np.sqrt(length) * dft(y) * np.conj(dft(b)))
    if np.isrealobj(y) and np.isrealobj(b):
        return _real_part(out)
    return out

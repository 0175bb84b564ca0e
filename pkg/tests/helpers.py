"""Independent oracles used across the test suite.

Everything here recomputes results from first principles (direct sums,
dense matrices, finite differences) so library fast paths are checked
against a path they do not share code with.
"""

import numpy as np


def circ_conv_sum(a, b):
    """Circular convolution by the direct O(L^2) wrap-around sum."""
    a = np.asarray(a)
    b = np.asarray(b)
    L = len(a)
    out = np.zeros(L, dtype=np.result_type(a, b))
    for j in range(L):
        for i in range(L):
            out[j] += a[i] * b[(j - i) % L]
    return out


def circ_corr_sum(y, b):
    """Adjoint of circular convolution by the direct sum."""
    y = np.asarray(y)
    b = np.asarray(b)
    L = len(y)
    out = np.zeros(L, dtype=np.result_type(y, b))
    for i in range(L):
        for j in range(L):
            out[i] += b[(j - i) % L] * y[j]
    return out


def unitary_dft_matrix(L):
    k = np.arange(L)
    return np.exp(-2j * np.pi * np.outer(k, k) / L) / np.sqrt(L)


def dense_lifted_operator(L, K, N):
    """Materialize the lifted linear operator as an (L*N, L*K*N) matrix.

    Acts on vec(p q^T) with q the concatenated filters; row (n, l) carries
    sqrt(L) * F[l, j] * F_K[l, k] at column (j, n*K + k).
    """
    F = unitary_dft_matrix(L)
    FK = F[:, :K]
    A = np.zeros((L * N, L * K * N), dtype=complex)
    for n in range(N):
        for l in range(L):
            row = n * L + l
            for j in range(L):
                for k in range(K):
                    col = j * (K * N) + n * K + k
                    A[row, col] = np.sqrt(L) * F[l, j] * FK[l, k]
    return A


def bilinear_map(p_hat, q, L):
    """Fourier-domain bilinear map evaluated from first principles.

    Accepts a complex spectrum ``p_hat`` (length L) and filters ``q``
    ((N, K), may be complex); returns the (N, L) stack of observations.
    """
    q = np.atleast_2d(q)
    F = unitary_dft_matrix(L)
    FK = F[:, :q.shape[1]]
    q_hat = q @ FK.T
    return np.sqrt(L) * p_hat[None, :] * q_hat


def fd_gradient(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        g[i] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g

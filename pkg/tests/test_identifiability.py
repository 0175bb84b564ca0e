import numpy as np
import pytest

from mcbd.fourier import dft, pad
from mcbd.identifiability import (DegenerateChannelError, FilterPolynomial,
                                  ambiguity_vector, analyze, build_jacobian,
                                  condition1, condition2, info_count_ok,
                                  make_counterexample, nullspace_dim,
                                  report_csv_row)
from mcbd.model import ProblemDims, make_instance
from helpers import bilinear_map, unitary_dft_matrix


def _gaussian_instance(L, K, N, seed):
    rng = np.random.default_rng(seed)
    return make_instance(ProblemDims(L, K, N), rng.standard_normal(L),
                         rng.standard_normal((N, K)))


@pytest.mark.parametrize("L,K,N,expected", [
    (32, 16, 2, True),   # 64 >= 63
    (32, 32, 2, False),  # 64 <  95
    (32, 28, 8, True),   # 256 >= 255
])
def test_info_count(L, K, N, expected):
    assert info_count_ok(ProblemDims(L, K, N)) is expected


class TestJacobian:
    def test_single_full_length_channel_structure(self):
        # N = 1, K = L: two square blocks, diag of the channel spectrum and
        # the scaled signal spectrum times the full DFT matrix
        L = 8
        inst = _gaussian_instance(L, L, 1, seed=1)
        jac = build_jacobian(inst)
        assert jac.shape == (L, 2 * L)
        w_hat = dft(inst.channels[0])
        s_hat = dft(inst.signal)
        F = unitary_dft_matrix(L)
        assert np.allclose(jac[:, :L], np.sqrt(L) * np.diag(w_hat), atol=1e-12)
        assert np.allclose(jac[:, L:], np.sqrt(L) * s_hat[:, None] * F, atol=1e-12)

    def test_annihilates_ambiguity_vector(self):
        inst = _gaussian_instance(16, 4, 3, seed=2)
        jac = build_jacobian(inst)
        vec = ambiguity_vector(inst)
        assert np.linalg.norm(jac @ vec) <= 1e-10 * np.linalg.norm(vec)

    def test_matches_finite_difference_jacobian(self):
        # central differences of the bilinear map at the ground truth
        L, K, N = 4, 2, 2
        inst = _gaussian_instance(L, K, N, seed=3)
        jac = build_jacobian(inst)
        s_hat = dft(inst.signal)
        h = inst.channels
        eps = 1e-6
        fd = np.zeros_like(jac)
        for j in range(L + K * N):
            dp = np.zeros(L, dtype=complex)
            dq = np.zeros((N, K))
            if j < L:
                dp[j] = 1.0
            else:
                dq[(j - L) // K, (j - L) % K] = 1.0
            plus = bilinear_map(s_hat + eps * dp, h + eps * dq, L)
            minus = bilinear_map(s_hat - eps * dp, h - eps * dq, L)
            fd[:, j] = ((plus - minus) / (2 * eps)).reshape(-1)
        assert np.linalg.norm(fd - jac) <= 1e-6 * np.linalg.norm(jac)

    def test_hessian_equals_gram_of_jacobian(self):
        # second directional derivative of the misfit at ground truth matches
        # the quadratic form of J*J, for random complex directions
        L, K, N = 4, 2, 2
        inst = _gaussian_instance(L, K, N, seed=4)
        jac = build_jacobian(inst)
        gram = jac.conj().T @ jac
        s_hat = dft(inst.signal)
        y_hat = inst.observations_fourier

        def misfit(p_hat, q):
            r = bilinear_map(p_hat, q, L) - y_hat
            return 0.5 * float(np.sum((np.conj(r) * r).real))

        rng = np.random.default_rng(5)
        eps = 1e-4
        for _ in range(10):
            v = rng.standard_normal(L + K * N) + 1j * rng.standard_normal(L + K * N)
            vp, vq = v[:L], v[L:].reshape(N, K)
            fd = (misfit(s_hat + eps * vp, inst.channels + eps * vq)
                  + misfit(s_hat - eps * vp, inst.channels - eps * vq)
                  - 2.0 * misfit(s_hat, inst.channels)) / eps ** 2
            quad = float((v.conj() @ (gram @ v)).real)
            assert fd == pytest.approx(quad, rel=1e-4)


class TestNullspaceDim:
    def test_gaussian_instance_is_one(self):
        for seed in range(5):
            inst = _gaussian_instance(8, 3, 3, seed=10 + seed)
            assert nullspace_dim(build_jacobian(inst)) == 1

    def test_no_top_tap_at_least_two(self):
        rng = np.random.default_rng(20)
        dims = ProblemDims(16, 4, 3)
        channels = make_counterexample(dims, "no_top_tap", rng)
        inst = make_instance(dims, rng.standard_normal(16), channels)
        assert nullspace_dim(build_jacobian(inst)) >= 2

    def test_shared_root_at_least_two(self):
        rng = np.random.default_rng(21)
        dims = ProblemDims(16, 4, 3)
        channels = make_counterexample(dims, "shared_root", rng, shared_root_at=0.5)
        inst = make_instance(dims, rng.standard_normal(16), channels)
        assert nullspace_dim(build_jacobian(inst)) >= 2

    def test_wide_jacobian_counts_missing_columns(self):
        # under-determined dims: rank cannot exceed the row count
        inst = _gaussian_instance(8, 8, 1, seed=22)
        jac = build_jacobian(inst)
        assert jac.shape == (8, 16)
        assert nullspace_dim(jac) >= 8


class TestAmbiguityVector:
    def test_length_and_blocks(self):
        inst = _gaussian_instance(8, 3, 2, seed=30)
        vec = ambiguity_vector(inst)
        assert vec.shape == (8 + 6,)
        assert np.allclose(vec[:8], -dft(inst.signal))
        assert np.allclose(vec[8:], inst.channels.reshape(-1))

    def test_residual_small_on_random_instances(self):
        for seed in range(10):
            inst = _gaussian_instance(16, 4, 3, seed=40 + seed)
            jac = build_jacobian(inst)
            vec = ambiguity_vector(inst)
            assert np.linalg.norm(jac @ vec) / np.linalg.norm(vec) < 1e-10

    def test_misfit_third_order_along_ambiguity(self):
        # moving along the null direction changes the misfit only at high order
        inst = _gaussian_instance(16, 4, 3, seed=50)
        L = inst.dims.L
        s_hat = dft(inst.signal)
        y_hat = inst.observations_fourier
        y_sq = float(np.sum(np.abs(y_hat) ** 2))
        vec = ambiguity_vector(inst)
        vp, vq = vec[:L], vec[L:].reshape(inst.dims.N, inst.dims.K).real
        for eps in (1e-2, 1e-3):
            r = bilinear_map(s_hat + eps * vp, inst.channels + eps * vq, L) - y_hat
            value = 0.5 * float(np.sum((np.conj(r) * r).real))
            assert value <= eps ** 3 * y_sq


class TestConditions:
    def test_condition1_examples(self):
        assert condition1(np.array([[1.0, 0.0], [0.0, 1.0]])) is True
        assert condition1(np.array([[1.0, 0.0], [2.0, 0.0]])) is False

    def test_condition1_gaussian_sampling(self):
        rng = np.random.default_rng(60)
        assert all(condition1(rng.standard_normal((4, 8))) for _ in range(1000))

    def test_condition2_distinct_roots(self):
        assert condition2(np.array([[1.0, 1.0], [1.0, 2.0]])) is True

    def test_condition2_proportional_channels(self):
        assert condition2(np.array([[1.0, 1.0], [2.0, 2.0]])) is False

    def test_condition2_unfilled_support_start(self):
        # both polynomials share the root 0
        assert condition2(np.array([[0.0, 1.0], [0.0, 3.0]])) is False

    def test_condition2_degenerate_channel(self):
        with pytest.raises(DegenerateChannelError):
            condition2(np.array([[0.0, 0.0], [1.0, 2.0]]))

    def test_condition2_single_channel_convention(self):
        assert condition2(np.array([[2.0]])) is True
        assert condition2(np.array([[1.0, 2.0]])) is False

    def test_condition2_constant_first_polynomial(self):
        # a constant polynomial has no roots, hence nothing shared
        assert condition2(np.array([[1.0, 0.0], [0.0, 1.0]])) is True

    def test_filter_polynomial_reconstruction(self):
        rng = np.random.default_rng(61)
        for _ in range(50):
            coeffs = rng.standard_normal(6)
            poly = FilterPolynomial.from_coeffs(coeffs)
            rebuilt = np.real(np.polynomial.polynomial.polyfromroots(poly.roots))
            rebuilt = rebuilt * coeffs[-1]
            assert np.allclose(rebuilt, coeffs, rtol=0, atol=1e-8 * np.max(np.abs(coeffs)))


class TestAnalyze:
    def test_gaussian_instance_all_green(self):
        inst = _gaussian_instance(32, 8, 4, seed=70)
        rep = analyze(inst)
        assert rep.info_count_ok and rep.condition1_ok and rep.condition2_ok
        assert rep.fourier_zero_free
        assert rep.nullspace_dim == 1
        assert rep.ambiguity_vector_residual < 1e-10
        assert len(rep.smallest_singular_values) == 3
        assert rep.smallest_singular_values[0] < rep.smallest_singular_values[1]

    def test_condition1_violation_detected(self):
        rng = np.random.default_rng(71)
        dims = ProblemDims(16, 4, 3)
        channels = make_counterexample(dims, "no_top_tap", rng)
        inst = make_instance(dims, rng.standard_normal(16), channels)
        rep = analyze(inst)
        assert not rep.condition1_ok
        assert rep.nullspace_dim >= 2

    def test_info_count_violation_regardless_of_channels(self):
        inst = _gaussian_instance(32, 32, 2, seed=72)
        assert analyze(inst).info_count_ok is False

    def test_csv_row_shape(self):
        rep = analyze(_gaussian_instance(8, 3, 2, seed=73))
        row = report_csv_row(rep)
        assert len(row.split(",")) == 8
        assert "nan" not in row


class TestCounterexamples:
    def test_no_top_tap_fails_condition1(self):
        rng = np.random.default_rng(80)
        channels = make_counterexample(ProblemDims(16, 4, 3), "no_top_tap", rng)
        assert condition1(channels) is False
        assert condition2(channels) is True  # generically no shared root remains

    def test_shared_root_fails_condition2(self):
        rng = np.random.default_rng(81)
        channels = make_counterexample(ProblemDims(16, 4, 3), "shared_root", rng,
                                       shared_root_at=0.5)
        assert condition2(channels) is False
        roots_ok = [np.min(np.abs(FilterPolynomial.from_coeffs(c).roots - 0.5)) < 1e-8
                    for c in channels]
        assert all(roots_ok)

    def test_requires_k_at_least_two(self):
        with pytest.raises(ValueError):
            make_counterexample(ProblemDims(8, 1, 2), "no_top_tap",
                                np.random.default_rng(0))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_counterexample(ProblemDims(8, 4, 2), "bogus", np.random.default_rng(0))

import numpy as np
import pytest

from mcbd.experiments import (CellAggregate, DegenerateObservationError,
                              GridSpec, NoiseSpec, TrialOutcome, add_noise,
                              aggregate, boundary_csv, boundary_k_star,
                              noise_csv, noise_sigma, noisy_solver_config,
                              phase_csv, run_noise_sweep, run_phase_grid,
                              sample_instance, trial_seed_sequence)
from mcbd.identifiability import condition1, condition2
from mcbd.model import ProblemDims, make_instance
from mcbd.solver import SolverConfig

FAST_SOLVER = SolverConfig(max_restarts=5, plateau_window=8, max_outer_iters=120)


class TestSampleInstance:
    def test_sampled_channels_satisfy_conditions(self):
        rng = np.random.default_rng(0)
        dims = ProblemDims(16, 8, 4)
        for _ in range(200):
            inst = sample_instance(dims, rng)
            assert condition1(inst.channels)
            assert condition2(inst.channels)

    def test_entries_are_standard_normal(self):
        rng = np.random.default_rng(1)
        dims = ProblemDims(64, 8, 8)
        entries = []
        while len(entries) < 100_000:
            inst = sample_instance(dims, rng)
            entries.extend(inst.signal.tolist())
            entries.extend(inst.channels.reshape(-1).tolist())
        entries = np.array(entries)
        assert abs(entries.mean()) <= 3.0 / np.sqrt(entries.size)
        assert entries.std() == pytest.approx(1.0, abs=0.02)

    def test_different_seeds_differ(self):
        dims = ProblemDims(8, 3, 2)
        a = sample_instance(dims, np.random.default_rng(1))
        b = sample_instance(dims, np.random.default_rng(2))
        assert not np.array_equal(a.signal, b.signal)


class TestAddNoise:
    def test_exact_noise_norm(self):
        rng = np.random.default_rng(2)
        inst = sample_instance(ProblemDims(16, 4, 3), rng)
        noisy = add_noise(inst, 40.0, rng)
        for n in range(3):
            ratio = (np.linalg.norm(noisy.observations[n] - inst.observations[n])
                     / np.linalg.norm(inst.observations[n]))
            assert ratio == pytest.approx(noise_sigma(40.0), rel=1e-12)

    def test_snr_forty_db_sigma(self):
        assert noise_sigma(40.0) == pytest.approx(0.01, rel=1e-14)

    def test_measured_snr_matches_request(self):
        rng = np.random.default_rng(3)
        inst = sample_instance(ProblemDims(16, 4, 3), rng)
        noisy = add_noise(inst, 23.0, rng)
        for n in range(3):
            sigma = (np.linalg.norm(noisy.observations[n] - inst.observations[n])
                     / np.linalg.norm(inst.observations[n]))
            assert -20.0 * np.log10(sigma) == pytest.approx(23.0, abs=1e-10)

    def test_infinite_snr_is_identity(self):
        rng = np.random.default_rng(4)
        inst = sample_instance(ProblemDims(8, 3, 2), rng)
        assert add_noise(inst, None, rng) is inst
        assert add_noise(inst, np.inf, rng) is inst

    def test_zero_observation_rejected(self):
        inst = make_instance(ProblemDims(4, 2, 1), np.zeros(4), np.ones((1, 2)))
        with pytest.raises(DegenerateObservationError):
            add_noise(inst, 30.0, np.random.default_rng(0))

    def test_fourier_side_recomputed(self):
        rng = np.random.default_rng(5)
        inst = sample_instance(ProblemDims(8, 3, 2), rng)
        noisy = add_noise(inst, 20.0, rng)
        from mcbd.fourier import dft
        assert np.allclose(noisy.observations_fourier, dft(noisy.observations))


class TestSeeding:
    def test_distinct_cells_get_distinct_streams(self):
        seqs = {tuple(trial_seed_sequence(9, N, K, None, t).entropy)
                for N in (2, 3) for K in (2, 3) for t in (0, 1)}
        assert len(seqs) == 8

    def test_noiseless_key_differs_from_zero_db(self):
        a = trial_seed_sequence(9, 2, 2, None, 0).entropy
        b = trial_seed_sequence(9, 2, 2, 0.0, 0).entropy
        assert a != b

    def test_rerun_reproduces_outcomes(self):
        spec = GridSpec(L=8, N_values=(2,), K_values=(2,), trials_per_cell=3,
                        base_seed=5)
        r1 = run_phase_grid(spec, FAST_SOLVER)
        r2 = run_phase_grid(spec, FAST_SOLVER)
        for a, b in zip(r1.outcomes, r2.outcomes):
            assert (a.rel_error, a.attempts, a.seed) == (b.rel_error, b.attempts, b.seed)


class TestNoisyConfig:
    def test_tolerance_follows_noise_budget(self):
        cfg = noisy_solver_config(SolverConfig(), 40.0)
        assert cfg.tol_misfit == pytest.approx(1.1 * 1e-4, rel=1e-12)
        assert cfg.plateau_misfit_factor == 1.0

    def test_floor_aware_budget_with_dims(self):
        dims = ProblemDims(32, 8, 4)
        cfg = noisy_solver_config(SolverConfig(), 20.0, dims)
        frac = 1.0 - (32 + 32 - 1) / 128
        assert cfg.tol_misfit == pytest.approx(1.5 * frac * 1e-2, rel=1e-12)

    def test_noiseless_untouched(self):
        base = SolverConfig()
        assert noisy_solver_config(base, None) is base


class TestAggregate:
    def _outcomes(self):
        rng = np.random.default_rng(7)
        outs = []
        for t in range(100):
            err = float(rng.uniform(0, 0.05))
            outs.append(TrialOutcome(L=8, N=2, K=2, trial_index=t,
                                     success=err < 0.02, rel_error=err,
                                     attempts=int(rng.integers(0, 3)),
                                     snr_db=None, seed=t, wall_time=0.0))
        return outs

    def test_permutation_invariance_bit_identical(self):
        outs = self._outcomes()
        rng = np.random.default_rng(8)
        shuffled = list(outs)
        rng.shuffle(shuffled)
        a = aggregate(outs)
        b = aggregate(shuffled)
        assert a == b
        assert phase_csv(a) == phase_csv(b)

    def test_probability_simple_count(self):
        outs = self._outcomes()
        outs = [o for o in outs][:100]
        n_succ = sum(o.success for o in outs)
        agg = aggregate(outs)[0]
        assert agg.successes == n_succ
        assert agg.success_prob == pytest.approx(n_succ / 100)

    def test_seventy_three_of_hundred(self):
        outs = [TrialOutcome(L=8, N=2, K=2, trial_index=t, success=t < 73,
                             rel_error=0.0 if t < 73 else 1.0, attempts=0,
                             snr_db=None, seed=t, wall_time=0.0)
                for t in range(100)]
        assert aggregate(outs)[0].success_prob == pytest.approx(0.73)

    def test_empty_outcomes(self):
        assert aggregate([]) == ()

    def test_zero_trial_row_renders_without_nan(self):
        row = CellAggregate(L=8, N=2, K=2, snr_db=None, trials=0, successes=0,
                            success_prob=None, mean_attempts_success=None,
                            mean_rel_err=None, median_rel_err=None)
        text = phase_csv([row])
        assert "nan" not in text.lower()
        assert text.splitlines()[1] == "8,2,2,0,0,,,"

    def test_success_threshold_consistency(self):
        spec = GridSpec(L=8, N_values=(2,), K_values=(2,), trials_per_cell=4,
                        base_seed=11)
        res = run_phase_grid(spec, FAST_SOLVER)
        for o in res.outcomes:
            assert o.success == (o.rel_error < spec.success_threshold)


class TestBoundary:
    def test_frozen_values_at_paper_length(self):
        assert boundary_k_star(32, 2) == 16
        assert boundary_k_star(32, 4) == 24
        assert boundary_k_star(32, 8) == 28

    def test_monotone_in_n(self):
        for L in (8, 16, 32, 33):
            stars = [boundary_k_star(L, n) for n in range(1, 12)]
            assert all(b >= a for a, b in zip(stars, stars[1:]))

    def test_boundary_csv(self):
        text = boundary_csv([(2, 16), (3, 21)])
        assert text == "N,K_star\n2,16\n3,21\n"


class TestCampaigns:
    def test_tiny_grid_runs_and_aggregates(self):
        spec = GridSpec(L=12, N_values=(2, 3), K_values=(2, 4), trials_per_cell=3,
                        base_seed=21)
        res = run_phase_grid(spec, FAST_SOLVER)
        assert len(res.outcomes) == 2 * 2 * 3
        assert len(res.cells) == 4
        assert res.boundary == ((2, boundary_k_star(12, 2)), (3, boundary_k_star(12, 3)))
        text = phase_csv(res.cells)
        assert text.startswith("L,N,K,trials,")

    def test_parallel_matches_serial(self):
        spec = GridSpec(L=12, N_values=(2,), K_values=(2, 4), trials_per_cell=3,
                        base_seed=22)
        serial = run_phase_grid(spec, FAST_SOLVER, jobs=1)
        parallel = run_phase_grid(spec, FAST_SOLVER, jobs=2)
        assert phase_csv(serial.cells) == phase_csv(parallel.cells)
        for a, b in zip(serial.outcomes, parallel.outcomes):
            assert a.rel_error == b.rel_error

    def test_tiny_noise_sweep(self):
        spec = NoiseSpec(snr_db_list=(30.0, 50.0), configs=((12, 3, 3),),
                         trials_per_point=3, base_seed=23)
        res = run_noise_sweep(spec, FAST_SOLVER)
        assert len(res.outcomes) == 6
        assert len(res.points) == 2
        assert len(res.slopes_per_db) == 1
        (_, slope), = res.slopes_per_db
        assert slope < 0.0  # error shrinks with SNR
        text = noise_csv(res.points)
        assert text.startswith("L,N,K,snr_db,")
        # higher SNR should give a smaller mean error
        by_snr = {p.snr_db: p.mean_rel_err for p in res.points}
        assert by_snr[50.0] < by_snr[30.0]

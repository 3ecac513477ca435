"""Eigenpair solver: the closed-form least squares against a dense
generic solver, scan semantics, and greedy extraction."""
from __future__ import annotations

import numpy as np
import pytest

from koopdict.dynsys import TrajectoryGrid
from koopdict.koopman import (
    EigenPair,
    LambdaGrid,
    LambdaOverflowError,
    LambdaScanError,
    ModeDecomposition,
    ObservableGrid,
    evaluate_observable,
    exponential_profile,
    greedy_decompose,
    grid_to_stacked,
    reconstruct,
    scan_lambda,
    solve_initial_data,
    stacked_to_grid,
)
from oracles import dense_initial_data_solve


def make_observable_grid(rng, n=8, m=12, complex_values=False):
    times = 0.1 * np.arange(m + 1)
    values = rng.normal(size=(n, m + 1))
    if complex_values:
        values = values + 1j * rng.normal(size=(n, m + 1))
    return ObservableGrid(values, times, np.linspace(0, 1, n))


class TestProfile:
    def test_documented_values(self):
        assert np.allclose(exponential_profile(1.0, np.array([0.0, np.log(2.0)])), [1.0, 2.0])
        profile = exponential_profile(0.0, 0.5 * np.arange(4))
        assert np.array_equal(profile, np.ones(4))

    def test_first_entry_always_one(self, rng):
        for lam in (-3.0, 2.5, 1.0 + 2.0j):
            profile = exponential_profile(lam, 0.02 * np.arange(50))
            assert profile[0] == 1.0 + 0.0j

    def test_overflow_guard(self):
        times = np.linspace(0.0, 10.0, 11)
        with pytest.raises(LambdaOverflowError):
            exponential_profile(71.0, times)
        with pytest.raises(LambdaOverflowError):
            exponential_profile(-71.0, times)
        exponential_profile(69.0, times)  # |Re| * r_m = 690 < 700 is fine


class TestSolveInitialData:
    def test_lambda_zero_gives_row_means(self, rng):
        grid = make_observable_grid(rng)
        h, _ = solve_initial_data(0.0, grid.values, grid.times)
        assert np.allclose(h, grid.values.mean(axis=1), rtol=1e-12)

    def test_exact_model_recovered(self, rng):
        times = 0.05 * np.arange(30)
        h_true = rng.normal(size=6) + 1j * rng.normal(size=6)
        lam = -0.8 + 0.3j
        values = np.outer(h_true, np.exp(lam * times))
        h, err = solve_initial_data(lam, values, times)
        assert np.linalg.norm(h - h_true) / np.linalg.norm(h_true) < 1e-10
        assert err < 1e-10

    @pytest.mark.parametrize("complex_values", [False, True])
    def test_matches_dense_solver(self, rng, complex_values):
        # the row-decoupled closed form must agree with a generic dense
        # least-squares solve of the stacked system
        for _ in range(20):
            grid = make_observable_grid(rng, complex_values=complex_values)
            lam = complex(rng.uniform(-4, 4), rng.uniform(-2, 2))
            h, err = solve_initial_data(lam, grid.values, grid.times)
            h_ref, err_ref = dense_initial_data_solve(lam, grid.values, grid.times)
            scale = max(np.linalg.norm(h_ref), 1.0)
            assert np.linalg.norm(h - h_ref) / scale < 1e-8
            assert err == pytest.approx(err_ref, rel=1e-8, abs=1e-8)

    def test_error_is_residual_norm_not_shortcut(self, rng):
        # for data inside the model class the direct residual keeps full
        # precision instead of the cancellation-prone norm difference
        times = 0.02 * np.arange(101)
        h_true = rng.uniform(1.0, 2.0, size=40)
        values = np.outer(h_true, np.exp(-1.5 * times))
        _, err = solve_initial_data(-1.5, values, times)
        assert err < 1e-12 * np.linalg.norm(values)


class TestLambdaGrid:
    def test_real_line_default(self):
        grid = LambdaGrid.real_line()
        assert len(grid) == 401
        assert grid.candidates[0] == -5.0 and grid.candidates[-1] == 5.0
        assert grid.is_real

    def test_complex_rectangle(self):
        grid = LambdaGrid.complex_rectangle(-1, 1, 3, -2, 2, 5)
        assert len(grid) == 15
        assert not grid.is_real

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            LambdaGrid(np.array([1.0, 2.0, 1.0]))


class TestScan:
    def test_recovers_on_grid_eigenvalue(self, rng):
        lams = LambdaGrid.real_line()
        lam_star = complex(lams.candidates[77])
        times = 0.02 * np.arange(101)
        h_true = rng.uniform(0.5, 1.5, size=25)
        values = np.outer(h_true, np.exp(lam_star * times)).real
        grid = ObservableGrid(values, times, np.linspace(0, 1, 25))
        pair, curve = scan_lambda(grid, lams)
        assert pair.eigenvalue == lam_star
        assert curve.best_index == 77
        assert np.isfinite(curve.fit_errors).all()

    def test_off_grid_lambda_maps_to_nearest_candidate(self, rng):
        lams = LambdaGrid.real_line()  # spacing 0.025
        step = lams.candidates[1].real - lams.candidates[0].real
        lam_star = lams.candidates[150].real + 0.5 * step  # exactly between
        times = 0.02 * np.arange(101)
        values = np.outer(rng.uniform(1, 2, size=20), np.exp(lam_star * times))
        grid = ObservableGrid(values, times, np.linspace(0, 1, 20))
        pair, curve = scan_lambda(grid, lams)
        assert curve.best_index in (150, 151)

    def test_tie_keeps_first_candidate(self):
        times = 0.1 * np.arange(5)
        values = np.zeros((3, 5))  # every candidate fits perfectly
        grid = ObservableGrid(values, times, np.linspace(0, 1, 3))
        pair, curve = scan_lambda(grid, LambdaGrid.real_line(-1.0, 1.0, 21))
        assert curve.best_index == 0
        assert pair.eigenvalue == -1.0

    def test_overflow_candidates_flagged_not_fatal(self, rng):
        grid = make_observable_grid(rng, m=10)  # r_m = 1.0
        lams = LambdaGrid(np.array([-900.0, 0.0, 1.0], dtype=complex))
        pair, curve = scan_lambda(grid, lams)
        assert curve.rejected.tolist() == [True, False, False]
        assert np.isinf(curve.fit_errors[0])
        assert pair.eigenvalue in (0.0, 1.0)

    def test_all_candidates_rejected(self, rng):
        grid = make_observable_grid(rng, m=10)
        with pytest.raises(LambdaScanError):
            scan_lambda(grid, LambdaGrid(np.array([800.0, -900.0], dtype=complex)))

    def test_golden_refine_improves_off_grid_fit(self, rng):
        lam_star = 0.3137  # deliberately between coarse candidates
        times = 0.02 * np.arange(101)
        values = np.outer(rng.uniform(1, 2, size=15), np.exp(lam_star * times))
        grid = ObservableGrid(values, times, np.linspace(0, 1, 15))
        coarse, _ = scan_lambda(grid, LambdaGrid.real_line(), refine=False)
        refined, _ = scan_lambda(grid, LambdaGrid.real_line(), refine=True)
        assert refined.fit_error < coarse.fit_error
        assert abs(refined.eigenvalue.real - lam_star) < 1e-6

    def test_scaling_equivariance(self, rng):
        grid = make_observable_grid(rng, n=10, m=20)
        lams = LambdaGrid.real_line(-3, 3, 61)
        pair, curve = scan_lambda(grid, lams)
        scaled = ObservableGrid(10.0 * grid.values, grid.times, grid.s_params)
        pair10, curve10 = scan_lambda(scaled, lams)
        assert curve10.best_index == curve.best_index
        assert np.allclose(curve10.fit_errors, 10.0 * curve.fit_errors, rtol=1e-10)
        assert np.allclose(pair10.h, 10.0 * pair.h, rtol=1e-10)


class TestGreedy:
    def test_two_well_separated_modes_recovered(self, rng):
        lams = LambdaGrid.real_line()
        lam_fast = complex(lams.candidates[-1])  # +5, dominates in norm
        lam_slow = complex(lams.candidates[0])  # -5
        times = 0.02 * np.arange(101)
        h_fast = rng.uniform(0.5, 1.5, size=30)
        h_slow = rng.uniform(0.5, 1.5, size=30)
        values = (
            np.outer(h_fast, np.exp(lam_fast * times)) + np.outer(h_slow, np.exp(lam_slow * times))
        ).real
        grid = ObservableGrid(values, times, np.linspace(0, 1, 30))
        decomp = greedy_decompose(grid, lams, 2)
        assert decomp.modes[0].eigenvalue == lam_fast
        assert decomp.modes[1].eigenvalue == lam_slow
        assert decomp.residual_norms[2] / decomp.residual_norms[0] < 1e-6
        assert np.linalg.norm(decomp.modes[0].h - h_fast) / np.linalg.norm(h_fast) < 1e-6

    def test_residual_ladder_never_increases(self, rng):
        grid = make_observable_grid(rng, n=6, m=30)
        decomp = greedy_decompose(grid, LambdaGrid.real_line(-2, 2, 41), 8)
        assert decomp.n_modes == 8
        drops = np.diff(decomp.residual_norms)
        assert (drops <= 1e-12 * decomp.residual_norms[:-1]).all()

    def test_rank_one_structure_of_stored_modes(self, rng):
        grid = make_observable_grid(rng, n=5, m=15)
        decomp = greedy_decompose(grid, LambdaGrid.real_line(-2, 2, 21), 3)
        for mode in decomp.modes:
            profile = exponential_profile(mode.eigenvalue, decomp.times)
            expected = np.outer(mode.h, profile)
            scale = max(np.abs(expected).max(), 1e-300)
            assert np.abs(mode.psi - expected).max() / scale < 1e-12

    def test_reconstruction_error_equals_final_residual(self, rng):
        grid = make_observable_grid(rng, n=6, m=20)
        decomp = greedy_decompose(grid, LambdaGrid.real_line(-2, 2, 31), 4)
        total = reconstruct(decomp)
        err = np.linalg.norm(grid.values - total)
        assert err == pytest.approx(decomp.residual_norms[-1], rel=1e-10)

    def test_one_curve_per_mode(self, rng):
        grid = make_observable_grid(rng)
        decomp = greedy_decompose(grid, LambdaGrid.real_line(-1, 1, 11), 3)
        assert len(decomp.curves) == 3
        assert decomp.curves[0].lambdas.shape == (11,)

    def test_mode_count_validation(self, rng):
        grid = make_observable_grid(rng)
        with pytest.raises(ValueError):
            greedy_decompose(grid, LambdaGrid.real_line(-1, 1, 11), 0)


class TestStacking:
    def test_column_major_order(self):
        values = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        stacked = grid_to_stacked(values)
        # row index fastest: first time block, then second
        assert stacked.tolist() == [1.0, 3.0, 5.0, 2.0, 4.0, 6.0]
        assert np.array_equal(stacked_to_grid(stacked, 3), values)

    def test_bad_split_rejected(self):
        with pytest.raises(ValueError):
            stacked_to_grid(np.arange(7.0), 3)


class TestTypes:
    def test_observable_grid_validation(self, rng):
        values = rng.normal(size=(4, 6))
        good_times = 0.1 * np.arange(6)
        s = np.linspace(0, 1, 4)
        with pytest.raises(ValueError, match="start at 0"):
            ObservableGrid(values, good_times + 1.0, s)
        with pytest.raises(ValueError, match="non-finite"):
            ObservableGrid(values * np.inf, good_times, s)
        with pytest.raises(ValueError, match="rows"):
            ObservableGrid(values, good_times, np.linspace(0, 1, 5))

    def test_evaluate_observable(self, rng):
        points = rng.normal(size=(5, 7, 2))
        grid = TrajectoryGrid(points, 0.5 * np.arange(7), None)
        obs = evaluate_observable(grid, lambda p: np.sum(p**2, axis=-1))
        assert obs.values.shape == (5, 7)
        assert obs.values[2, 3] == pytest.approx(np.sum(points[2, 3] ** 2))
        assert np.allclose(obs.s_params, np.linspace(0, 1, 5))

    def test_evaluate_observable_rejects_nonfinite(self, rng):
        points = rng.normal(size=(4, 5, 2))
        grid = TrajectoryGrid(points, np.arange(5.0), None)
        with pytest.raises(ValueError, match="non-finite"):
            evaluate_observable(grid, lambda p: np.full(p.shape[:-1], np.nan))

    def test_gaussian_observable_value_at_origin(self):
        # 3 * exp(0) = 3 for the radial Gaussian at the origin
        points = np.zeros((2, 3, 2))
        grid = TrajectoryGrid(points, np.arange(3.0), None)
        obs = evaluate_observable(grid, lambda p: 3.0 * np.exp(-np.sum(p**2, axis=-1) / 10.0))
        assert (obs.values == 3.0).all()

    def test_mode_decomposition_rejects_increasing_ladder(self):
        pair = EigenPair(0.0, np.ones(3), np.ones((3, 4)), 1.0)
        times = 0.1 * np.arange(4)
        s = np.linspace(0, 1, 3)
        with pytest.raises(ValueError, match="non-increasing"):
            ModeDecomposition((pair,), np.array([1.0, 2.0]), times, s)

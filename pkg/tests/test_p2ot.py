import numpy as np
import numpy.testing as npt
import pytest

from conftest import random_pred
from sppot import p2ot
from sppot.ot_core import ScalingConfig, clamp_probabilities, solve_pot, solve_uot
from sppot.p2ot import (
    BenchmarkReport,
    BenchmarkRow,
    P2otProblem,
    benchmark_p2ot,
    extend_virtual,
    random_problem,
    solve_p2ot_fast,
    solve_p2ot_gsa,
    virtual_column_mass,
)


def make_problem(n, k, rho, seed, lam=1.0, eps=0.1, tol=1e-8, max_iter=5000):
    return P2otProblem(random_pred(n, k, seed), rho, lam, ScalingConfig(epsilon=eps, tol=tol, max_iter=max_iter))


class TestValidation:
    def test_rejects_non_stochastic_rows(self):
        with pytest.raises(ValueError):
            P2otProblem(np.ones((3, 3)), 0.5, 1.0, ScalingConfig(epsilon=0.1))

    def test_rejects_bad_rho(self):
        P = random_pred(4, 2, 0)
        for rho in (0.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                P2otProblem(P, rho, 1.0, ScalingConfig(epsilon=0.1))

    def test_rejects_negative_lam(self):
        with pytest.raises(ValueError):
            P2otProblem(random_pred(4, 2, 0), 0.5, -1.0, ScalingConfig(epsilon=0.1))


class TestExtension:
    def test_extended_shapes_and_values(self):
        prob = make_problem(6, 3, 0.4, seed=1, lam=2.0)
        ext = extend_virtual(prob)
        assert ext.cost_ext.shape == (6, 4)
        npt.assert_array_equal(ext.cost_ext[:, 3], np.zeros(6))
        npt.assert_allclose(ext.beta, [0.4 / 3] * 3 + [0.6])
        npt.assert_array_equal(ext.weights, [2.0, 2.0, 2.0, np.inf])
        npt.assert_allclose(ext.alpha, np.full(6, 1 / 6))

    def test_cost_override(self):
        prob = make_problem(4, 2, 0.5, seed=2)
        C = np.arange(8.0).reshape(4, 2)
        ext = extend_virtual(prob, cost=C)
        npt.assert_array_equal(ext.cost_ext[:, :2], C)

    def test_virtual_column_absorbs_unselected_mass(self):
        prob = make_problem(10, 4, 0.3, seed=3)
        npt.assert_allclose(virtual_column_mass(prob), 0.7, atol=1e-6)


class TestFastSolver:
    @pytest.mark.parametrize("rho", [0.1, 0.5, 0.9, 1.0])
    def test_feasibility(self, rho):
        prob = make_problem(50, 7, rho, seed=4)
        plan = solve_p2ot_fast(prob)
        assert plan.converged
        assert np.all(plan.row_marginal() <= 1 / 50 + 1e-8)
        npt.assert_allclose(plan.total_mass(), rho, atol=1e-6)

    def test_rho_one_keeps_rows_saturated(self):
        prob = make_problem(20, 4, 1.0, seed=5)
        plan = solve_p2ot_fast(prob)
        npt.assert_allclose(plan.row_marginal(), np.full(20, 1 / 20), atol=1e-8)

    def test_deterministic(self):
        prob = make_problem(16, 4, 0.6, seed=6)
        a = solve_p2ot_fast(prob)
        b = solve_p2ot_fast(prob)
        npt.assert_array_equal(a.coupling, b.coupling)

    def test_large_lam_approaches_hard_columns(self):
        P = random_pred(24, 4, seed=7)
        cfg = ScalingConfig(epsilon=0.1, tol=1e-10, max_iter=20000)
        soft = solve_p2ot_fast(P2otProblem(P, 0.5, 1e7, cfg))
        hard = solve_pot(P, 0.5, cfg)
        npt.assert_allclose(soft.coupling, hard.coupling, atol=1e-5)

    def test_rho_one_equals_unbalanced(self):
        P = random_pred(24, 4, seed=8)
        cfg = ScalingConfig(epsilon=0.1, tol=1e-10, max_iter=20000)
        fast = solve_p2ot_fast(P2otProblem(P, 1.0, 1.5, cfg))
        uot = solve_uot(P, 1.5, cfg)
        npt.assert_allclose(fast.coupling, uot.coupling, atol=1e-9)


class TestBaselineAgreement:
    def test_gsa_feasible(self):
        prob = make_problem(40, 5, 0.6, seed=9)
        plan = solve_p2ot_gsa(prob)
        assert np.all(plan.row_marginal() <= 1 / 40 + 1e-7)
        npt.assert_allclose(plan.total_mass(), 0.6, atol=1e-6)

    def test_agreement_exact_at_full_mass(self):
        # at rho = 1 the virtual column is empty, so the two entropic
        # programs coincide and the solvers must agree tightly
        prob = make_problem(64, 8, 1.0, seed=10, tol=1e-10, max_iter=50000)
        fast = solve_p2ot_fast(prob)
        gsa = solve_p2ot_gsa(prob)
        rel = abs(fast.objective - gsa.objective) / abs(gsa.objective)
        assert rel < 1e-7
        npt.assert_allclose(fast.coupling, gsa.coupling, atol=1e-8)

    def test_partial_mass_gap_shrinks_with_epsilon(self):
        # with rho < 1 the fast solver's objective carries the entropy of the
        # dropped column, so the two optima differ by an O(eps^2) bias that
        # must shrink as eps does
        P = random_pred(64, 8, seed=11)
        gaps = []
        for eps in (0.1, 0.02, 0.008):
            cfg = ScalingConfig(epsilon=eps, tol=1e-11, max_iter=200000)
            prob = P2otProblem(P, 0.5, 1.0, cfg)
            fast = solve_p2ot_fast(prob)
            gsa = solve_p2ot_gsa(prob)
            gaps.append(abs(fast.objective - gsa.objective) / abs(gsa.objective))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-3


class TestRandomProblem:
    def test_seeded_and_stochastic(self):
        a = random_problem(8, 3, 0.5, seed=1)
        b = random_problem(8, 3, 0.5, seed=1)
        npt.assert_array_equal(a.pred, b.pred)
        npt.assert_allclose(a.pred.sum(axis=1), np.ones(8), atol=1e-12)
        c = random_problem(8, 3, 0.5, seed=2)
        assert np.any(a.pred != c.pred)


class TestBenchmark:
    def test_report_rows_and_csv(self):
        report = benchmark_p2ot(sizes=[(16, 3)], rhos=[0.5], seeds=[0], repeats=2, max_iter=2000)
        assert len(report.rows) == 4  # 2 solvers x 2 repeats
        rows = report.to_csv_rows()
        assert rows[0] == [
            "schema_version", "solver", "backend", "N", "K", "rho", "seed", "wall_ms", "iters", "objective",
        ]
        assert len(rows) == 5
        assert {r[1] for r in rows[1:]} == {"fast", "gsa"}

    def test_speedup_filters(self):
        report = BenchmarkReport(
            rows=[
                BenchmarkRow("fast", "python", 8, 2, 0.5, 0, 1.0, 10, -1.0),
                BenchmarkRow("gsa", "python", 8, 2, 0.5, 0, 3.0, 30, -1.0),
            ]
        )
        assert report.speedup() == 3.0
        assert report.speedup(n=8, k=2, rho=0.5, seed=0) == 3.0
        with pytest.raises(ValueError):
            report.speedup(n=99)

    def test_objectives_recorded_finite(self):
        report = benchmark_p2ot(sizes=[(12, 3)], rhos=[1.0], seeds=[1], max_iter=2000)
        assert all(np.isfinite(r.objective) for r in report.rows)

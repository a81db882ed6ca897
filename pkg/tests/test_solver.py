import numpy as np
import pytest

from pnpreg import (
    ContractionError,
    ConvergenceError,
    DenseOperator,
    LeastSquares,
    PnPProblem,
    ProxQuadratic,
    ScaledDenoiser,
    SoftThreshold,
    StepConfig,
    fbs_step,
    prox_of_discrepancy,
    solve_admm,
    solve_fbs,
)
from pnpreg.discrepancy import StepSizeError

from conftest import random_dense
from oracles import affine_fbs_rate


def quadratic_problem(rng, m=12, n=8, lam=0.2, a=1.0, s=None):
    """LS + quadratic prox instance; the denoiser strength folds the step in,
    so the fixed point is (A^T A + lam*a I)^{-1} A^T y."""
    op = random_dense(rng, m, n, norm_cap=1.0)
    D = LeastSquares(op)
    s = D.beta if s is None else s
    y = rng.standard_normal(m)
    p = PnPProblem(D, ProxQuadratic(s * a), lam, y, StepConfig(s))
    direct = np.linalg.solve(op.matrix.T @ op.matrix + lam * a * np.eye(n),
                             op.matrix.T @ y)
    return p, direct, op


class TestFbsStep:
    def test_full_contraction_to_origin(self, rng):
        D = LeastSquares(DenseOperator.identity(3))
        p = PnPProblem(D, ProxQuadratic(1.0), 0.5, np.zeros(3), StepConfig(1.0))
        x = rng.standard_normal(3)
        np.testing.assert_allclose(fbs_step(p, x), np.zeros(3), atol=1e-15)

    def test_fixed_point_stays(self, rng):
        p, direct, _ = quadratic_problem(rng)
        moved = fbs_step(p, direct)
        assert np.linalg.norm(moved - direct) <= 1e-12 * (1 + np.linalg.norm(direct))

    def test_sampled_composition_bound(self, rng):
        p, _, _ = quadratic_problem(rng, lam=0.3)
        L = p.certificate
        for _ in range(100):
            x1, x2 = rng.standard_normal(8), rng.standard_normal(8)
            num = np.linalg.norm(fbs_step(p, x1) - fbs_step(p, x2))
            assert num <= L * np.linalg.norm(x1 - x2) * (1.0 + 1e-8)


class TestSolveFbs:
    def test_matches_direct_solve(self, rng):
        for _ in range(5):
            p, direct, _ = quadratic_problem(rng, lam=float(rng.uniform(0.05, 0.5)))
            res = solve_fbs(p, tol=1e-12)
            rel = np.linalg.norm(res.x_star - direct) / np.linalg.norm(direct)
            assert rel <= 1e-8

    def test_fixed_point_start_is_instant(self, rng):
        p, direct, _ = quadratic_problem(rng)
        res = solve_fbs(p, x0=direct, tol=1e-8)
        assert res.iterations <= 1

    def test_rate_below_spectral_oracle(self, rng):
        p, _, op = quadratic_problem(rng, lam=0.2, a=1.0)
        shrink = 1.0 / (1.0 + p.cfg.s * 1.0 * 0.2)
        exact_rate = affine_fbs_rate(op.matrix, p.cfg.s, shrink)
        res = solve_fbs(p, x0=np.ones(8), tol=1e-11)
        assert res.empirical_rate <= exact_rate + 1e-6
        assert res.empirical_rate <= res.certificate + 0.05

    def test_iterations_within_banach_bound(self, rng):
        for _ in range(5):
            p, _, _ = quadratic_problem(rng, lam=float(rng.uniform(0.05, 0.5)))
            res = solve_fbs(p, x0=rng.standard_normal(8), tol=1e-10)
            assert res.iterations <= res.banach_bound

    def test_residuals_positive_until_termination(self, rng):
        p, _, _ = quadratic_problem(rng)
        res = solve_fbs(p, x0=rng.standard_normal(8), tol=1e-10)
        assert np.all(res.residuals[:-1] > 0.0)

    def test_post_fixed_point_residual(self, rng):
        p, _, _ = quadratic_problem(rng, lam=0.1)
        tol = 1e-9
        res = solve_fbs(p, tol=tol)
        assert np.linalg.norm(res.x_star - fbs_step(p, res.x_star)) <= tol

    def test_max_iter_exhaustion_reports_residual(self, rng):
        p, _, _ = quadratic_problem(rng, lam=0.05)
        with pytest.raises(ConvergenceError) as err:
            solve_fbs(p, x0=np.ones(8) * 10, tol=1e-12, max_iter=3)
        assert err.value.final_residual > 0
        assert err.value.iterations == 3

    def test_constant_map_edge(self, rng):
        # scaled family at lam = 1 is the zero map: certificate 0, two steps
        D = LeastSquares(random_dense(rng, 5, 5, norm_cap=1.0))
        p = PnPProblem(D, ScaledDenoiser(SoftThreshold()), 1.0,
                       rng.standard_normal(5), StepConfig(D.beta))
        res = solve_fbs(p, x0=rng.standard_normal(5), tol=1e-10)
        assert np.linalg.norm(res.x_star) == 0.0
        assert res.iterations <= res.banach_bound

    def test_rejects_non_contraction(self, rng):
        D = LeastSquares(random_dense(rng, 4, 4, norm_cap=1.0))
        with pytest.raises(ContractionError):
            PnPProblem(D, SoftThreshold(), 0.3, np.zeros(4), StepConfig(D.beta))

    def test_rejects_bad_step(self, rng):
        D = LeastSquares(random_dense(rng, 4, 4, norm_cap=1.0))
        with pytest.raises(StepSizeError):
            PnPProblem(D, ProxQuadratic(1.0), 0.3, np.zeros(4),
                       StepConfig(2.1 * D.beta))

    def test_fast_and_generic_paths_agree(self, rng):
        p, _, _ = quadratic_problem(rng, lam=0.2)
        fast = solve_fbs(p, tol=1e-11)
        generic = solve_fbs(p, tol=1e-11, trace_fn=lambda x: 0.0)  # forces python loop
        assert np.linalg.norm(fast.x_star - generic.x_star) <= 1e-9
        assert abs(fast.iterations - generic.iterations) <= 1

    def test_scaled_soft_path(self, rng):
        # separable soft-threshold fast path against the generic loop
        op = random_dense(rng, 10, 10, norm_cap=1.0)
        D = LeastSquares(op)
        y = rng.standard_normal(10) * 2.0
        p = PnPProblem(D, ScaledDenoiser(SoftThreshold()), 0.2, y, StepConfig(D.beta))
        fast = solve_fbs(p, tol=1e-11)
        generic = solve_fbs(p, tol=1e-11, trace_fn=lambda x: 0.0)
        assert np.linalg.norm(fast.x_star - generic.x_star) <= 1e-9


class TestCausalDenoiserSolve:
    def test_blur_plus_causal_fixed_point(self, rng):
        # non-separable denoiser exercises the generic loop end to end
        from pnpreg import CausalDenoiser
        from pnpreg.cli import generate_problem

        op, _, y = generate_problem("gaussian-blur", {"n": 128, "width": 1.0}, seed=4)
        D = LeastSquares(op)
        s = D.beta
        d = CausalDenoiser(window=128)
        lam = 0.3
        p = PnPProblem(D, d, lam, y, StepConfig(s))
        tol = 1e-9
        res = solve_fbs(p, tol=tol)
        assert np.linalg.norm(res.x_star - fbs_step(p, res.x_star)) <= tol
        assert res.empirical_rate <= res.certificate + 0.05
        admm = solve_admm(p, tol=tol)
        assert admm.converged
        assert np.linalg.norm(admm.x_star - res.x_star) <= 10 * tol


class TestVariationalEquivalence:
    def test_first_order_condition(self, rng):
        # prox denoiser fixed points satisfy grad D + lam * grad R = 0
        for _ in range(5):
            a = float(rng.uniform(0.5, 2.0))
            lam = float(rng.uniform(0.05, 0.5))
            p, _, op = quadratic_problem(rng, lam=lam, a=a)
            res = solve_fbs(p, tol=1e-12)
            grad_total = p.D.grad(res.x_star, p.y) + lam * a * res.x_star
            assert np.linalg.norm(grad_total) <= 1e-6

    def test_objective_trace_decreases(self, rng):
        p, _, _ = quadratic_problem(rng, lam=0.2, a=1.0)
        obj = lambda x: p.D.value(x, p.y) + 0.5 * 0.2 * float(x @ x)
        res = solve_fbs(p, x0=np.ones(8) * 3, tol=1e-10, trace_fn=obj)
        assert res.objectives is not None
        assert res.objectives[-1] <= res.objectives[0]


class TestProxOfDiscrepancy:
    def test_zero_step_returns_input(self, rng):
        D = LeastSquares(random_dense(rng, 5, 5))
        v = rng.standard_normal(5)
        np.testing.assert_array_equal(prox_of_discrepancy(D, 0.0, v, np.zeros(5)), v)

    def test_identity_scalar_algebra(self, rng):
        D = LeastSquares(DenseOperator.identity(4))
        v = rng.standard_normal(4)
        out = prox_of_discrepancy(D, 3.0, v, np.zeros(4))
        np.testing.assert_allclose(out, v / 4.0, rtol=1e-12)

    def test_optimality_residual(self, rng):
        op = random_dense(rng, 8, 8)
        D = LeastSquares(op)
        v, y = rng.standard_normal(8), rng.standard_normal(8)
        s = 0.7
        x = prox_of_discrepancy(D, s, v, y)
        # gradient of ||x - v||^2/2 + s D(x, y)
        g = (x - v) + s * D.grad(x, y)
        assert np.linalg.norm(g) <= 1e-9

    def test_size_limit(self, rng):
        D = LeastSquares(random_dense(rng, 4, 4))
        with pytest.raises(ValueError):
            prox_of_discrepancy(D, 1.0, np.zeros(4), np.zeros(4), limit=2)


class TestSolveAdmm:
    def test_agrees_with_fbs(self, rng):
        for _ in range(5):
            p, direct, _ = quadratic_problem(rng, lam=float(rng.uniform(0.1, 0.5)))
            tol = 1e-9
            fbs = solve_fbs(p, tol=tol)
            admm = solve_admm(p, tol=tol)
            assert admm.converged
            assert np.linalg.norm(admm.x_star - fbs.x_star) <= 10 * tol

    def test_one_dimensional_closed_form(self):
        # A = Id in 1-D: fixed point x = y / (1 + lam * a)
        D = LeastSquares(DenseOperator.identity(1))
        s, a, lam = 1.0, 1.0, 0.5
        y = np.array([3.0])
        p = PnPProblem(D, ProxQuadratic(s * a), lam, y, StepConfig(s))
        admm = solve_admm(p, tol=1e-11)
        assert admm.x_star[0] == pytest.approx(3.0 / 1.5, abs=1e-9)

    def test_zero_data_fixed_at_origin(self, rng):
        D = LeastSquares(random_dense(rng, 6, 6, norm_cap=1.0))
        p = PnPProblem(D, ProxQuadratic(1.0), 0.3, np.zeros(6), StepConfig(D.beta))
        admm = solve_admm(p, tol=1e-10)
        assert np.linalg.norm(admm.x_star) <= 1e-9

    def test_custom_inits(self, rng):
        p, direct, _ = quadratic_problem(rng, lam=0.3)
        admm = solve_admm(p, inits=(np.ones(8), np.zeros(8)), tol=1e-9)
        assert admm.converged
        assert np.linalg.norm(admm.x_star - direct) <= 1e-7

import math

import numpy as np
import pytest

from bundlekit.errors import InputDomainError
from bundlekit.oracles import (
    CompositeObjective,
    MaxAffineFunction,
    QuadraticFunction,
    exact_prox_oracle,
)
from bundlekit.problems import make_problem
from bundlekit.solvers import (
    NullSequenceTracker,
    SolverConfig,
    aippa_run,
    apbm_composite_run,
    apbm_run,
    check_inexactness_criterion,
    composite_eps0,
    composite_eps_next,
    momentum_next,
    null_step_constant,
    null_step_test_smooth,
    pbm_run,
    tau_bound,
)


def quadratic_problem(n=20, condition=100, seed=7):
    p = make_problem({"family": "quadratic", "n": n, "condition": condition}, seed=seed)
    return p


def run_cfg(**kw):
    base = dict(rho=1.0, max_iter=5000, bundle_cap=60, qp_tol=1e-12)
    base.update(kw)
    return SolverConfig(**base)


class TestNullStepConstant:
    def test_equal_parameters(self):
        assert null_step_constant(1.0, 1.0) == pytest.approx(2.0 * (math.sqrt(2.0) + 1.0))

    def test_double_smoothness(self):
        assert null_step_constant(2.0, 1.0) == pytest.approx(12.0)

    def test_vanishes_for_large_rho(self):
        assert null_step_constant(1.0, 1e12) < 1e-5

    def test_rejects_nonpositive(self):
        with pytest.raises(InputDomainError):
            null_step_constant(0.0, 1.0)


class TestNullStepTest:
    def test_repeated_candidate_passes(self):
        y = np.array([1.0, 0.0])
        assert null_step_test_smooth(5.0, y, y, np.zeros(2))

    def test_candidate_at_center_fails(self):
        x = np.zeros(2)
        assert not null_step_test_smooth(5.0, x, np.array([1.0, 0.0]), x)

    def test_boundary_counts_as_pass(self):
        # C ||dy|| = 2 equals ||x - y|| = 2.
        assert null_step_test_smooth(2.0, np.array([2.0]), np.array([1.0]), np.array([0.0]))


class TestInexactnessCriterion:
    def test_stationary_center_has_zero_slack(self):
        f = QuadraticFunction(np.eye(2), np.zeros(2))
        holds, slack = check_inexactness_criterion(f, 1.0, np.zeros(2), np.zeros(2))
        assert holds and slack == 0.0

    def test_exact_prox_point_satisfies(self):
        p = quadratic_problem(n=6, seed=3)
        f = p.objective
        from bundlekit.oracles import prox_exact
        y = prox_exact(f, f.L, p.x0)
        holds, slack = check_inexactness_criterion(f, f.L, p.x0, y)
        assert holds
        # At the exact prox point w = y, so the left side vanishes.
        assert slack == pytest.approx(float(f.gradient(y) @ f.gradient(y)) / (2 * f.L),
                                      rel=1e-9)

    def test_every_serious_step_of_a_run(self):
        p = quadratic_problem(n=8, seed=5)
        f = p.objective
        res = apbm_run(f, p.x0, run_cfg(rho=f.L, target_gap=1e-6))
        assert res.serious_steps > 3
        for sr in res.serious_records:
            assert sr.criterion_slack >= -1e-10


class TestMomentum:
    def test_defining_quadratic_identity(self):
        t = 1.0
        for _ in range(100):
            t_next = momentum_next(t)
            assert t_next * t_next - t_next == pytest.approx(t * t, abs=1e-12)
            t = t_next

    def test_growth_lower_bound(self):
        t = 1.0
        for k in range(1, 10_001):
            t = momentum_next(t)
            assert t >= (k + 2) / 2.0

    def test_first_values(self):
        assert momentum_next(1.0) == pytest.approx((1 + math.sqrt(5)) / 2)


class TestAPBM:
    def test_unit_quadratic_first_step_hits_optimum(self):
        f = QuadraticFunction(np.eye(3), np.zeros(3))
        f.x_star = np.zeros(3)
        f.f_star = 0.0
        x0 = np.array([1.5, -0.5, 2.0])
        res = apbm_run(f, x0, run_cfg(rho=1.0, target_gap=1e-12))
        assert res.iterations == 1
        assert res.converged and res.stop_reason == "gap"
        np.testing.assert_allclose(res.x, np.zeros(3), atol=1e-12)

    def test_start_at_optimum_exits_immediately(self):
        p = quadratic_problem(n=5, seed=11)
        f = p.objective
        res = apbm_run(f, f.x_star, run_cfg(rho=f.L, target_gap=1e-10))
        assert res.iterations == 1
        assert res.gap <= 1e-10

    def test_serious_envelope_on_quadratic(self):
        p = quadratic_problem()
        f = p.objective
        rho = f.L
        res = apbm_run(f, p.x0, run_cfg(rho=rho, target_gap=1e-6))
        assert res.converged
        d2 = float(np.sum((p.x0 - f.x_star) ** 2))
        scale = 1.0 + res.serious_records[0].f_zeta - f.f_star
        for sr in res.serious_records:
            bound = 2.0 * rho * d2 / (sr.k + 1) ** 2
            assert sr.f_zeta - f.f_star <= bound + 1e-9 * scale

    def test_serious_step_budget(self):
        p = quadratic_problem()
        f = p.objective
        rho = f.L
        d = float(np.linalg.norm(p.x0 - f.x_star))
        for eps in (1e-2, 1e-4):
            res = apbm_run(f, p.x0, run_cfg(rho=rho, target_gap=eps))
            assert res.converged
            assert res.serious_steps <= math.ceil(math.sqrt(2 * rho) * d / math.sqrt(eps))

    def test_xi_diagnostics(self):
        p = quadratic_problem(n=10, seed=2)
        f = p.objective
        rho = f.L
        res = apbm_run(f, p.x0, run_cfg(rho=rho, target_gap=1e-7))
        tb = tau_bound(f.L, rho)
        prev = None
        for rec in res.trace:
            # xi is nonnegative up to solver noise.
            assert rec.xi >= -1e-9 * (1.0 + abs(rec.m))
            if prev is not None and prev.step_kind == "null" and rec.step_kind == "null":
                assert rec.xi <= tb * prev.xi + 1e-9 * (1.0 + prev.xi)
            prev = rec

    def test_m_monotone_within_null_sequences(self):
        p = quadratic_problem(n=10, seed=4)
        f = p.objective
        res = apbm_run(f, p.x0, run_cfg(rho=f.L, target_gap=1e-7))
        prev = None
        for rec in res.trace:
            if prev is not None and prev.step_kind == "null":
                assert rec.m >= prev.m - 1e-9 * (1.0 + abs(prev.m))
            prev = rec

    def test_trace_sink_receives_rows(self):
        p = quadratic_problem(n=5, seed=6)
        f = p.objective
        rows = []
        res = apbm_run(f, p.x0, run_cfg(rho=f.L, target_gap=1e-4), sink=rows.append)
        assert len(rows) == len(res.trace) == res.iterations

    def test_requires_smoothness_constant(self):
        fa = MaxAffineFunction(np.array([[1.0], [-1.0]]), np.zeros(2))
        with pytest.raises(InputDomainError):
            apbm_run(fa, np.array([1.0]), run_cfg())

    def test_nonincreasing_rho_schedule(self):
        p = quadratic_problem(n=8, seed=9)
        f = p.objective
        cfg = run_cfg(rho=f.L, target_gap=1e-6,
                      rho_schedule=lambda k: f.L * 0.99 ** k)
        res = apbm_run(f, p.x0, cfg)
        assert res.converged
        assert res.serious_steps > 1

    def test_increasing_rho_schedule_rejected(self):
        p = quadratic_problem(n=5, seed=10)
        f = p.objective
        cfg = run_cfg(rho=f.L, target_gap=1e-6,
                      rho_schedule=lambda k: f.L * (1.0 + k))
        with pytest.raises(InputDomainError, match="nonincreasing"):
            apbm_run(f, p.x0, cfg)


class TestPBM:
    def test_abs_value_first_step_is_serious(self):
        f = MaxAffineFunction(np.array([[1.0], [-1.0]]), np.zeros(2))
        f.x_star = np.zeros(1)
        f.f_star = 0.0
        res = pbm_run(f, np.array([2.0]), run_cfg(rho=1.0, beta=0.5, target_gap=1e-6))
        first = res.trace[0]
        # Single cut of slope 1: y = 2 - 1 = 1, model drop 1 = true drop 1.
        assert first.step_kind == "serious"
        assert first.f_y == pytest.approx(1.0)
        assert res.converged

    def test_start_at_kink_with_zero_subgradient_cut(self):
        # The zero-slope piece comes first so the tie-broken subgradient at
        # the kink is 0; the first candidate is then the start itself.
        f = MaxAffineFunction(np.array([[0.0], [1.0], [-1.0]]), np.zeros(3))
        f.x_star = np.zeros(1)
        f.f_star = 0.0
        res = pbm_run(f, np.zeros(1), run_cfg(rho=1.0, target_gap=1e-12))
        assert res.iterations == 1
        assert res.gap == 0.0
        np.testing.assert_array_equal(res.trace[0].f_y, 0.0)

    def test_quadratic_descent_test_settles_serious(self):
        # With an exact-enough model on a tiny quadratic the descent test
        # passes at every remaining step.
        f = QuadraticFunction(np.diag([1.0, 0.3]), np.array([0.2, -0.1]))
        f.x_star = np.linalg.solve(f.Q, -f.b)
        f.f_star = f.value(f.x_star)
        res = pbm_run(f, np.array([2.0, -1.5]), run_cfg(rho=f.L, target_gap=1e-10))
        kinds = [r.step_kind for r in res.trace]
        assert res.converged
        assert all(k == "serious" for k in kinds[f.n + 1:])

    def test_max_affine_reaches_tight_gap(self):
        rng = np.random.default_rng(12)
        f = MaxAffineFunction(rng.standard_normal((5, 2)), rng.standard_normal(5))
        # Reference optimum by dense grid around the best vertex region.
        grid = np.linspace(-4, 4, 1201)
        X, Y = np.meshgrid(grid, grid, indexing="ij")
        P = np.stack([X.ravel(), Y.ravel()], axis=1)
        vals = np.max(P @ f.V.T + f.b, axis=1)
        i0 = int(np.argmin(vals))
        # Refine once.
        c = P[i0]
        gfine = np.linspace(-0.02, 0.02, 801)
        Xf, Yf = np.meshgrid(c[0] + gfine, c[1] + gfine, indexing="ij")
        Pf = np.stack([Xf.ravel(), Yf.ravel()], axis=1)
        vf = np.max(Pf @ f.V.T + f.b, axis=1)
        f.f_star = float(np.min(vf))
        f.x_star = Pf[int(np.argmin(vf))]
        res = pbm_run(f, np.array([3.0, -2.0]), run_cfg(rho=1.0, target_gap=1e-6,
                                                        max_iter=3000))
        assert res.f_x <= f.f_star + 1e-6


class TestAIPPA:
    def test_identity_oracle_on_zero_function_is_stationary(self):
        def oracle(x, rho):
            return x, np.zeros_like(x)

        x0 = np.array([1.0, -2.0])
        res = aippa_run(oracle, x0, 1.0, 25)
        for rec in res.trace:
            np.testing.assert_array_equal(rec.zeta, x0)

    def test_envelope_with_exact_prox(self):
        p = quadratic_problem()
        f = p.objective
        rho = f.L
        res = aippa_run(exact_prox_oracle(f), p.x0, rho, 2000, f=f, target_gap=1e-7)
        d2 = float(np.sum((p.x0 - f.x_star) ** 2))
        assert res.trace[-1].gap <= 1e-7
        for rec in res.trace:
            assert rec.f_zeta - f.f_star <= 2.0 * rho * d2 / (rec.j + 1) ** 2 + 1e-9

    def test_momentum_sequence_matches_recursion(self):
        def oracle(x, rho):
            return x, np.zeros_like(x)

        res = aippa_run(oracle, np.zeros(1), 1.0, 50)
        t = 1.0
        for rec in res.trace:
            t = momentum_next(t)
            assert rec.t == pytest.approx(t, abs=1e-12)

    def test_rho_schedule_callable(self):
        f = QuadraticFunction(np.eye(1), np.zeros(1))
        f.x_star = np.zeros(1)
        f.f_star = 0.0
        res = aippa_run(exact_prox_oracle(f), np.array([4.0]), lambda j: 2.0 / j,
                        40, f=f)
        assert res.trace[-1].gap <= 1e-6


class TestComposite:
    @staticmethod
    def problem():
        return make_problem({"family": "max-affine-plus-quadratic", "n": 2, "m": 5},
                            seed=3)

    def test_single_piece_model_is_exact(self):
        f = MaxAffineFunction(np.array([[1.0, -1.0]]), np.array([0.5]))
        g = QuadraticFunction(np.eye(2), np.zeros(2))
        h = CompositeObjective(f, g)
        res = apbm_composite_run(h, np.array([2.0, 1.0]), run_cfg(stat_tol=1e-10,
                                                                  max_iter=100))
        assert all(rec.step_kind == "serious" for rec in res.trace)
        assert res.converged

    def test_abs_value_without_quadratic(self):
        f = MaxAffineFunction(np.array([[1.0], [-1.0]]), np.zeros(2))
        g = QuadraticFunction(np.zeros((1, 1)), np.zeros(1))
        h = CompositeObjective(f, g, x_star=np.zeros(1), f_star=0.0)
        res = apbm_composite_run(h, np.array([2.0]), run_cfg(target_gap=1e-9,
                                                             max_iter=500))
        assert res.converged
        # Once both slopes are cut the model is exact near zero and the
        # serious test fires with zero model gap.
        assert res.max_null_run <= 2

    def test_eps_schedule_formula(self):
        rho, B = 1.3, 0.7
        assert composite_eps0(B, rho) == pytest.approx(
            math.sqrt(6 * B) / (math.pi * math.sqrt(rho) * 4))
        for j in (0, 1, 5):
            assert composite_eps_next(B, rho, j) == pytest.approx(
                math.sqrt(6 * B) / (math.pi * math.sqrt(rho) * (j + 3) ** 2))

    def test_serious_envelope(self):
        p = self.problem()
        h = p.objective
        cfg = run_cfg(rho=1.0, B=1.0, target_gap=1e-9, max_iter=2000)
        res = apbm_composite_run(h, p.x0, cfg)
        assert res.converged
        const = (h.value(p.x0) - p.f_star
                 + 0.5 * cfg.rho * float(np.sum((p.x0 - p.x_star) ** 2)) + cfg.B)
        for sr in res.serious_records:
            bound = 4.0 / (sr.k + 2) ** 2 * const
            assert sr.f_zeta - p.f_star <= bound + 1e-7 * (1.0 + abs(p.f_star))

    def test_type2_inclusion_at_serious_steps(self):
        p = self.problem()
        h = p.objective
        cfg = run_cfg(rho=1.0, B=1.0, target_gap=1e-9, max_iter=2000)
        res = apbm_composite_run(h, p.x0, cfg)
        rng = np.random.default_rng(0)
        for sr in res.serious_records:
            v = cfg.rho * (sr.x_center - sr.y)
            hy = h.value(sr.y)
            scale = 1.0 + abs(hy)
            for _ in range(100):
                xp = sr.y + rng.standard_normal(h.n) * 2.0
                lhs = h.value(xp)
                rhs = hy + v @ (xp - sr.y) - sr.eps ** 2 * cfg.rho / 2.0
                assert lhs >= rhs - 1e-9 * scale


class TestDiagnosticsTracker:
    def test_single_candidate_xi(self):
        tracker = NullSequenceTracker(rho=2.0, L=2.0)
        sample = tracker.update(np.zeros(2), prox_value=1.5, m_value=1.2)
        assert sample.xi == pytest.approx(0.3)
        np.testing.assert_array_equal(sample.z, np.zeros(2))

    def test_incumbent_keeps_best(self):
        tracker = NullSequenceTracker(rho=1.0)
        tracker.update(np.zeros(1), 2.0, 1.0)
        sample = tracker.update(np.ones(1), 3.0, 1.5)
        assert sample.xi == pytest.approx(0.5)
        np.testing.assert_array_equal(sample.z, np.zeros(1))

    def test_exact_interpolation_gives_zero_xi(self):
        tracker = NullSequenceTracker(rho=1.0)
        sample = tracker.update(np.zeros(1), 1.0, 1.0)
        assert sample.xi == 0.0

    def test_tau_bound_formula(self):
        L, rho = 2.0, 0.5
        C = null_step_constant(L, rho)
        q = L / rho + C * C
        assert tau_bound(L, rho) == pytest.approx(q / (1 + q))
        # Smallest tau satisfying tau/(1-tau) >= L/rho + C^2, at equality.
        tb = tau_bound(L, rho)
        assert tb / (1 - tb) == pytest.approx(q, rel=1e-12)


class TestConfigValidation:
    def test_beta_range(self):
        with pytest.raises(InputDomainError):
            SolverConfig(beta=1.0)

    def test_rho_positive(self):
        with pytest.raises(InputDomainError):
            SolverConfig(rho=0.0)

    def test_B_positive(self):
        with pytest.raises(InputDomainError):
            SolverConfig(B=-1.0)

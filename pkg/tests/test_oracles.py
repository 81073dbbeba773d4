import numpy as np
import pytest

from bundlekit.errors import ConfigError, InputDomainError, OracleFailureError
from bundlekit.oracles import (
    LogSumExpFunction,
    MaxAffineFunction,
    QuadraticFunction,
    SmoothConvexFunction,
    eval_oracle,
    prox_exact,
)
from bundlekit.problems import format_descriptor, make_problem, parse_descriptor

from brute_force import central_difference_gradient, pairwise_max_distance


def registered_smooth_instances():
    return [
        make_problem({"family": "quadratic", "n": 6, "condition": 50}, seed=1).objective,
        make_problem({"family": "least-squares", "n": 5, "m": 12}, seed=2).objective,
        make_problem({"family": "log-sum-exp", "n": 4, "m": 9, "sigma": 0.7}, seed=3).objective,
    ]


class TestEval:
    def test_quadratic_identity_case(self):
        f = QuadraticFunction(np.eye(2), np.zeros(2))
        val, grad = eval_oracle(f, np.array([3.0, 4.0]))
        assert val == 12.5
        np.testing.assert_allclose(grad, [3.0, 4.0])

    def test_max_affine_abs_value(self):
        f = MaxAffineFunction(np.array([[1.0], [-1.0]]), np.zeros(2))
        assert f.value(np.array([2.0])) == 2.0
        np.testing.assert_allclose(f.subgradient(np.array([2.0])), [1.0])

    def test_max_affine_tie_takes_lowest_index(self):
        f = MaxAffineFunction(np.array([[1.0], [-1.0]]), np.zeros(2))
        np.testing.assert_allclose(f.subgradient(np.array([0.0])), [1.0])

    def test_log_sum_exp_at_zero(self):
        rng = np.random.default_rng(5)
        m, sigma = 7, 0.9
        f = LogSumExpFunction(rng.standard_normal((m, 3)), sigma=sigma)
        val, _ = eval_oracle(f, np.zeros(3))
        assert val == pytest.approx(sigma * np.log(m), rel=1e-14)

    def test_rejects_nonfinite_point(self):
        f = QuadraticFunction(np.eye(2), np.zeros(2))
        with pytest.raises(InputDomainError):
            eval_oracle(f, np.array([1.0, np.inf]))

    def test_oracle_failure_names_function(self):
        class Broken(SmoothConvexFunction):
            name = "broken-oracle"

            def value(self, x):
                return np.nan

            def gradient(self, x):
                return np.zeros(self.n)

        with pytest.raises(OracleFailureError, match="broken-oracle"):
            eval_oracle(Broken(2, 1.0), np.zeros(2))


class TestProxExact:
    def test_scalar_cases(self):
        f = QuadraticFunction(np.eye(1), np.zeros(1))
        np.testing.assert_allclose(prox_exact(f, 1.0, np.array([2.0])), [1.0])
        np.testing.assert_allclose(prox_exact(f, 3.0, np.array([4.0])), [3.0])

    def test_diagonal_case_solves_per_coordinate(self):
        f = QuadraticFunction(np.diag([2.0, 0.0]), np.zeros(2))
        y = prox_exact(f, 1.0, np.array([3.0, 3.0]))
        # (Q + I) y = x coordinate-wise: 3y1 = 3, y2 = 3.
        np.testing.assert_allclose(y, [1.0, 3.0], atol=1e-12)

    def test_minimizes_prox_objective(self):
        rng = np.random.default_rng(8)
        G = rng.standard_normal((4, 4))
        f = QuadraticFunction(G.T @ G, rng.standard_normal(4))
        rho, x = 0.7, rng.standard_normal(4)
        y = prox_exact(f, rho, x)
        base = f.value(y) + 0.5 * rho * np.sum((y - x) ** 2)
        for _ in range(100):
            d = rng.standard_normal(4) * 10.0 ** rng.uniform(-6, 0)
            trial = f.value(y + d) + 0.5 * rho * np.sum((y + d - x) ** 2)
            assert trial >= base - 1e-9

    def test_rejects_bad_rho(self):
        f = QuadraticFunction(np.eye(1), np.zeros(1))
        with pytest.raises(InputDomainError):
            prox_exact(f, 0.0, np.array([1.0]))


class TestMakeProblem:
    def test_quadratic_determinism(self):
        a = make_problem({"family": "quadratic", "n": 20, "condition": 100}, seed=7)
        b = make_problem({"family": "quadratic", "n": 20, "condition": 100}, seed=7)
        assert a.objective.Q.tobytes() == b.objective.Q.tobytes()
        assert a.objective.b.tobytes() == b.objective.b.tobytes()
        assert a.x0.tobytes() == b.x0.tobytes()
        c = make_problem({"family": "quadratic", "n": 20, "condition": 100}, seed=8)
        assert a.objective.Q.tobytes() != c.objective.Q.tobytes()

    def test_quadratic_condition_number(self):
        p = make_problem({"family": "quadratic", "n": 12, "condition": 100}, seed=4)
        eigs = np.linalg.eigvalsh(p.objective.Q)
        assert eigs[-1] / eigs[0] == pytest.approx(100.0, rel=1e-8)
        assert p.objective.L == pytest.approx(eigs[-1], rel=1e-12)

    def test_least_squares_smoothness_is_gram_norm(self):
        p = make_problem({"family": "least-squares", "n": 6, "m": 15}, seed=9)
        rng = np.random.default_rng(9)
        A = rng.standard_normal((15, 6))
        assert p.objective.L == pytest.approx(np.linalg.norm(A, 2) ** 2, rel=1e-10)

    def test_max_affine_constants_match_brute_force(self):
        p = make_problem({"family": "max-affine-plus-quadratic", "n": 2, "m": 5}, seed=3)
        fa = p.objective.f
        assert fa.M_f == pytest.approx(max(np.linalg.norm(v) for v in fa.V))
        assert fa.D_b == pytest.approx(
            max(abs(b1 - b2) for b1 in fa.b for b2 in fa.b))
        assert fa.diameter == pytest.approx(pairwise_max_distance(fa.V), rel=1e-12)

    def test_unknown_family_is_config_error(self):
        with pytest.raises(ConfigError, match="quadratic"):
            make_problem({"family": "mystery"}, seed=0)

    def test_composite_reference_flagged_numeric(self):
        p = make_problem({"family": "max-affine-plus-quadratic", "n": 2, "m": 5}, seed=3)
        assert p.f_star_kind == "numeric-reference"
        assert p.f_star is not None and np.isfinite(p.f_star)


class TestDescriptors:
    def test_round_trip(self):
        desc = parse_descriptor("family=quadratic,n=20,condition=100,seed=7")
        text = format_descriptor(desc)
        assert parse_descriptor(text) == desc

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_descriptor("family=quadratic\nwat=1")

    def test_missing_family(self):
        with pytest.raises(ConfigError):
            parse_descriptor("n=4")


class TestOracleInvariants:
    def test_finite_difference_gradients(self):
        for f in registered_smooth_instances():
            rng = np.random.default_rng(13)
            for _ in range(100):
                x = rng.standard_normal(f.n)
                _, g = eval_oracle(f, x)
                fd = central_difference_gradient(f.value, x)
                assert np.linalg.norm(fd - g) <= 1e-5 * (1.0 + np.linalg.norm(g))

    def test_gradient_lipschitz_bound(self):
        for f in registered_smooth_instances():
            rng = np.random.default_rng(17)
            a = rng.standard_normal((1000, f.n))
            b = rng.standard_normal((1000, f.n))
            for xa, xb in zip(a, b):
                ga = f.gradient(xa)
                gb = f.gradient(xb)
                lhs = np.linalg.norm(ga - gb)
                assert lhs <= f.L * (1.0 + 1e-6) * np.linalg.norm(xa - xb) + 1e-12

    def test_convexity_lower_bounds(self):
        for f in registered_smooth_instances():
            rng = np.random.default_rng(19)
            for _ in range(200):
                a = rng.standard_normal(f.n)
                b = rng.standard_normal(f.n)
                fa, ga = eval_oracle(f, a)
                assert f.value(b) >= fa + ga @ (b - a) - 1e-9 * max(1.0, abs(fa))

    def test_max_affine_evaluation_is_exact_max(self):
        rng = np.random.default_rng(23)
        fa = MaxAffineFunction(rng.standard_normal((6, 3)), rng.standard_normal(6))
        for _ in range(50):
            x = rng.standard_normal(3)
            # Exactly the max of its own pieces; per-row dots agree up to
            # summation order.
            assert fa.value(x) == np.max(fa.pieces(x))
            per_row = max(np.dot(v, x) + b for v, b in zip(fa.V, fa.b))
            assert fa.value(x) == pytest.approx(per_row, abs=1e-12)
            idx = int(np.argmax(fa.pieces(x)))
            np.testing.assert_array_equal(fa.subgradient(x), fa.V[idx])

"""Acceptance suite: one check per testable rate inequality.

Every criterion re-evaluates its inequality directly from solver output at
a pinned tolerance; nothing is inferred from fitted curves except the two
shape checks (null-run growth, which the theory only bounds up to
constants).  The suite is deterministic: fixed seeds, fixed configs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .models import Bundle, eval_smooth_model, eval_smooth_model_many, \
    model_diameter, verify_interpolation
from .oracles import MaxAffineFunction, QuadraticFunction, exact_prox_oracle
from .problems import make_problem
from .harness import fit_rates, recurrence_lemma_check
from .simplex_qp import SimplexQP, solve as solve_qp
from .solvers import (
    SolverConfig,
    aippa_run,
    apbm_composite_run,
    apbm_run,
    pbm_run,
    tau_bound,
)
from .subproblems import solve_smooth_step, verify_nonconvex_constraints

EPS_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
NULLRUN_EPS_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float


# ---------------------------------------------------------------------------
# Reusable checkers (also exercised by the unit tests with perturbed inputs)


def momentum_envelope_violations(points, f_star, rho, d0_sq, tol):
    """Count pairs ``(k, f(zeta_k))`` violating the bound
    ``f(zeta_k) - f* <= 2 rho d0^2 / (k+1)^2``."""
    worst = -math.inf
    count = 0
    for k, f_zeta in points:
        excess = (f_zeta - f_star) - 2.0 * rho * d0_sq / (k + 1) ** 2
        worst = max(worst, excess)
        if excess > tol:
            count += 1
    return count, worst


def xi_decay_violations(trace, tau, tol_scale=1e-9):
    """Count consecutive null pairs violating ``xi_next <= tau xi + tol``."""
    count = 0
    worst = -math.inf
    prev = None
    for rec in trace:
        if prev is not None and prev.step_kind == "null" and rec.step_kind == "null":
            excess = rec.xi - (tau * prev.xi + tol_scale * (1.0 + prev.xi))
            worst = max(worst, excess)
            if excess > 0.0:
                count += 1
        prev = rec
    return count, worst


def replay_gap_monitor(result, f_star, epsilon):
    """Serious steps until the run's best-value monitor reaches ``epsilon``.

    Replays the in-run stopping logic over the recorded trace, so the count
    equals what a fresh run with this target would have reported.
    """
    best = result.f_x0
    serious = 0
    sid = 0
    for rec in result.trace:
        if rec.f_y < best:
            best = rec.f_y
        if rec.step_kind == "serious":
            serious += 1
            fz = result.serious_records[sid].f_zeta
            sid += 1
            if fz < best:
                best = fz
        if best - f_star <= epsilon:
            return serious
    return None


def max_null_run_at(result, f_star, epsilon):
    """Longest null run seen before the gap monitor reaches ``epsilon``."""
    best = result.f_x0
    sid = 0
    longest = 0
    for rec in result.trace:
        longest = max(longest, rec.null_run_len)
        if rec.f_y < best:
            best = rec.f_y
        if rec.step_kind == "serious":
            fz = result.serious_records[sid].f_zeta
            sid += 1
            if fz < best:
                best = fz
        if best - f_star <= epsilon:
            return longest
    return None


def _grid_reference(H, c, n_points=1_000_000):
    """Barycentric-grid minimum (m <= 3), refined once around the best cell."""
    m = H.shape[0]

    def batch(L):
        return 0.5 * np.sum(L * (H @ L), axis=0) + c @ L

    if m == 1:
        return float(0.5 * H[0, 0] + c[0])
    if m == 2:
        a = np.linspace(0.0, 1.0, n_points)
        vals = batch(np.vstack([a, 1.0 - a]))
        i = int(np.argmin(vals))
        lo = max(0.0, a[i] - 2.0 / n_points)
        hi = min(1.0, a[i] + 2.0 / n_points)
        a2 = np.linspace(lo, hi, n_points)
        vals2 = batch(np.vstack([a2, 1.0 - a2]))
        return float(min(vals.min(), vals2.min()))
    n_side = int(math.sqrt(2.0 * n_points))
    i, j = np.meshgrid(np.arange(n_side + 1), np.arange(n_side + 1), indexing="ij")
    keep = (i + j) <= n_side
    l1 = i[keep] / n_side
    l2 = j[keep] / n_side
    vals = batch(np.vstack([l1, l2, 1.0 - l1 - l2]))
    k = int(np.argmin(vals))
    delta = 2.0 / n_side
    g = np.linspace(-delta, delta, 1000)
    a1, a2 = np.meshgrid(np.clip(l1[k] + g, 0.0, 1.0),
                         np.clip(l2[k] + g, 0.0, 1.0), indexing="ij")
    a1, a2 = a1.ravel(), a2.ravel()
    ok = a1 + a2 <= 1.0
    vals2 = batch(np.vstack([a1[ok], a2[ok], 1.0 - a1[ok] - a2[ok]]))
    return float(min(vals.min(), vals2.min()))


def _random_cut_bundle(rng, n, m):
    G = rng.standard_normal((n, n))
    f = QuadraticFunction(G.T @ G / n, rng.standard_normal(n))
    bundle = Bundle(n)
    for _ in range(m):
        y = rng.standard_normal(n)
        bundle.add_cut(y, f.value(y), f.gradient(y))
    return f, bundle


# ---------------------------------------------------------------------------
# Suite


class AcceptanceSuite:
    """Caches the shared runs so each criterion stays within its budget."""

    def __init__(self):
        self._cache = {}

    # -- shared fixtures ----------------------------------------------------

    def quadratic_problem(self):
        if "qp" not in self._cache:
            self._cache["qp"] = make_problem(
                {"family": "quadratic", "n": 20, "condition": 100}, seed=7)
        return self._cache["qp"]

    def apbm_config(self, target):
        f = self.quadratic_problem().objective
        return SolverConfig(rho=f.L, max_iter=50_000, target_gap=target,
                            bundle_cap=60, qp_tol=1e-12)

    def apbm_hi(self):
        """a-PBM at the tight 1e-8 target; reused by criteria 1-4 and 8."""
        if "apbm_hi" not in self._cache:
            p = self.quadratic_problem()
            t0 = time.perf_counter()
            result = apbm_run(p.objective, p.x0, self.apbm_config(1e-8))
            self._cache["apbm_hi"] = (result, time.perf_counter() - t0)
        return self._cache["apbm_hi"]

    def aippa_hi(self):
        if "aippa_hi" not in self._cache:
            p = self.quadratic_problem()
            f = p.objective
            t0 = time.perf_counter()
            result = aippa_run(exact_prox_oracle(f), p.x0, f.L, 50_000,
                               f=f, target_gap=1e-8)
            self._cache["aippa_hi"] = (result, time.perf_counter() - t0)
        return self._cache["aippa_hi"]

    def apbm_mid(self):
        """a-PBM at 1e-6, the acceleration baseline for criterion 12."""
        if "apbm_mid" not in self._cache:
            p = self.quadratic_problem()
            self._cache["apbm_mid"] = apbm_run(p.objective, p.x0,
                                               self.apbm_config(1e-6))
        return self._cache["apbm_mid"]

    def composite_problem(self):
        if "cp" not in self._cache:
            self._cache["cp"] = make_problem(
                {"family": "max-affine-plus-quadratic", "n": 2, "m": 5}, seed=3)
        return self._cache["cp"]

    def composite_run(self):
        if "comp" not in self._cache:
            p = self.composite_problem()
            cfg = SolverConfig(rho=1.0, B=1.0, max_iter=5_000, target_gap=1e-9,
                               qp_tol=1e-12)
            t0 = time.perf_counter()
            result = apbm_composite_run(p.objective, p.x0, cfg)
            self._cache["comp"] = (result, cfg, time.perf_counter() - t0)
        return self._cache["comp"]

    # -- criteria -----------------------------------------------------------

    def criterion_1(self):
        t0 = time.perf_counter()
        p = self.quadratic_problem()
        f = p.objective
        rho = f.L
        d2 = float(np.sum((p.x0 - f.x_star) ** 2))
        apbm_result, apbm_secs = self.apbm_hi()
        aippa_result, aippa_secs = self.aippa_hi()
        apbm_points = [(sr.k, sr.f_zeta) for sr in apbm_result.serious_records]
        aippa_points = [(rec.j, rec.f_zeta) for rec in aippa_result.trace]
        apbm_ok = apbm_result.converged
        aippa_ok = aippa_result.trace[-1].gap <= 1e-8
        parts = []
        ok = True
        for name, points, secs, reached in (("a-PBM", apbm_points, apbm_secs, apbm_ok),
                                            ("a-IPPA", aippa_points, aippa_secs, aippa_ok)):
            if not points:
                ok = False
                parts.append(f"{name}: no serious steps")
                continue
            gap1 = points[0][1] - f.f_star
            tol = 1e-9 * (1.0 + gap1)
            bad, worst = momentum_envelope_violations(points, f.f_star, rho, d2, tol)
            ok = ok and bad == 0 and reached and secs < 30.0
            parts.append(f"{name}: {len(points)} serious steps, "
                         f"worst excess {worst:.2e}, {secs:.1f}s")
        return CriterionResult(1, "momentum-stage envelope 2*rho*d0^2/(k+1)^2",
                               ok, "; ".join(parts), time.perf_counter() - t0)

    def criterion_2(self):
        t0 = time.perf_counter()
        p = self.quadratic_problem()
        f = p.objective
        rho = f.L
        d = float(np.linalg.norm(p.x0 - f.x_star))
        result, _ = self.apbm_hi()
        ok = True
        parts = []
        for eps in EPS_GRID:
            steps = replay_gap_monitor(result, f.f_star, eps)
            bound = math.ceil(math.sqrt(2.0 * rho) * d / math.sqrt(eps))
            good = steps is not None and steps <= bound
            ok = ok and good
            parts.append(f"eps={eps:.0e}: {steps}<={bound}")
        secs = time.perf_counter() - t0
        return CriterionResult(2, "serious-step budget ceil(sqrt(2 rho) d0/sqrt(eps))",
                               ok and secs < 60.0, "; ".join(parts), secs)

    def criterion_3(self):
        t0 = time.perf_counter()
        slacks = []
        for result in (self.apbm_hi()[0], self.apbm_mid()):
            slacks.extend(sr.criterion_slack for sr in result.serious_records)
        worst = min(slacks)
        ok = worst >= -1e-10
        detail = f"{len(slacks)} serious steps, min slack {worst:.3e}"
        return CriterionResult(3, "inexactness criterion at every serious step",
                               ok, detail, time.perf_counter() - t0)

    def criterion_4(self):
        t0 = time.perf_counter()
        p = self.quadratic_problem()
        f = p.objective
        result, _ = self.apbm_hi()
        tau = tau_bound(f.L, f.L)
        bad, worst = xi_decay_violations(result.trace, tau)
        detail = f"tau_bound={tau:.4f}, violations={bad}, worst excess {worst:.2e}"
        return CriterionResult(4, "geometric decay of the null-sequence gap xi",
                               bad == 0, detail, time.perf_counter() - t0)

    def criterion_5(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(42)
        worst_interp = 0.0
        worst_bound = -math.inf
        worst_ratio = 0.0
        ok = True
        for _ in range(20):
            n = int(rng.integers(2, 11))
            m = int(rng.integers(1, 11))
            f, bundle = _random_cut_bundle(rng, n, m)
            L = f.L
            verr, gerr = verify_interpolation(bundle, L)
            worst_interp = max(worst_interp, verr, gerr)
            Y = rng.standard_normal((1000, n)) * 1.5
            p_vals, grads = eval_smooth_model_many(bundle, L, Y)
            cuts = Y @ bundle.gradients - bundle.conjugate_offsets
            l_vals = np.max(cuts, axis=1)
            f_vals = 0.5 * np.sum(Y * (Y @ f.Q), axis=1) + Y @ f.b + f.c
            diam2 = model_diameter(bundle) ** 2
            scale = 1.0 + np.abs(f_vals)
            upper = np.minimum(f_vals, l_vals + diam2 / (2.0 * L))
            lo_excess = np.max(l_vals - p_vals - 1e-7 * scale)
            hi_excess = np.max(p_vals - upper - 1e-7 * scale)
            worst_bound = max(worst_bound, float(lo_excess), float(hi_excess))
            steps = np.linalg.norm(np.diff(Y, axis=0), axis=1)
            jumps = np.linalg.norm(np.diff(grads, axis=0), axis=1)
            ratio = float(np.max(jumps / np.maximum(steps, 1e-12)))
            worst_ratio = max(worst_ratio, ratio / L)
            ok = ok and verr <= 1e-7 and gerr <= 1e-7 and lo_excess <= 0.0 \
                and hi_excess <= 0.0 and ratio <= L * (1.0 + 1e-6)
        secs = time.perf_counter() - t0
        detail = (f"interp err {worst_interp:.2e}, bound excess {worst_bound:.2e}, "
                  f"grad ratio {worst_ratio:.6f}*L")
        return CriterionResult(5, "smooth-model certificates on random instances",
                               ok and secs < 60.0, detail, secs)

    def criterion_6(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(43)
        ok = True
        worst_nc = -math.inf
        worst_feas = -math.inf
        worst_kkt = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 11))
            m = int(rng.integers(1, 11))
            f, bundle = _random_cut_bundle(rng, n, m)
            rho = float(10.0 ** rng.uniform(-1, 1))
            x_k = rng.standard_normal(n)
            sol = solve_smooth_step(bundle, f.L, rho, x_k, tol=1e-12)
            scale = 1.0 + abs(sol.t)
            nc = verify_nonconvex_constraints(bundle, f.L, sol)
            feas = sol.primal_feasibility
            sum_err = abs(float(np.sum(sol.multipliers)) - 1.0)
            kkt = max(
                float(np.linalg.norm(rho * (sol.y - x_k) + bundle.gradients @ sol.multipliers)),
                float(np.linalg.norm(sol.multipliers @ (sol.u[None, :] - bundle.gradients.T))),
            )
            worst_nc = max(worst_nc, nc / scale)
            worst_feas = max(worst_feas, feas / scale)
            worst_kkt = max(worst_kkt, kkt)
            ok = ok and nc <= 1e-7 * scale and feas <= 1e-8 * scale \
                and kkt <= 1e-8 and sum_err <= 1e-12
        detail = (f"nonconvex excess {worst_nc:.2e}*scale, feasibility "
                  f"{worst_feas:.2e}*scale, kkt {worst_kkt:.2e}")
        return CriterionResult(6, "one-constraint QCQP equals the bilinear program",
                               ok, detail, time.perf_counter() - t0)

    def criterion_7(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(44)
        ok = True
        worst = 0.0
        for _ in range(100):
            m = int(rng.integers(1, 4))
            rank = int(rng.integers(1, m + 1))
            G = rng.standard_normal((rank, m))
            H = G.T @ G
            c = rng.standard_normal(m)
            qp = SimplexQP(H, c, tol=1e-12)
            sol = solve_qp(qp)
            ref = _grid_reference(H, c)
            err = abs(qp.objective(sol.lam) - ref) / max(1.0, abs(ref))
            worst = max(worst, err)
            ok = ok and err <= 1e-6
        detail = f"100 instances (m<=3), worst scaled objective error {worst:.2e}"
        return CriterionResult(7, "simplex QP matches refined-grid brute force",
                               ok, detail, time.perf_counter() - t0)

    def criterion_8(self):
        t0 = time.perf_counter()
        p = self.quadratic_problem()
        f = p.objective
        result, _ = self.apbm_hi()
        points = []
        ok = True
        for eps in NULLRUN_EPS_GRID:
            run = max_null_run_at(result, f.f_star, eps)
            if run is None:
                ok = False
                continue
            points.append((eps, run))
        runs = [r for _, r in points]
        constant = len(set(runs)) == 1
        if constant:
            shape = f"constant ({runs[0]})"
        else:
            fit = fit_rates(points, "nullrun")
            shape = f"R^2={fit.r_squared:.3f}, slope={fit.slope:.3f}"
            ok = ok and fit.r_squared >= 0.8
        hard_cap = result.max_null_run
        ok = ok and hard_cap <= 200
        detail = f"max null runs {runs}, {shape}, overall max {hard_cap}<=200"
        return CriterionResult(8, "null-run length grows at most like log(1/eps)",
                               ok, detail, time.perf_counter() - t0)

    def criterion_9(self):
        t0 = time.perf_counter()
        p = self.composite_problem()
        h = p.objective
        result, cfg, secs = self.composite_run()
        const = (h.value(p.x0) - p.f_star
                 + 0.5 * cfg.rho * float(np.sum((p.x0 - p.x_star) ** 2)) + cfg.B)
        scale = 1.0 + abs(p.f_star)
        worst = -math.inf
        ok = result.converged and bool(result.serious_records)
        for sr in result.serious_records:
            excess = (sr.f_zeta - p.f_star) - 4.0 / (sr.k + 2) ** 2 * const
            worst = max(worst, excess)
            ok = ok and excess <= 1e-7 * scale
        detail = (f"{len(result.serious_records)} serious steps, worst excess "
                  f"{worst:.2e}, reference optimum from a long run")
        secs_total = time.perf_counter() - t0 + secs
        return CriterionResult(9, "composite envelope 4/(k+2)^2 * initial constant",
                               ok and secs_total < 60.0, detail, secs_total)

    def criterion_10(self):
        t0 = time.perf_counter()
        p = self.composite_problem()
        h = p.objective
        result, cfg, _ = self.composite_run()
        rng = np.random.default_rng(45)
        ok = bool(result.serious_records)
        worst = math.inf
        for sr in result.serious_records:
            v = cfg.rho * (sr.x_center - sr.y)
            hy = h.value(sr.y)
            scale = 1.0 + abs(hy)
            probes = sr.y[None, :] + rng.standard_normal((100, h.n)) * 2.0
            for xp in probes:
                margin = (h.value(xp)
                          - (hy + float(v @ (xp - sr.y)) - sr.eps ** 2 * cfg.rho / 2.0))
                worst = min(worst, margin / scale)
                ok = ok and margin >= -1e-9 * scale
        detail = f"worst probe margin {worst:.2e}*scale over serious steps"
        return CriterionResult(10, "type-2 prox inclusion at every serious step",
                               ok, detail, time.perf_counter() - t0)

    def criterion_11(self):
        t0 = time.perf_counter()
        cases = [(0.0, 0.0), (1.0, 0.0), (1.0, 5.0), (10.0, 3.0)]
        ok = True
        for r0, cprime in cases:
            check = recurrence_lemma_check(r0, cprime, 10_000)
            ok = ok and check.ok
        secs = time.perf_counter() - t0
        detail = f"cases {cases} at kmax=1e4, {secs * 1e3:.0f} ms"
        return CriterionResult(11, "recurrence inequality bound r_k <= coeff*k^2",
                               ok and secs < 1.0, detail, secs)

    def criterion_12(self):
        t0 = time.perf_counter()
        ok = True
        parts = []
        for shift in (0.0, 1.0):
            fa = MaxAffineFunction(np.array([[1.0], [-1.0]]),
                                   np.array([-shift, shift]))
            fa.x_star = np.array([shift])
            fa.f_star = 0.0
            cfg = SolverConfig(rho=1.0, beta=0.5, max_iter=3000, target_gap=1e-6,
                               qp_tol=1e-12)
            res = pbm_run(fa, np.array([shift + 2.0]), cfg)
            ok = ok and res.converged and res.gap <= 1e-6
            parts.append(f"|x-{shift:g}|: gap {res.gap:.1e} in {res.iterations} iters")
        p = self.quadratic_problem()
        f = p.objective
        pbm_res = pbm_run(f, p.x0, self.apbm_config(1e-6))
        apbm_res = self.apbm_mid()
        ok = ok and pbm_res.iterations > apbm_res.iterations
        parts.append(f"quadratic at 1e-6: classic {pbm_res.iterations} iters vs "
                     f"accelerated {apbm_res.iterations}")
        return CriterionResult(12, "classic method converges and acceleration wins",
                               ok, "; ".join(parts), time.perf_counter() - t0)

    def criterion_13(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(46)
        ok = True
        worst_oracle = 0.0
        oracles = [
            make_problem({"family": "quadratic", "n": 6, "condition": 30}, seed=21).objective,
            make_problem({"family": "least-squares", "n": 5, "m": 12}, seed=22).objective,
            make_problem({"family": "log-sum-exp", "n": 4, "m": 9, "sigma": 0.8},
                         seed=23).objective,
        ]
        for f in oracles:
            for _ in range(100):
                x = rng.standard_normal(f.n)
                g = f.gradient(x)
                fd = _central_diff(f.value, x)
                rel = float(np.linalg.norm(fd - g)) / (1.0 + float(np.linalg.norm(g)))
                worst_oracle = max(worst_oracle, rel)
                ok = ok and rel <= 1e-5
        fq, bundle = _random_cut_bundle(rng, 3, 6)
        worst_model = 0.0
        for _ in range(100):
            y = rng.standard_normal(3)
            ev = eval_smooth_model(bundle, fq.L, y, tol=1e-12)
            fd = _central_diff(lambda z: eval_smooth_model(bundle, fq.L, z, tol=1e-12).value,
                               y, h=1e-5)
            rel = float(np.linalg.norm(fd - ev.gradient)) / (1.0 + float(np.linalg.norm(ev.gradient)))
            worst_model = max(worst_model, rel)
            ok = ok and rel <= 1e-4
        detail = (f"oracle gradient rel err {worst_oracle:.2e} (<=1e-5), "
                  f"model witness rel err {worst_model:.2e} (<=1e-4)")
        return CriterionResult(13, "central differences confirm all gradients",
                               ok, detail, time.perf_counter() - t0)

    def run(self, numbers=None):
        numbers = numbers or range(1, 14)
        return [getattr(self, f"criterion_{n}")() for n in numbers]


def _central_diff(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * (1.0 + abs(x[i]))
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * e[i])
    return g


def format_report(results) -> str:
    lines = ["#  status  seconds  criterion", "-" * 78]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.number:<2d} {status:<7s} {r.seconds:7.2f}  {r.title}")
        lines.append(f"   {r.detail}")
    n_fail = sum(1 for r in results if not r.passed)
    lines.append("-" * 78)
    lines.append(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return "\n".join(lines)


def run_acceptance(numbers=None) -> tuple[list[CriterionResult], str]:
    suite = AcceptanceSuite()
    results = suite.run(numbers)
    return results, format_report(results)

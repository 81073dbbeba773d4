"""Algorithm drivers: accelerated and classic proximal bundle methods,
the accelerated inexact proximal-point loop, and the composite variant.

All drivers share the same skeleton: solve a bundle subproblem, query the
oracle at the candidate, append the cut, classify the step (serious or
null), and log a trace row with the null-sequence diagnostics (subproblem
value ``m``, incumbent ``z``, gap ``xi``).  Serious steps move the proximal
center through the Nesterov momentum recursion
``t_next = (1 + sqrt(1 + 4 t^2)) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import InputDomainError
from .models import Bundle
from .oracles import CompositeObjective, eval_oracle
from .subproblems import CompositeStepSolver, solve_classic_step, solve_smooth_step

SERIOUS = "serious"
NULL = "null"


def null_step_constant(L: float, rho: float) -> float:
    """Serious-step threshold constant ``(2L/rho) (sqrt(2L/rho) + 1)``."""
    if L <= 0 or rho <= 0:
        raise InputDomainError("L and rho must be positive")
    r = 2.0 * L / rho
    return r * (math.sqrt(r) + 1.0)


def null_step_test_smooth(C: float, y_next, y_prev, x_k) -> bool:
    """Serious iff ``C ||y_next - y_prev|| <= ||x_k - y_next||`` (inclusive)."""
    lhs = C * float(np.linalg.norm(np.asarray(y_next) - np.asarray(y_prev)))
    rhs = float(np.linalg.norm(np.asarray(x_k) - np.asarray(y_next)))
    return lhs <= rhs


def check_inexactness_criterion(f, rho: float, x_k, y) -> tuple[bool, float]:
    """Proximal inexactness test at a candidate prox point.

    With ``w = x_k - grad f(y) / rho``, checks

        <grad f(y) - grad f(w), y - w>  <=  ||grad f(y)||^2 / (2 rho)

    and returns ``(holds, slack)`` with slack = RHS - LHS.
    """
    x_k = np.asarray(x_k, dtype=float)
    y = np.asarray(y, dtype=float)
    _, gy = eval_oracle(f, y)
    w = x_k - gy / rho
    _, gw = eval_oracle(f, w)
    lhs = float((gy - gw) @ (y - w))
    rhs = float(gy @ gy) / (2.0 * rho)
    slack = rhs - lhs
    return slack >= 0.0, slack


def momentum_next(t: float) -> float:
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))


def tau_bound(L: float, rho: float) -> float:
    """Smallest geometric rate satisfying ``tau/(1-tau) >= L/rho + C^2``."""
    C = null_step_constant(L, rho)
    q = L / rho + C * C
    return q / (1.0 + q)


class DiagnosticSample(NamedTuple):
    m: float
    z: np.ndarray
    xi: float
    tau_bound: float | None


class NullSequenceTracker:
    """Running ``(m_j, z_j, xi_j)`` diagnostics within one null sequence.

    ``z`` is the best candidate for the current proximal problem seen since
    the last serious step; ``xi`` is its proximal value minus the latest
    subproblem value ``m``.  Call :meth:`reset` at each serious step.
    """

    def __init__(self, rho: float, L: float | None = None):
        self.rho = float(rho)
        self.tau = tau_bound(L, rho) if L is not None else None
        self.reset()

    def reset(self):
        self.best_prox_val = math.inf
        self.best_point = None

    def update(self, y: np.ndarray, prox_value: float, m_value: float) -> DiagnosticSample:
        if prox_value < self.best_prox_val:
            self.best_prox_val = prox_value
            self.best_point = np.asarray(y, dtype=float).copy()
        return DiagnosticSample(m_value, self.best_point, self.best_prox_val - m_value,
                                self.tau)


@dataclass
class SolverConfig:
    """Shared driver configuration.

    ``L`` overrides the oracle's smoothness constant; ``beta`` is the
    classic descent-test parameter; ``B`` scales the composite error
    schedule.  ``target_gap`` stops on ``best - f_star <= target_gap`` when
    the optimum is known; ``stat_tol`` enables the stationarity surrogate
    ``||rho (x_k - y)|| <= stat_tol`` with model gap ``f(y) - model(y) <=
    stat_tol``.
    """

    rho: float = 1.0
    L: float | None = None
    max_iter: int = 10_000
    target_gap: float | None = None
    beta: float = 0.5
    B: float = 1.0
    bundle_cap: int | None = None
    qp_tol: float = 1e-10
    stat_tol: float | None = None
    # Optional k -> rho_k map, queried at each serious step; must be
    # positive and nonincreasing (the accelerated guarantees survive only
    # nonincreasing proximity schedules).
    rho_schedule: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.rho <= 0:
            raise InputDomainError("rho must be positive")
        if not 0.0 < self.beta < 1.0:
            raise InputDomainError("beta must lie in (0, 1)")
        if self.B <= 0:
            raise InputDomainError("B must be positive")
        if self.max_iter < 1:
            raise InputDomainError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """One iteration of any driver (the CSV row schema)."""

    iteration: int
    step_kind: str
    f_y: float
    gap: float
    m: float
    best_prox_val: float
    xi: float
    dist_to_center: float
    null_run_len: int
    t: float
    criterion_slack: float


@dataclass(frozen=True, eq=False)
class SeriousRecord:
    """State captured at one serious step (used by the rate checks)."""

    k: int
    iteration: int
    f_zeta: float
    zeta: np.ndarray
    y: np.ndarray
    x_center: np.ndarray
    criterion_slack: float
    eps: float | None = None


@dataclass
class RunResult:
    x: np.ndarray
    f_x: float
    gap: float | None
    serious_steps: int
    iterations: int
    converged: bool
    stop_reason: str
    max_null_run: int
    trace: list = field(default_factory=list)
    serious_records: list = field(default_factory=list)
    f_x0: float = math.nan


def _value_and_subgradient(f, x):
    """Oracle query that accepts smooth and max-affine objectives alike."""
    if hasattr(f, "gradient"):
        return eval_oracle(f, x)
    x = np.asarray(x, dtype=float)
    if x.shape != (f.n,) or not np.all(np.isfinite(x)):
        raise InputDomainError("point must be finite with matching dimension")
    return f.value(x), f.subgradient(x)


def _pad_warm(lam: np.ndarray, evicted: int | None) -> np.ndarray:
    warm = np.append(lam, 0.0)
    if evicted is not None:
        warm = np.delete(warm, evicted)
    return warm


def _scheduled_rho(cfg: SolverConfig, k: int, current: float | None) -> float:
    if cfg.rho_schedule is None:
        return cfg.rho
    rho = float(cfg.rho_schedule(k))
    if rho <= 0:
        raise InputDomainError("rho schedule must stay positive")
    if current is not None and rho > current * (1.0 + 1e-12):
        raise InputDomainError("rho schedule must be nonincreasing")
    return rho


def apbm_run(f, x0, cfg: SolverConfig, sink: Callable | None = None) -> RunResult:
    """Accelerated proximal bundle method on an L-smooth convex oracle.

    Each iteration solves the smooth-model prox subproblem; the candidate
    is serious when ``C ||y_next - y_prev|| <= ||x_k - y_next||``.  At a
    serious step the momentum pair ``(zeta, x)`` advances and the bundle is
    carried over.  ``y_prev`` for the first subproblem after a serious step
    is the candidate that triggered it.
    """
    x0 = np.asarray(x0, dtype=float)
    L = cfg.L if cfg.L is not None else getattr(f, "L", None)
    if L is None or L <= 0:
        raise InputDomainError("a positive smoothness constant is required")
    rho = _scheduled_rho(cfg, 0, None)
    C = null_step_constant(L, rho)
    f_star = getattr(f, "f_star", None)

    f0, g0 = eval_oracle(f, x0)
    bundle = Bundle(f.n, cap=cfg.bundle_cap)
    bundle.add_cut(x0, f0, g0)
    bundle.mark_serious()

    x = x0.copy()
    zeta = x0.copy()
    t = 1.0
    y_prev = x0.copy()
    best_val, best_x = f0, x0.copy()
    tracker = NullSequenceTracker(rho, L)
    warm = None
    k = 0
    null_run = 0
    max_null_run = 0
    trace: list[TraceRecord] = []
    serious_records: list[SeriousRecord] = []
    stop_reason, converged = "max_iter", False
    iterations = 0

    for j in range(1, cfg.max_iter + 1):
        iterations = j
        x_center = x
        sol = solve_smooth_step(bundle, L, rho, x_center, tol=cfg.qp_tol, warm_start=warm)
        y = sol.y
        fy, gy = eval_oracle(f, y)
        evicted = bundle.add_cut(y, fy, gy)
        warm = _pad_warm(sol.multipliers, evicted)

        dist = float(np.linalg.norm(x_center - y))
        diag = tracker.update(y, fy + 0.5 * rho * dist * dist, sol.objective)

        # w doubles as the new momentum iterate zeta when the step is serious.
        w = x_center - gy / rho
        fw, gw = eval_oracle(f, w)
        slack = float(gy @ gy) / (2.0 * rho) - float((gy - gw) @ (y - w))

        if fy < best_val:
            best_val, best_x = fy, y.copy()
        serious = C * float(np.linalg.norm(y - y_prev)) <= dist
        if serious:
            t_next = momentum_next(t)
            x = w + ((t - 1.0) / t_next) * (w - zeta)
            zeta = w
            t = t_next
            k += 1
            bundle.mark_serious()
            if fw < best_val:
                best_val, best_x = fw, w.copy()
            serious_records.append(SeriousRecord(
                k=k, iteration=j, f_zeta=fw, zeta=w.copy(), y=y.copy(),
                x_center=x_center.copy(), criterion_slack=slack))
            null_run = 0
            tracker.reset()
            if cfg.rho_schedule is not None:
                rho = _scheduled_rho(cfg, k, rho)
                C = null_step_constant(L, rho)
        else:
            null_run += 1
            max_null_run = max(max_null_run, null_run)

        rec = TraceRecord(
            iteration=j,
            step_kind=SERIOUS if serious else NULL,
            f_y=fy,
            gap=(fy - f_star) if f_star is not None else math.nan,
            m=diag.m,
            best_prox_val=diag.xi + diag.m,
            xi=diag.xi,
            dist_to_center=dist,
            null_run_len=null_run,
            t=t,
            criterion_slack=slack,
        )
        trace.append(rec)
        if sink is not None:
            sink(rec)
        y_prev = y

        if f_star is not None and cfg.target_gap is not None \
                and best_val - f_star <= cfg.target_gap:
            stop_reason, converged = "gap", True
            break
        if cfg.stat_tol is not None and float(np.linalg.norm(sol.u)) <= cfg.stat_tol \
                and fy - sol.t <= cfg.stat_tol:
            stop_reason, converged = "stationary", True
            break

    return RunResult(
        x=best_x, f_x=best_val,
        gap=(best_val - f_star) if f_star is not None else None,
        serious_steps=k, iterations=iterations, converged=converged,
        stop_reason=stop_reason, max_null_run=max_null_run,
        trace=trace, serious_records=serious_records, f_x0=f0)


def pbm_run(f, x0, cfg: SolverConfig, sink: Callable | None = None) -> RunResult:
    """Classic proximal bundle method with the descent test
    ``beta (f(x_k) - model(y)) <= f(x_k) - f(y)``.

    Works for any convex oracle exposing ``value`` plus ``gradient`` or
    ``subgradient``; smoothness is not required.
    """
    x0 = np.asarray(x0, dtype=float)
    rho = cfg.rho
    f_star = getattr(f, "f_star", None)

    f0, g0 = _value_and_subgradient(f, x0)
    bundle = Bundle(f.n, cap=cfg.bundle_cap)
    bundle.add_cut(x0, f0, g0)
    bundle.mark_serious()

    x = x0.copy()
    fx = f0
    best_val, best_x = f0, x0.copy()
    tracker = NullSequenceTracker(rho)
    warm = None
    k = 0
    null_run = 0
    max_null_run = 0
    trace: list[TraceRecord] = []
    serious_records: list[SeriousRecord] = []
    stop_reason, converged = "max_iter", False
    iterations = 0

    for j in range(1, cfg.max_iter + 1):
        iterations = j
        x_center = x
        sol = solve_classic_step(bundle, rho, x_center, tol=cfg.qp_tol, warm_start=warm)
        y = sol.y
        fy, gy = _value_and_subgradient(f, y)
        evicted = bundle.add_cut(y, fy, gy)
        warm = _pad_warm(sol.multipliers, evicted)

        dist = float(np.linalg.norm(x_center - y))
        diag = tracker.update(y, fy + 0.5 * rho * dist * dist, sol.objective)
        decrement = fx - sol.t

        if fy < best_val:
            best_val, best_x = fy, y.copy()
        serious = cfg.beta * decrement <= fx - fy
        if serious:
            x = y.copy()
            fx = fy
            k += 1
            bundle.mark_serious()
            serious_records.append(SeriousRecord(
                k=k, iteration=j, f_zeta=fy, zeta=y.copy(), y=y.copy(),
                x_center=x_center.copy(), criterion_slack=math.nan))
            null_run = 0
            tracker.reset()
        else:
            null_run += 1
            max_null_run = max(max_null_run, null_run)

        rec = TraceRecord(
            iteration=j,
            step_kind=SERIOUS if serious else NULL,
            f_y=fy,
            gap=(fy - f_star) if f_star is not None else math.nan,
            m=diag.m,
            best_prox_val=diag.xi + diag.m,
            xi=diag.xi,
            dist_to_center=dist,
            null_run_len=null_run,
            t=1.0,
            criterion_slack=math.nan,
        )
        trace.append(rec)
        if sink is not None:
            sink(rec)

        if f_star is not None and cfg.target_gap is not None \
                and best_val - f_star <= cfg.target_gap:
            stop_reason, converged = "gap", True
            break
        if cfg.stat_tol is not None and decrement <= cfg.stat_tol:
            stop_reason, converged = "stationary", True
            break

    return RunResult(
        x=best_x, f_x=best_val,
        gap=(best_val - f_star) if f_star is not None else None,
        serious_steps=k, iterations=iterations, converged=converged,
        stop_reason=stop_reason, max_null_run=max_null_run,
        trace=trace, serious_records=serious_records, f_x0=f0)


@dataclass(frozen=True, eq=False)
class ProxPointRecord:
    j: int
    t: float
    zeta: np.ndarray
    f_zeta: float
    gap: float


@dataclass
class ProxPointResult:
    zeta: np.ndarray
    trace: list


def aippa_run(prox_oracle, x0, rho, iters: int, f=None,
              target_gap: float | None = None) -> ProxPointResult:
    """Accelerated inexact proximal-point loop.

    ``prox_oracle(x, rho) -> (y, v)`` returns an approximate prox point and
    a subgradient at it.  ``rho`` may be a scalar or a callable ``j -> rho_j``
    (nonincreasing schedules keep the rate guarantees).  If ``f`` is given,
    every momentum iterate is evaluated for the trace.
    """
    x = np.asarray(x0, dtype=float).copy()
    zeta = x.copy()
    t = 1.0
    f_star = getattr(f, "f_star", None) if f is not None else None
    records: list[ProxPointRecord] = []
    for j in range(1, iters + 1):
        rho_j = float(rho(j)) if callable(rho) else float(rho)
        if rho_j <= 0:
            raise InputDomainError("rho must stay positive")
        y, v = prox_oracle(x, rho_j)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        t_next = momentum_next(t)
        zeta_new = x - v / rho_j
        x = zeta_new + ((t - 1.0) / t_next) * (zeta_new - zeta)
        zeta, t = zeta_new, t_next
        f_zeta = float(f.value(zeta)) if f is not None else math.nan
        gap = f_zeta - f_star if f_star is not None else math.nan
        records.append(ProxPointRecord(j, t, zeta.copy(), f_zeta, gap))
        if target_gap is not None and f_star is not None and gap <= target_gap:
            break
    return ProxPointResult(zeta, records)


def composite_eps0(B: float, rho: float) -> float:
    """Error-schedule seed: the serious-step update formula taken one step
    before the first serious step, ``sqrt(6B) / (pi sqrt(rho) * 4)``."""
    return math.sqrt(6.0 * B) / (math.pi * math.sqrt(rho) * 4.0)


def composite_eps_next(B: float, rho: float, j: int) -> float:
    """Schedule value installed by serious step number ``j`` (0-based)."""
    return math.sqrt(6.0 * B) / (math.pi * math.sqrt(rho) * (j + 3) ** 2)


def apbm_composite_run(objective: CompositeObjective, x0, cfg: SolverConfig,
                       sink: Callable | None = None) -> RunResult:
    """Accelerated bundle method for ``h = f + g`` with piecewise-linear
    ``f`` and quadratic ``g``.

    Serious test: model gap ``f(y) - model(y) <= rho eps_j^2 / 2`` with the
    error schedule ``eps_{j+1} = sqrt(6B) / (pi sqrt(rho) (j+3)^2)``.
    """
    x0 = np.asarray(x0, dtype=float)
    fpl, g = objective.f, objective.g
    rho = cfg.rho
    h_star = objective.f_star

    f0, v0 = _value_and_subgradient(fpl, x0)
    h0 = f0 + g.value(x0)
    bundle = Bundle(objective.n, cap=cfg.bundle_cap)
    bundle.add_cut(x0, f0, v0)
    bundle.mark_serious()
    stepper = CompositeStepSolver(g, rho)

    x = x0.copy()
    zeta = x0.copy()
    t = 1.0
    eps = composite_eps0(cfg.B, rho)
    best_val, best_x = h0, x0.copy()
    tracker = NullSequenceTracker(rho)
    warm = None
    k = 0
    null_run = 0
    max_null_run = 0
    trace: list[TraceRecord] = []
    serious_records: list[SeriousRecord] = []
    stop_reason, converged = "max_iter", False
    iterations = 0

    for j in range(1, cfg.max_iter + 1):
        iterations = j
        x_center = x
        sol = stepper.solve(bundle, x_center, tol=cfg.qp_tol, warm_start=warm)
        y = sol.y
        fy, vy = _value_and_subgradient(fpl, y)
        evicted = bundle.add_cut(y, fy, vy)
        warm = _pad_warm(sol.multipliers, evicted)
        hy = fy + g.value(y)

        dist = float(np.linalg.norm(x_center - y))
        diag = tracker.update(y, hy + 0.5 * rho * dist * dist, sol.objective)
        model_gap = fy - sol.t
        slack = 0.5 * rho * eps * eps - model_gap
        eps_used = eps

        if hy < best_val:
            best_val, best_x = hy, y.copy()
        serious = model_gap <= 0.5 * rho * eps * eps
        if serious:
            t_next = momentum_next(t)
            x = y + ((t - 1.0) / t_next) * (y - zeta)
            zeta = y.copy()
            t = t_next
            eps = composite_eps_next(cfg.B, rho, k)
            k += 1
            bundle.mark_serious()
            serious_records.append(SeriousRecord(
                k=k, iteration=j, f_zeta=hy, zeta=y.copy(), y=y.copy(),
                x_center=x_center.copy(), criterion_slack=slack, eps=eps_used))
            null_run = 0
            tracker.reset()
        else:
            null_run += 1
            max_null_run = max(max_null_run, null_run)

        rec = TraceRecord(
            iteration=j,
            step_kind=SERIOUS if serious else NULL,
            f_y=hy,
            gap=(hy - h_star) if h_star is not None else math.nan,
            m=diag.m,
            best_prox_val=diag.xi + diag.m,
            xi=diag.xi,
            dist_to_center=dist,
            null_run_len=null_run,
            t=t,
            criterion_slack=slack,
        )
        trace.append(rec)
        if sink is not None:
            sink(rec)

        if h_star is not None and cfg.target_gap is not None \
                and best_val - h_star <= cfg.target_gap:
            stop_reason, converged = "gap", True
            break
        if cfg.stat_tol is not None and rho * dist <= cfg.stat_tol \
                and model_gap <= cfg.stat_tol:
            stop_reason, converged = "stationary", True
            break

    return RunResult(
        x=best_x, f_x=best_val,
        gap=(best_val - h_star) if h_star is not None else None,
        serious_steps=k, iterations=iterations, converged=converged,
        stop_reason=stop_reason, max_null_run=max_null_run,
        trace=trace, serious_records=serious_records, f_x0=h0)

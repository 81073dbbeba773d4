"""Benchmark harness: experiment configs, trace serialization, rate fits.

An experiment config is ``key=value`` text (``#`` comments allowed) with
dotted prefixes for the problem descriptor and solver overrides::

    problem.family = quadratic
    problem.n = 20
    problem.condition = 100
    algorithm = apbm            # apbm | pbm | aippa | apbm-composite
    solver.rho = L              # a float, or "L" for the oracle constant
    solver.max_iter = 20000
    epsilons = 1e-2,1e-3
    seeds = 7
    output_dir = runs

One CSV per (epsilon, seed) run plus a JSON summary.  A config fully
determines its outputs: rerunning writes byte-identical CSV files.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InputDomainError
from .oracles import QuadraticFunction, exact_prox_oracle
from .problems import Problem, make_problem
from .solvers import (
    RunResult,
    SolverConfig,
    aippa_run,
    apbm_composite_run,
    apbm_run,
    pbm_run,
)

ALGORITHMS = ("apbm", "pbm", "aippa", "apbm-composite")

CSV_HEADER = ("iter,step_kind,f_y,gap,m,best_prox_val,xi,"
              "dist_y_to_center,null_run_len,t,criterion_slack")

THREADS_ENV = "BUNDLEKIT_THREADS"


def _fmt(x) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (np.floating,)):
        return repr(float(x))
    return str(x)


def trace_to_csv(trace) -> str:
    lines = [CSV_HEADER]
    for r in trace:
        lines.append(",".join([
            str(r.iteration), r.step_kind, _fmt(r.f_y), _fmt(r.gap), _fmt(r.m),
            _fmt(r.best_prox_val), _fmt(r.xi), _fmt(r.dist_to_center),
            str(r.null_run_len), _fmt(r.t), _fmt(r.criterion_slack),
        ]))
    return "\n".join(lines) + "\n"


def read_trace_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected trace header in {path}")
        names = header.split(",")
        for line in handle:
            parts = line.strip().split(",")
            row = dict(zip(names, parts))
            for key in names:
                if key not in ("step_kind",):
                    row[key] = float(row[key])
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Experiment configs


@dataclass
class ExperimentConfig:
    problem: dict
    algorithm: str
    solver: dict = field(default_factory=dict)
    epsilons: list = field(default_factory=lambda: [1e-6])
    seeds: list = field(default_factory=list)
    output_dir: str = "runs"

    def resolved(self) -> dict:
        return {
            "problem": dict(self.problem),
            "algorithm": self.algorithm,
            "solver": dict(self.solver),
            "epsilons": list(self.epsilons),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }


def parse_experiment_config(text: str) -> ExperimentConfig:
    problem: dict = {}
    solver: dict = {}
    top: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", line_no=line_no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("problem."):
            problem[key[len("problem."):]] = value
        elif key.startswith("solver."):
            solver[key[len("solver."):]] = value
        elif key in ("algorithm", "epsilons", "seeds", "output_dir"):
            top[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}", line_no=line_no)
    if "family" not in problem:
        raise ConfigError("config must set problem.family")
    if "algorithm" not in top:
        raise ConfigError("config must set algorithm")
    algorithm = top["algorithm"]
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"unknown algorithm {algorithm!r}; registered: {', '.join(ALGORITHMS)}")
    cfg = ExperimentConfig(problem=problem, algorithm=algorithm, solver=solver)
    if "epsilons" in top:
        try:
            cfg.epsilons = [float(tok) for tok in top["epsilons"].split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad epsilons list: {top['epsilons']!r}") from exc
    if "seeds" in top:
        try:
            cfg.seeds = [int(tok) for tok in top["seeds"].split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad seeds list: {top['seeds']!r}") from exc
    if not cfg.seeds:
        cfg.seeds = [int(problem.get("seed", 0))]
    if "output_dir" in top:
        cfg.output_dir = top["output_dir"]
    return cfg


def _solver_config(cfg: ExperimentConfig, problem: Problem,
                   epsilon: float) -> SolverConfig:
    kw: dict = {"target_gap": epsilon}
    raw = dict(cfg.solver)
    rho = raw.pop("rho", "L")
    if rho == "L":
        L = getattr(problem.objective, "L", None) or getattr(problem.objective, "L_g", None)
        if not L:
            raise ConfigError("solver.rho=L needs an oracle smoothness constant")
        kw["rho"] = float(L)
    else:
        try:
            kw["rho"] = float(rho)
        except ValueError as exc:
            raise ConfigError(f"solver.rho must be a number or 'L', got {rho!r}") from exc
    casts = {"L": float, "max_iter": int, "beta": float, "B": float,
             "bundle_cap": int, "qp_tol": float, "stat_tol": float}
    for key, cast in casts.items():
        if key in raw:
            try:
                kw[key] = cast(raw.pop(key))
            except ValueError as exc:
                raise ConfigError(f"solver.{key} must be a {cast.__name__}") from exc
    if raw:
        raise ConfigError(f"unknown solver keys: {', '.join(sorted(raw))}")
    try:
        return SolverConfig(**kw)
    except InputDomainError as exc:
        raise ConfigError(str(exc)) from exc


def _dispatch(algorithm: str, problem: Problem, cfg: SolverConfig,
              epsilon: float) -> RunResult:
    if algorithm == "apbm":
        return apbm_run(problem.objective, problem.x0, cfg)
    if algorithm == "pbm":
        return pbm_run(problem.objective, problem.x0, cfg)
    if algorithm == "apbm-composite":
        return apbm_composite_run(problem.objective, problem.x0, cfg)
    # aippa: exact prox oracle, defined for quadratic objectives.
    f = problem.objective
    if not isinstance(f, QuadraticFunction):
        raise ConfigError("aippa needs a quadratic objective (exact prox oracle)")
    prox_result = aippa_run(exact_prox_oracle(f), problem.x0, cfg.rho, cfg.max_iter,
                            f=f, target_gap=epsilon)
    # Adapt to the RunResult shape: every prox step is a serious step.
    from .solvers import SeriousRecord, TraceRecord
    trace = []
    serious = []
    best = math.inf
    best_x = problem.x0
    for rec in prox_result.trace:
        if rec.f_zeta < best:
            best, best_x = rec.f_zeta, rec.zeta
        trace.append(TraceRecord(
            iteration=rec.j, step_kind="serious", f_y=rec.f_zeta, gap=rec.gap,
            m=math.nan, best_prox_val=math.nan, xi=math.nan,
            dist_to_center=math.nan, null_run_len=0, t=rec.t,
            criterion_slack=math.nan))
        serious.append(SeriousRecord(
            k=rec.j, iteration=rec.j, f_zeta=rec.f_zeta, zeta=rec.zeta,
            y=rec.zeta, x_center=rec.zeta, criterion_slack=math.nan))
    gap = best - f.f_star if f.f_star is not None else None
    return RunResult(
        x=best_x, f_x=best, gap=gap, serious_steps=len(trace),
        iterations=len(trace), converged=gap is not None and gap <= epsilon,
        stop_reason="gap" if gap is not None and gap <= epsilon else "max_iter",
        max_null_run=0, trace=trace, serious_records=serious,
        f_x0=float(f.value(problem.x0)))


def envelope_violations(problem: Problem, algorithm: str, cfg: SolverConfig,
                        result: RunResult, tol_scale: float = 1e-9) -> int | None:
    """Exact re-evaluation of the serious-step rate envelope.

    Accelerated runs with a known optimum check the proximal-point bound
    ``2 rho d0^2 / (k+1)^2``; composite runs check ``4/(k+2)^2`` times the
    initial constant.  Returns None when no envelope applies.
    """
    if problem.f_star is None or problem.x_star is None:
        return None
    if not result.serious_records:
        return 0
    if algorithm in ("apbm", "aippa"):
        d2 = float(np.sum((problem.x0 - problem.x_star) ** 2))
        scale = 1.0 + max(result.serious_records[0].f_zeta - problem.f_star, 0.0)
        return sum(
            1 for sr in result.serious_records
            if sr.f_zeta - problem.f_star
            > 2.0 * cfg.rho * d2 / (sr.k + 1) ** 2 + tol_scale * scale)
    if algorithm == "apbm-composite":
        h0 = problem.objective.value(problem.x0)
        const = (h0 - problem.f_star
                 + 0.5 * cfg.rho * float(np.sum((problem.x0 - problem.x_star) ** 2))
                 + cfg.B)
        scale = 1.0 + abs(problem.f_star)
        return sum(
            1 for sr in result.serious_records
            if sr.f_zeta - problem.f_star
            > 4.0 / (sr.k + 2) ** 2 * const + 1e-7 * scale)
    return None


def run_experiment(config: ExperimentConfig, output_dir=None) -> dict:
    """Execute the (epsilon x seed) grid and write traces plus a summary.

    Per-run CSV files land in the output directory; the summary JSON embeds
    the fully resolved config.  Grid entries may execute concurrently
    (capped by the BUNDLEKIT_THREADS environment variable); files and the
    summary are written in deterministic config order.
    """
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    jobs = [(ei, eps, si, seed)
            for ei, eps in enumerate(config.epsilons)
            for si, seed in enumerate(config.seeds)]

    def one(job):
        ei, eps, si, seed = job
        # Config-shaped mistakes abort the whole grid; only runtime solver
        # failures are recorded per-run.
        problem = make_problem(dict(config.problem), seed=seed)
        solver_cfg = _solver_config(config, problem, eps)
        try:
            result = _dispatch(config.algorithm, problem, solver_cfg, eps)
            record = {
                "epsilon": eps,
                "seed": seed,
                "csv": f"run_e{ei}_s{si}.csv",
                "final_gap": result.gap,
                "serious_steps": result.serious_steps,
                "iterations": result.iterations,
                "max_null_run": result.max_null_run,
                "stop_reason": result.stop_reason,
                "converged": result.converged,
                "envelope_violations": envelope_violations(
                    problem, config.algorithm, solver_cfg, result),
                "error": None,
            }
            return record, trace_to_csv(result.trace)
        except Exception as exc:  # noqa: BLE001 - recorded per-run, summary still written
            record = {
                "epsilon": eps, "seed": seed, "csv": None, "final_gap": None,
                "serious_steps": None, "iterations": None, "max_null_run": None,
                "stop_reason": "error", "converged": False,
                "envelope_violations": None, "error": f"{type(exc).__name__}: {exc}",
            }
            return record, None

    workers = max(1, int(os.environ.get(THREADS_ENV, "1")))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(one, jobs))
    else:
        outputs = [one(job) for job in jobs]

    runs = []
    for (record, csv_text) in outputs:
        if csv_text is not None:
            (out / record["csv"]).write_text(csv_text, encoding="utf-8")
        runs.append(record)
    summary = {"config": config.resolved(), "runs": runs}
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


# ---------------------------------------------------------------------------
# Rate fitting


@dataclass(frozen=True)
class RateFit:
    kind: str
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rates(points, kind: str) -> RateFit:
    """Least squares in the transformed plane.

    ``kind="gap"``: points are ``(serious_index, gap)`` from serious-step
    records; fits ``log(gap)`` against ``log(k + 1)``, excluding the first
    serious step and nonpositive gaps.  ``kind="nullrun"``: points are
    ``(epsilon, max_null_run)``; fits the run length against ``log(1/eps)``.
    Needs at least five usable points.
    """
    if kind == "gap":
        xs, ys = [], []
        for k, gap in points:
            if k >= 2 and gap > 0.0:
                xs.append(math.log(k + 1.0))
                ys.append(math.log(gap))
    elif kind == "nullrun":
        xs, ys = [], []
        for eps, run in points:
            xs.append(math.log(1.0 / eps))
            ys.append(float(run))
    else:
        raise ConfigError(f"unknown fit kind {kind!r}")
    if len(xs) < 5:
        raise InputDomainError(f"need at least 5 usable points, got {len(xs)}")
    x = np.asarray(xs)
    y = np.asarray(ys)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise InputDomainError("fit abscissae are all identical")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res <= 1e-30 else \
        (0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot)
    return RateFit(kind, slope, intercept, r2, len(xs))


def gap_fit_points(result: RunResult, f_star: float):
    """(serious index, f(zeta_k) - f*) pairs for the gap fit."""
    return [(sr.k, sr.f_zeta - f_star) for sr in result.serious_records]


# ---------------------------------------------------------------------------
# Recurrence lemma


class RecurrenceCheck(NamedTuple):
    ok: bool
    first_violation: int | None


def recurrence_lemma_check(r0: float, cprime: float, kmax: int) -> RecurrenceCheck:
    """Simulate ``r_{k+1} = (1 + 2/(k+2)) r_k + 2 C'/(k+2)`` at equality and
    test ``r_k <= (e^2 r0 + C' pi^2 e^(3 + pi^2/3) / 3) k^2`` for k in
    [1, kmax].
    """
    if r0 < 0 or cprime < 0:
        raise InputDomainError("r0 and cprime must be nonnegative")
    if not 1 <= kmax <= 10 ** 6:
        raise InputDomainError("kmax must lie in [1, 1e6]")
    coeff = math.e ** 2 * r0 + cprime * math.pi ** 2 * math.exp(3.0 + math.pi ** 2 / 3.0) / 3.0
    r = float(r0)
    for k in range(1, kmax + 1):
        r = (1.0 + 2.0 / (k + 1)) * r + 2.0 * cprime / (k + 1)
        if r > coeff * k * k:
            return RecurrenceCheck(False, k)
    return RecurrenceCheck(True, None)

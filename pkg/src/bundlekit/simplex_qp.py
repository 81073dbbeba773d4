"""Quadratic programs over the probability simplex.

Every bundle subproblem in this package reduces to

    min_{lam in Delta_m}  0.5 * lam' H lam + c' lam,

with H symmetric positive semidefinite.  The solver is an accelerated
projected-gradient method with a monotone restart, followed by an
active-face polish that solves the KKT equality system on the support
identified by the iteration.  Solutions carry a certified fixed-point
residual so that downstream model certificates inherit a tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError, QPNonconvergenceError

#: Hard ceiling on accelerated projected-gradient iterations.
MAX_ITERATIONS = 100_000

_POWER_ITERATIONS = 50
_POWER_SAFETY = 1.01


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-and-threshold rule: ``lam_i = max(v_i - theta, 0)`` with the
    threshold chosen so the result sums to one.  A stable sort keeps the
    output deterministic under ties.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InputDomainError("project_simplex expects a nonempty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise InputDomainError("project_simplex input must be finite")
    u = np.sort(v, kind="stable")[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    mask = u - css / ks > 0.0
    k = int(np.nonzero(mask)[0][-1]) + 1
    theta = css[k - 1] / k
    return np.maximum(v - theta, 0.0)


def project_simplex_columns(V: np.ndarray) -> np.ndarray:
    """Column-wise simplex projection of an ``m x B`` matrix."""
    V = np.asarray(V, dtype=float)
    m = V.shape[0]
    u = np.sort(V, axis=0, kind="stable")[::-1, :]
    css = np.cumsum(u, axis=0) - 1.0
    ks = np.arange(1, m + 1)[:, None]
    mask = u - css / ks > 0.0
    k = m - np.argmax(mask[::-1, :], axis=0)
    theta = css[k - 1, np.arange(V.shape[1])] / k
    return np.maximum(V - theta[None, :], 0.0)


def spectral_norm_upper(H: np.ndarray) -> float:
    """Upper estimate of ``||H||_2`` from 50 fixed-seed power iterations.

    The estimate is inflated by a 1.01 safety factor; only an upper bound
    on the stepsize denominator is needed.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[0]
    if m == 1:
        return abs(float(H[0, 0])) * _POWER_SAFETY
    rng = np.random.default_rng(0)
    v = rng.standard_normal(m)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(_POWER_ITERATIONS):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        est = nw
        v = w / nw
    return float(est) * _POWER_SAFETY


@dataclass(frozen=True, eq=False)
class SimplexQP:
    """``min 0.5 lam' H lam + c' lam`` over the probability simplex.

    ``H`` must be symmetric PSD (it is a scaled Gram matrix wherever this
    package builds one).  ``tol`` bounds the accepted fixed-point residual.
    """

    H: np.ndarray
    c: np.ndarray
    tol: float = 1e-10

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise InputDomainError("H must be a square matrix")
        if c.shape != (H.shape[0],):
            raise InputDomainError("c must match the order of H")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(c))):
            raise InputDomainError("SimplexQP data must be finite")
        if H.shape[0] > 1 and np.max(np.abs(H - H.T)) > 1e-12 * max(1.0, np.max(np.abs(H))):
            raise InputDomainError("H must be symmetric within 1e-12")
        if self.tol <= 0.0:
            raise InputDomainError("tol must be positive")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def objective(self, lam: np.ndarray) -> float:
        lam = np.asarray(lam, dtype=float)
        return float(0.5 * lam @ self.H @ lam + self.c @ lam)


@dataclass(frozen=True, eq=False)
class SimplexQPSolution:
    lam: np.ndarray
    residual: float
    iterations: int


def kkt_residual(qp: SimplexQP, lam: np.ndarray) -> float:
    """Projected-gradient fixed-point residual at ``lam``.

    ``||lam - P(lam - (H lam + c) / max(1, ||H||_2))||``; zero exactly at
    an optimum (to floating precision).
    """
    lam = np.asarray(lam, dtype=float)
    if abs(float(np.sum(lam)) - 1.0) > 1e-9 or np.min(lam) < -1e-9:
        raise InputDomainError("lam must lie on the simplex within 1e-9")
    scale = max(1.0, spectral_norm_upper(qp.H) / _POWER_SAFETY)
    step = project_simplex(lam - (qp.H @ lam + qp.c) / scale)
    return float(np.linalg.norm(lam - step))


def _solve_face(qp: SimplexQP, support: np.ndarray):
    """Equality-constrained KKT solve on one face, iteratively refined.

    Refinement recovers the digits that near-duplicate columns (condition
    numbers around 1e12) cost the least-squares solve.  Returns
    ``(lam_on_face, nu)`` or None when the system is inconsistent.
    """
    s = support.size
    K = np.zeros((s + 1, s + 1))
    K[:s, :s] = qp.H[np.ix_(support, support)]
    K[:s, s] = 1.0
    K[s, :s] = 1.0
    rhs = np.concatenate([-qp.c[support], [1.0]])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    for _ in range(2):
        resid = rhs - K @ sol
        corr, *_ = np.linalg.lstsq(K, resid, rcond=None)
        sol = sol + corr
    if not np.all(np.isfinite(sol)) or \
            np.linalg.norm(K @ sol - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        return None
    return sol[:s], float(sol[s])


def _face_kkt_candidate(qp: SimplexQP, lam: np.ndarray,
                        res_scale: float) -> np.ndarray | None:
    """Bounded active-set iteration seeded by the projected-gradient probe.

    The probe support admits coordinates that want mass but have not
    received any yet; each pass solves the face system, drops the most
    negative component, or adds the most violating off-face coordinate.
    Returns a feasible candidate (not necessarily optimal — the caller
    gates acceptance on residual and objective) or None.
    """
    probe = project_simplex(lam - (qp.H @ lam + qp.c) / res_scale)
    support = np.flatnonzero(probe > 0.0)
    for _ in range(3 * qp.m):
        if support.size == 0:
            return None
        solved = _solve_face(qp, support)
        if solved is None:
            return None
        cand_s, nu = solved
        if np.min(cand_s) < 0.0:
            support = np.delete(support, int(np.argmin(cand_s)))
            continue
        cand = np.zeros(qp.m)
        cand[support] = cand_s
        total = float(np.sum(cand))
        if not np.isfinite(total) or abs(total - 1.0) > 1e-9:
            return None
        cand /= total
        # Dual feasibility: off-face gradients may not undercut the face
        # value; admit the worst violator and resolve.
        g = qp.H @ cand + qp.c
        off = np.setdiff1d(np.arange(qp.m), support, assume_unique=True)
        if off.size:
            j = off[int(np.argmin(g[off]))]
            if g[j] < -nu - 1e-13 * (1.0 + abs(nu)):
                support = np.sort(np.append(support, j))
                continue
        return cand
    return None


def _toward_vertex_candidate(qp: SimplexQP, lam: np.ndarray) -> np.ndarray | None:
    """Exact line search toward the steepest vertex.

    Handles nearly linear instances (tiny curvature along an exchange
    direction), where both the fixed-point iteration and the face solve
    crawl: the minimizer then sits at or near a vertex the line search
    reaches in one step.
    """
    g = qp.H @ lam + qp.c
    k = int(np.argmin(g))
    d = -lam.copy()
    d[k] += 1.0
    gd = float(g @ d)
    if gd >= 0.0:
        return None
    curv = float(d @ (qp.H @ d))
    gamma = 1.0 if curv <= 0.0 else min(1.0, -gd / curv)
    return lam + gamma * d


def _polish_candidates(qp: SimplexQP, lam: np.ndarray, res_scale: float) -> list:
    """Feasible refinement candidates for the current iterate."""
    return [c for c in (_face_kkt_candidate(qp, lam, res_scale),
                        _toward_vertex_candidate(qp, lam)) if c is not None]


def _apply_polish(qp: SimplexQP, x, fx, residual, res_scale):
    """Accept the best candidate that improves the residual without
    worsening the objective.  Returns the (possibly unchanged) triple."""
    for cand in _polish_candidates(qp, x, res_scale):
        pres = _residual(qp, cand, res_scale)
        fcand = qp.objective(cand)
        if pres <= residual and fcand <= fx + 1e-12 * (1.0 + abs(fx)):
            x, residual, fx = cand, pres, fcand
    return x, fx, residual


def solve(qp: SimplexQP, warm_start: np.ndarray | None = None) -> SimplexQPSolution:
    """Accelerated projected gradient with monotone restart.

    Stepsize is ``1/||H||_2`` (power-iteration upper bound).  Raises
    :class:`QPNonconvergenceError` if the residual is still above ``qp.tol``
    when the iteration ceiling is hit.
    """
    m = qp.m
    if m == 1:
        return SimplexQPSolution(np.ones(1), 0.0, 0)
    if not qp.H.any():
        # Pure linear program over the simplex: vertex of the smallest c.
        lam = np.zeros(m)
        lam[int(np.argmin(qp.c))] = 1.0
        return SimplexQPSolution(lam, _residual(qp, lam, 1.0), 0)

    norm_h = spectral_norm_upper(qp.H)
    step = 1.0 / max(norm_h, np.finfo(float).tiny)
    res_scale = max(1.0, norm_h / _POWER_SAFETY)

    if warm_start is not None:
        x = project_simplex(np.asarray(warm_start, dtype=float))
    else:
        x = np.full(m, 1.0 / m)
    fx = qp.objective(x)
    x_prev = x
    t = 1.0
    t_prev = 1.0

    # The fixed-point iteration identifies the active face quickly; the
    # KKT polish on that face then lands at machine precision.  Attempting
    # the polish periodically (not just at the end) keeps tight tolerances
    # cheap on nearly singular Gram matrices.
    coarse = max(qp.tol, 1e-7)
    residual = _residual(qp, x, res_scale)
    iterations = 0
    while residual > qp.tol and iterations < MAX_ITERATIONS:
        if residual <= coarse or iterations % 100 == 99:
            new_x, new_fx, new_res = _apply_polish(qp, x, fx, residual, res_scale)
            if new_res < residual:
                x, fx, residual = new_x, new_fx, new_res
                x_prev = x
                t_prev, t = 1.0, 1.0
            if residual <= qp.tol:
                break
            coarse = qp.tol
        iterations += 1
        y = x + ((t_prev - 1.0) / t) * (x - x_prev)
        z = project_simplex(y - step * (qp.H @ y + qp.c))
        fz = qp.objective(z)
        if fz > fx:
            # Monotone restart: a projected-gradient step with a valid
            # stepsize never ascends; if it still does, the norm estimate
            # was short, so back the step off.
            z = project_simplex(x - step * (qp.H @ x + qp.c))
            fz = qp.objective(z)
            t_prev, t = 1.0, 1.0
            if fz > fx:
                z, fz = x, fx
                step *= 0.5
        x_prev, x, fx = x, z, fz
        t_prev, t = t, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        residual = _residual(qp, x, res_scale)

    if residual > qp.tol:
        x, fx, residual = _apply_polish(qp, x, fx, residual, res_scale)
    if residual > qp.tol:
        raise QPNonconvergenceError(residual, iterations, qp.tol)
    return SimplexQPSolution(x, residual, iterations)


def solve_batch(H: np.ndarray, C: np.ndarray, tol: float = 1e-10,
                max_iterations: int = MAX_ITERATIONS) -> np.ndarray:
    """Solve many simplex QPs sharing ``H`` over the columns of ``C``.

    Returns an ``m x B`` matrix of multipliers.  Same scheme as
    :func:`solve` (vectorized, per-column restart and polish); used by the
    model-evaluation paths that query one bundle at many points.
    """
    H = np.asarray(H, dtype=float)
    C = np.asarray(C, dtype=float)
    m, B = C.shape
    if m == 1:
        return np.ones((1, B))
    if not H.any():
        out = np.zeros((m, B))
        out[np.argmin(C, axis=0), np.arange(B)] = 1.0
        return out

    norm_h = spectral_norm_upper(H)
    step = 1.0 / max(norm_h, np.finfo(float).tiny)
    res_scale = max(1.0, norm_h / _POWER_SAFETY)

    X = np.full((m, B), 1.0 / m)
    FX = _objectives(H, C, X)
    X_prev = X.copy()
    t = np.ones(B)
    t_prev = np.ones(B)

    coarse = max(tol, 1e-7)
    for _ in range(max_iterations):
        R = X - project_simplex_columns(X - (H @ X + C) / res_scale)
        live = np.linalg.norm(R, axis=0) > coarse
        if not live.any():
            break
        Y = X + ((t_prev - 1.0) / t)[None, :] * (X - X_prev)
        Z = project_simplex_columns(Y - step * (H @ Y + C))
        FZ = _objectives(H, C, Z)
        bad = FZ > FX
        if bad.any():
            Zg = project_simplex_columns(X[:, bad] - step * (H @ X[:, bad] + C[:, bad]))
            Z[:, bad] = Zg
            FZ[bad] = _objectives(H, C[:, bad], Zg)
            t[bad] = 1.0
            t_prev[bad] = 1.0
            still = FZ > FX
            if still.any():
                # Columns the plain step cannot improve stay put; the final
                # per-column fallback re-solves them one by one.
                Z[:, still] = X[:, still]
                FZ[still] = FX[still]
        X_prev = np.where(live[None, :], X, X_prev)
        X = np.where(live[None, :], Z, X)
        FX = np.where(live, FZ, FX)
        t_prev = np.where(live, t, t_prev)
        t = np.where(live, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t)), t)

    for j in range(B):
        qp = SimplexQP(H, C[:, j], tol=tol)
        res_j = _residual(qp, X[:, j], res_scale)
        fx_j = qp.objective(X[:, j])
        X[:, j], _, res_j = _apply_polish(qp, X[:, j], fx_j, res_j, res_scale)
        if res_j > tol:
            X[:, j] = solve(qp, warm_start=X[:, j]).lam
    return X


def _objectives(H: np.ndarray, C: np.ndarray, X: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(X * (H @ X), axis=0) + np.sum(C * X, axis=0)


def _residual(qp: SimplexQP, lam: np.ndarray, res_scale: float) -> float:
    step = project_simplex(lam - (qp.H @ lam + qp.c) / res_scale)
    return float(np.linalg.norm(lam - step))

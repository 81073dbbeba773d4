"""Bundle minimization steps solved through their simplex duals.

Three steps share one dual backend and differ only in how ``(H, c)`` are
assembled and how the primal point is recovered:

* smooth step  (L-smooth model):
      min over Delta_m of (1/(2 rho) + 1/(2 L)) lam'G'G lam
                          - <G'x_k - fstar + dg/(2L), lam>,
      y = x_k - G lam / rho
* classic step (cutting planes, the L -> infinity limit):
      min over Delta_m of (1/(2 rho)) lam'G'G lam - <G'x_k - fstar, lam>,
      y = x_k - G lam / rho
* composite step (cutting planes plus a quadratic g):
      min over Delta_m of 0.5 lam'G'M^{-1}G lam - <G'M^{-1}w - fstar, lam>,
      M = A + rho I,  w = rho x_j - b,  y = M^{-1}(w - G lam)

Each assembly was re-derived by eliminating the primal variables from the
Lagrangian; the tests check them against dense small-instance references.
The optimal multipliers satisfy u = G lam = rho (x_k - y) for the first two
steps, which the solutions carry as an exact identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputDomainError, NumericError
from .models import Bundle, DEFAULT_QP_TOL
from .oracles import QuadraticFunction
from .simplex_qp import SimplexQP, solve


@dataclass(frozen=True, eq=False)
class StepSolution:
    """Solution of one bundle minimization step.

    ``t`` is the model value at ``y``; ``objective`` adds the proximal (and
    quadratic, for the composite step) terms — the quantity the null-step
    diagnostics call ``m``.  ``primal_feasibility`` is the signed maximum
    constraint violation (nonpositive when feasible).
    """

    y: np.ndarray
    t: float
    u: np.ndarray
    multipliers: np.ndarray
    objective: float
    primal_feasibility: float
    dual_residual: float


def _check_step_inputs(bundle: Bundle, rho: float):
    if bundle.m == 0:
        raise InputDomainError("bundle must hold at least one cut")
    if rho <= 0:
        raise InputDomainError("rho must be positive")


def solve_smooth_step(bundle: Bundle, L: float, rho: float, x_k: np.ndarray,
                      tol: float = DEFAULT_QP_TOL,
                      warm_start: np.ndarray | None = None) -> StepSolution:
    """Prox step against the minimal L-smooth interpolating model."""
    _check_step_inputs(bundle, rho)
    if L <= 0:
        raise InputDomainError("smoothness constant must be positive")
    x_k = np.asarray(x_k, dtype=float)
    G = bundle.gradients
    lin = G.T @ x_k - bundle.conjugate_offsets + bundle.gradient_sqnorms / (2.0 * L)
    qp = SimplexQP((1.0 / rho + 1.0 / L) * bundle.gram, -lin, tol=tol)
    sol = solve(qp, warm_start=warm_start)
    lam = sol.lam
    y = x_k - (G @ lam) / rho
    # The optimal-multiplier identity, kept exact by construction (u equals
    # G lam only up to rounding).
    u = rho * (x_k - y)
    # Model value at y, from the same multipliers (the evaluation dual shares
    # its KKT system with the step dual at the optimum).
    lin_y = G.T @ y - bundle.conjugate_offsets + bundle.gradient_sqnorms / (2.0 * L)
    t = float(lin_y @ lam - (u @ u) / (2.0 * L))
    objective = t + 0.5 * rho * float(np.sum((y - x_k) ** 2))
    du = u[:, None] - G
    quad = np.sum(du * du, axis=0) / (2.0 * L)
    violation = float(np.max(bundle.cut_values_at(y) + quad - t))
    return StepSolution(y, t, u, lam, objective, violation, sol.residual)


def solve_classic_step(bundle: Bundle, rho: float, x_k: np.ndarray,
                       tol: float = DEFAULT_QP_TOL,
                       warm_start: np.ndarray | None = None) -> StepSolution:
    """Prox step against the cutting-plane model."""
    _check_step_inputs(bundle, rho)
    x_k = np.asarray(x_k, dtype=float)
    G = bundle.gradients
    lin = G.T @ x_k - bundle.conjugate_offsets
    qp = SimplexQP(bundle.gram / rho, -lin, tol=tol)
    sol = solve(qp, warm_start=warm_start)
    lam = sol.lam
    y = x_k - (G @ lam) / rho
    u = rho * (x_k - y)
    cuts = bundle.cut_values_at(y)
    t = float(np.max(cuts))
    objective = t + 0.5 * rho * float(np.sum((y - x_k) ** 2))
    violation = float(np.max(cuts - t))
    return StepSolution(y, t, u, lam, objective, violation, sol.residual)


class CompositeStepSolver:
    """Composite-step backend with the ``A + rho I`` factor cached per run."""

    def __init__(self, g: QuadraticFunction, rho: float):
        if rho <= 0:
            raise InputDomainError("rho must be positive")
        self.g = g
        self.rho = float(rho)
        M = g.Q + rho * np.eye(g.n)
        try:
            self._factor = cho_factor(M)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"A + rho I factorization failed: {exc}") from exc

    def solve(self, bundle: Bundle, x_j: np.ndarray,
              tol: float = DEFAULT_QP_TOL,
              warm_start: np.ndarray | None = None) -> StepSolution:
        _check_step_inputs(bundle, self.rho)
        x_j = np.asarray(x_j, dtype=float)
        G = bundle.gradients
        w = self.rho * x_j - self.g.b
        MinvG = cho_solve(self._factor, G)
        Minvw = cho_solve(self._factor, w)
        qp = SimplexQP(G.T @ MinvG, -(G.T @ Minvw - bundle.conjugate_offsets), tol=tol)
        sol = solve(qp, warm_start=warm_start)
        lam = sol.lam
        y = Minvw - MinvG @ lam
        u = G @ lam
        cuts = bundle.cut_values_at(y)
        t = float(np.max(cuts))
        objective = t + self.g.value(y) + 0.5 * self.rho * float(np.sum((y - x_j) ** 2))
        violation = float(np.max(cuts - t))
        return StepSolution(y, t, u, lam, objective, violation, sol.residual)


def solve_composite_step(bundle: Bundle, g: QuadraticFunction, rho: float,
                         x_j: np.ndarray, tol: float = DEFAULT_QP_TOL,
                         warm_start: np.ndarray | None = None) -> StepSolution:
    """One-shot composite step (factors ``A + rho I`` on every call)."""
    return CompositeStepSolver(g, rho).solve(bundle, x_j, tol=tol, warm_start=warm_start)


def verify_nonconvex_constraints(bundle: Bundle, L: float, sol: StepSolution) -> float:
    """Max violation of the dropped bilinear constraint family.

    For a smooth-step solution, returns

        max_i (1/(2L)) ||u - g_i||^2 - (f_i - t - <u, y_i - y>).

    The equivalence theorem predicts a nonpositive result up to solver
    tolerance; this is its numerical certificate.
    """
    G = bundle.gradients
    du = sol.u[:, None] - G
    quad = np.sum(du * du, axis=0) / (2.0 * L)
    slack = bundle.values - sol.t - (bundle.points @ sol.u - float(sol.u @ sol.y))
    return float(np.max(quad - slack))

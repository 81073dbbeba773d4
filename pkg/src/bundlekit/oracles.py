"""Convex-function oracles and the exact proximal map for quadratics.

All solvers consume functions through the ``value``/``gradient`` pair (or
``value``/``subgradient`` for the piecewise-linear type).  Oracles are
immutable after construction and safe to evaluate concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import InputDomainError, NumericError, OracleFailureError


class SmoothConvexFunction:
    """Base class for convex functions with Lipschitz-continuous gradient.

    Attributes
    ----------
    n : int
        Ambient dimension.
    L : float
        Gradient Lipschitz constant (an upper bound is acceptable).
    x_star, f_star : optional
        A minimizer and its value, when known.
    """

    name = "smooth-convex"

    def __init__(self, n: int, L: float, x_star=None, f_star=None):
        if n <= 0:
            raise InputDomainError("dimension must be positive")
        if L < 0 or not np.isfinite(L):
            raise InputDomainError("smoothness constant must be finite and nonnegative")
        self.n = int(n)
        self.L = float(L)
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=float)
        self.f_star = None if f_star is None else float(f_star)

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def eval_oracle(f, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Validated (value, gradient) query.

    Raises :class:`InputDomainError` on malformed input and
    :class:`OracleFailureError` (naming the function) if the oracle returns
    anything non-finite.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (f.n,):
        raise InputDomainError(f"point has shape {x.shape}, expected ({f.n},)")
    if not np.all(np.isfinite(x)):
        raise InputDomainError("point must have finite coordinates")
    val = f.value(x)
    grad = np.asarray(f.gradient(x), dtype=float)
    if not np.isfinite(val) or grad.shape != (f.n,) or not np.all(np.isfinite(grad)):
        raise OracleFailureError(f"oracle '{f.name}' returned a non-finite evaluation")
    return float(val), grad


class QuadraticFunction(SmoothConvexFunction):
    """``0.5 x'Qx + b'x + c`` with symmetric PSD ``Q``.

    ``L`` is the largest eigenvalue of ``Q``, computed once at construction.
    """

    name = "quadratic"

    def __init__(self, Q: np.ndarray, b: np.ndarray, c: float = 0.0,
                 x_star=None, f_star=None):
        Q = np.asarray(Q, dtype=float)
        b = np.asarray(b, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or b.shape != (Q.shape[0],):
            raise InputDomainError("Q must be square and b must match its order")
        if np.max(np.abs(Q - Q.T)) > 1e-10 * max(1.0, float(np.max(np.abs(Q)))):
            raise InputDomainError("Q must be symmetric")
        L = float(np.linalg.eigvalsh(Q)[-1]) if Q.shape[0] > 0 else 0.0
        super().__init__(Q.shape[0], max(L, 0.0), x_star=x_star, f_star=f_star)
        self.Q = Q
        self.b = b
        self.c = float(c)

    def value(self, x):
        return float(0.5 * x @ self.Q @ x + self.b @ x + self.c)

    def gradient(self, x):
        return self.Q @ x + self.b

    def minimizer(self) -> np.ndarray:
        """Least-norm solution of ``Qx = -b`` (pseudo-inverse on the range)."""
        x, *_ = np.linalg.lstsq(self.Q, -self.b, rcond=None)
        return x


class LogSumExpFunction(SmoothConvexFunction):
    """``sigma * log(sum_i exp(a_i'x / sigma))`` for the rows of ``A``.

    Declared smoothness is the conservative bound ``||A||_2^2 / sigma``.
    """

    name = "log-sum-exp"

    def __init__(self, A: np.ndarray, sigma: float = 1.0):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or sigma <= 0:
            raise InputDomainError("A must be a matrix and sigma positive")
        super().__init__(A.shape[1], float(np.linalg.norm(A, 2) ** 2 / sigma))
        self.A = A
        self.sigma = float(sigma)

    def _scaled(self, x):
        z = self.A @ x / self.sigma
        zmax = np.max(z)
        e = np.exp(z - zmax)
        return zmax, e

    def value(self, x):
        zmax, e = self._scaled(x)
        return float(self.sigma * (zmax + np.log(np.sum(e))))

    def gradient(self, x):
        _, e = self._scaled(x)
        return self.A.T @ (e / np.sum(e))


class MaxAffineFunction:
    """``max_i (v_i'x + b_i)`` — convex piecewise linear.

    ``subgradient`` returns the slope of an argmax piece, lowest index on
    ties, so traces are reproducible.  Derived constants: ``M_f`` (largest
    slope norm), ``D_b`` (largest offset spread), ``diameter`` of the slope
    set.
    """

    name = "max-affine"

    def __init__(self, V: np.ndarray, b: np.ndarray):
        V = np.asarray(V, dtype=float)
        b = np.asarray(b, dtype=float)
        if V.ndim != 2 or b.shape != (V.shape[0],) or V.shape[0] == 0:
            raise InputDomainError("V must be m x n with matching offsets b")
        self.V = V
        self.b = b
        self.n = V.shape[1]
        self.m = V.shape[0]
        norms = np.linalg.norm(V, axis=1)
        self.M_f = float(np.max(norms))
        self.D_b = float(np.max(b) - np.min(b))
        d2 = norms[:, None] ** 2 + norms[None, :] ** 2 - 2.0 * V @ V.T
        self.diameter = float(np.sqrt(max(np.max(d2), 0.0)))

    def pieces(self, x):
        return self.V @ x + self.b

    def value(self, x):
        return float(np.max(self.pieces(x)))

    def subgradient(self, x):
        return self.V[int(np.argmax(self.pieces(x)))].copy()


class CompositeObjective:
    """Sum ``h = f + g`` of a max-affine term and a smooth quadratic."""

    name = "composite"

    def __init__(self, f: MaxAffineFunction, g: QuadraticFunction,
                 x_star=None, f_star=None):
        if f.n != g.n:
            raise InputDomainError("composite parts must share a dimension")
        self.f = f
        self.g = g
        self.n = f.n
        self.L_g = g.L
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=float)
        self.f_star = None if f_star is None else float(f_star)

    def value(self, x):
        return self.f.value(x) + self.g.value(x)


def prox_exact(f: QuadraticFunction, rho: float, x: np.ndarray) -> np.ndarray:
    """Exact proximal point of a quadratic: solve ``(Q + rho I) y = rho x - b``.

    The residual is checked against ``1e-10 * (1 + ||rho x - b||)``; failure
    raises :class:`NumericError`.
    """
    if rho <= 0:
        raise InputDomainError("rho must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (f.n,) or not np.all(np.isfinite(x)):
        raise InputDomainError("prox center must be a finite point of matching dimension")
    M = f.Q + rho * np.eye(f.n)
    rhs = rho * x - f.b
    try:
        y = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"proximal linear solve failed: {exc}") from exc
    res = float(np.linalg.norm(M @ y - rhs))
    if res > 1e-10 * (1.0 + float(np.linalg.norm(rhs))):
        raise NumericError(f"proximal solve residual {res:.3e} above tolerance")
    return y


def exact_prox_oracle(f: QuadraticFunction):
    """Inexact-prox interface wrapper around the exact quadratic prox.

    Returns a callable ``(x, rho) -> (y, grad f(y))`` suitable for the
    accelerated proximal-point driver.
    """

    def oracle(x, rho):
        y = prox_exact(f, rho, x)
        return y, f.gradient(y)

    return oracle

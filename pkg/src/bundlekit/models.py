"""Cut bundles and their lower models.

Two models are evaluated from the same bundle of cuts ``(y_i, f_i, g_i)``:

* the classic cutting-plane model ``l(y) = max_i f_i + <g_i, y - y_i>``;
* the minimal L-smooth convex model ``p`` interpolating every cut's value
  and gradient.  ``p`` is never materialized as a function object — each
  evaluation solves the simplex dual

      p(y) = max_{lam in Delta_m} <lam, G'y - fstar + dg/(2L)> - ||G lam||^2 / (2L),

  where ``G`` stacks the cut gradients, ``fstar_i = <g_i, y_i> - f_i`` and
  ``dg_i = ||g_i||^2``.  The model gradient is the witness ``u = G lam``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError
from .simplex_qp import SimplexQP, solve, solve_batch

DEFAULT_QP_TOL = 1e-10


class SmoothnessMisspecificationWarning(UserWarning):
    """The sampled lower-bound property p(y) <= f(y) failed: the supplied
    smoothness constant is below the true one."""


@dataclass(frozen=True, eq=False)
class ModelEvaluation:
    """One model query: value, gradient witness, and its dual certificate."""

    value: float
    gradient: np.ndarray
    multipliers: np.ndarray
    dual_gap: float


class Bundle:
    """Ordered cut storage with incrementally maintained caches.

    Caches: gradient matrix ``G`` (n x m), the conjugate offsets
    ``fstar_i = <g_i, y_i> - f_i``, squared gradient norms ``dg`` and the
    Gram matrix ``G'G``.  Within one null-step sequence cuts are only
    appended; an optional ``cap`` evicts the oldest cut that is neither the
    most recent serious-step cut nor the newest one.
    """

    def __init__(self, n: int, cap: int | None = None):
        if n <= 0:
            raise InputDomainError("bundle dimension must be positive")
        if cap is not None and cap < 2:
            raise InputDomainError("cap must allow the two protected cuts")
        self.n = int(n)
        self.cap = cap
        self._Y = np.empty((0, n))
        self._f = np.empty(0)
        self._G = np.empty((n, 0))
        self._fstar = np.empty(0)
        self._dg = np.empty(0)
        self._gram = np.empty((0, 0))
        self._serious_pos: int | None = None

    @property
    def m(self) -> int:
        return self._f.size

    @property
    def points(self) -> np.ndarray:
        return self._Y

    @property
    def values(self) -> np.ndarray:
        return self._f

    @property
    def gradients(self) -> np.ndarray:
        """Gradient matrix G with one cut per column (n x m)."""
        return self._G

    @property
    def conjugate_offsets(self) -> np.ndarray:
        return self._fstar

    @property
    def gradient_sqnorms(self) -> np.ndarray:
        return self._dg

    @property
    def gram(self) -> np.ndarray:
        return self._gram

    def add_cut(self, y: np.ndarray, f_val: float, grad: np.ndarray) -> int | None:
        """Append a cut; returns the evicted position (or None).

        The caller uses the returned position to keep warm-start multiplier
        vectors aligned with the bundle.
        """
        y = np.asarray(y, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if y.shape != (self.n,) or grad.shape != (self.n,):
            raise InputDomainError("cut point/gradient dimension mismatch")
        if not (np.isfinite(f_val) and np.all(np.isfinite(y)) and np.all(np.isfinite(grad))):
            raise InputDomainError("cut data must be finite")
        cross = self._G.T @ grad
        self._Y = np.vstack([self._Y, y[None, :]])
        self._f = np.append(self._f, float(f_val))
        self._G = np.hstack([self._G, grad[:, None]])
        self._fstar = np.append(self._fstar, float(grad @ y) - float(f_val))
        sq = float(grad @ grad)
        self._dg = np.append(self._dg, sq)
        gram = np.empty((self.m, self.m))
        gram[: self.m - 1, : self.m - 1] = self._gram
        gram[-1, : self.m - 1] = cross
        gram[: self.m - 1, -1] = cross
        gram[-1, -1] = sq
        self._gram = gram
        if self.cap is not None and self.m > self.cap:
            return self._evict()
        return None

    def _evict(self) -> int:
        protected = {self.m - 1}
        if self._serious_pos is not None:
            protected.add(self._serious_pos)
        pos = next(i for i in range(self.m) if i not in protected)
        self._Y = np.delete(self._Y, pos, axis=0)
        self._f = np.delete(self._f, pos)
        self._G = np.delete(self._G, pos, axis=1)
        self._fstar = np.delete(self._fstar, pos)
        self._dg = np.delete(self._dg, pos)
        self._gram = np.delete(np.delete(self._gram, pos, axis=0), pos, axis=1)
        if self._serious_pos is not None and self._serious_pos > pos:
            self._serious_pos -= 1
        return pos

    def mark_serious(self, pos: int | None = None):
        """Protect a cut (default: the newest) from cap eviction."""
        if self.m == 0:
            raise InputDomainError("cannot mark a cut in an empty bundle")
        self._serious_pos = self.m - 1 if pos is None else int(pos)

    def cut_values_at(self, y: np.ndarray) -> np.ndarray:
        """Affine cut values ``f_i + <g_i, y - y_i>`` for all cuts."""
        return self._G.T @ y - self._fstar

    def dump(self) -> str:
        """Diagnostic text: one cut per line, hex floats for exact replay."""
        lines = []
        for i in range(self.m):
            y = " ".join(c.hex() for c in self._Y[i])
            g = " ".join(c.hex() for c in self._G[:, i])
            lines.append(f"{y}\t{self._f[i].hex()}\t{g}")
        return "\n".join(lines)


def load_bundle(text: str, cap: int | None = None) -> Bundle:
    """Rebuild a bundle from :meth:`Bundle.dump` output, bit exactly."""
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise InputDomainError("empty bundle dump")
    first = rows[0].split("\t")
    n = len(first[0].split())
    bundle = Bundle(n, cap=cap)
    for line in rows:
        y_txt, f_txt, g_txt = line.split("\t")
        y = np.array([float.fromhex(tok) for tok in y_txt.split()])
        g = np.array([float.fromhex(tok) for tok in g_txt.split()])
        bundle.add_cut(y, float.fromhex(f_txt), g)
    return bundle


def _require_nonempty(bundle: Bundle):
    if bundle.m == 0:
        raise InputDomainError("bundle must hold at least one cut")


def eval_cutting_plane(bundle: Bundle, y: np.ndarray) -> ModelEvaluation:
    """Classic piecewise-linear model: max cut, argmax ties to lowest index."""
    _require_nonempty(bundle)
    y = np.asarray(y, dtype=float)
    cuts = bundle.cut_values_at(y)
    idx = int(np.argmax(cuts))
    lam = np.zeros(bundle.m)
    lam[idx] = 1.0
    return ModelEvaluation(float(cuts[idx]), bundle.gradients[:, idx].copy(), lam, 0.0)


def smooth_model_qp(bundle: Bundle, L: float, y: np.ndarray,
                    tol: float = DEFAULT_QP_TOL) -> SimplexQP:
    """Simplex dual of the smooth-model evaluation at ``y``."""
    lin = bundle.gradients.T @ y - bundle.conjugate_offsets + bundle.gradient_sqnorms / (2.0 * L)
    return SimplexQP(bundle.gram / L, -lin, tol=tol)


def _model_value_from(bundle: Bundle, L: float, y: np.ndarray, lam: np.ndarray) -> float:
    lin = bundle.gradients.T @ y - bundle.conjugate_offsets + bundle.gradient_sqnorms / (2.0 * L)
    u = bundle.gradients @ lam
    return float(lin @ lam - (u @ u) / (2.0 * L))


def eval_smooth_model(bundle: Bundle, L: float, y: np.ndarray,
                      tol: float = DEFAULT_QP_TOL,
                      warm_start: np.ndarray | None = None) -> ModelEvaluation:
    """Minimal L-smooth interpolating model value and gradient at ``y``."""
    _require_nonempty(bundle)
    if L <= 0:
        raise InputDomainError("smoothness constant must be positive")
    y = np.asarray(y, dtype=float)
    if y.shape != (bundle.n,) or not np.all(np.isfinite(y)):
        raise InputDomainError("query point must be finite with bundle dimension")
    qp = smooth_model_qp(bundle, L, y, tol=tol)
    sol = solve(qp, warm_start=warm_start)
    value = -qp.objective(sol.lam)
    return ModelEvaluation(value, bundle.gradients @ sol.lam, sol.lam, sol.residual)


def eval_smooth_model_many(bundle: Bundle, L: float, Y: np.ndarray,
                           tol: float = DEFAULT_QP_TOL):
    """Vectorized smooth-model evaluation at the rows of ``Y``.

    Returns ``(values, gradients)`` with one row per query point.  All
    queries share the Gram matrix, so one batched dual solve covers them.
    """
    _require_nonempty(bundle)
    Y = np.asarray(Y, dtype=float)
    lin = bundle.gradients.T @ Y.T - bundle.conjugate_offsets[:, None] \
        + (bundle.gradient_sqnorms / (2.0 * L))[:, None]
    lams = solve_batch(bundle.gram / L, -lin, tol=tol)
    U = bundle.gradients @ lams
    values = np.sum(lin * lams, axis=0) - np.sum(U * U, axis=0) / (2.0 * L)
    return values, U.T


def model_diameter(bundle: Bundle) -> float:
    """Largest pairwise distance between cut gradients (0 for one cut)."""
    _require_nonempty(bundle)
    dg = bundle.gradient_sqnorms
    d2 = dg[:, None] + dg[None, :] - 2.0 * bundle.gram
    return float(np.sqrt(max(float(np.max(d2)), 0.0)))


def verify_interpolation(bundle: Bundle, L: float,
                         tol: float = DEFAULT_QP_TOL) -> tuple[float, float]:
    """Max value / gradient interpolation errors of the smooth model.

    Evaluates the model at every bundle point; the minimal L-smooth model
    must reproduce the stored values and gradients there.
    """
    _require_nonempty(bundle)
    values, grads = eval_smooth_model_many(bundle, L, bundle.points, tol=tol)
    value_err = float(np.max(np.abs(values - bundle.values)))
    grad_err = float(np.max(np.linalg.norm(grads - bundle.gradients.T, axis=1)))
    return value_err, grad_err


def verify_lower_bound(bundle: Bundle, L: float, oracle, Y: np.ndarray,
                       tol: float = DEFAULT_QP_TOL) -> float:
    """Sampled check of ``p(y) <= f(y)``; warns if the bound is violated.

    A violation beyond 1e-6 means the supplied ``L`` undershoots the true
    smoothness constant, which silently voids every downstream guarantee.
    Returns the largest violation found (negative when the bound holds).
    """
    values, _ = eval_smooth_model_many(bundle, L, Y, tol=tol)
    f_vals = np.array([oracle.value(np.asarray(y, dtype=float)) for y in Y])
    worst = float(np.max(values - f_vals))
    if worst > 1e-6:
        warnings.warn(
            f"smooth model exceeds the function by {worst:.3e}: the supplied "
            "smoothness constant is below the true one (lower-bound property "
            "p <= f violated)",
            SmoothnessMisspecificationWarning,
            stacklevel=2,
        )
    return worst

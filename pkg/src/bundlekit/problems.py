"""Registered benchmark problems and their plain-text descriptors.

A descriptor is a ``key=value`` text with keys drawn from
``family, n, m, condition, sigma, seed``.  Generation is deterministic for
a fixed ``(descriptor, seed)`` pair, so traces are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .oracles import (
    CompositeObjective,
    LogSumExpFunction,
    MaxAffineFunction,
    QuadraticFunction,
)

FAMILIES = ("quadratic", "log-sum-exp", "least-squares", "max-affine-plus-quadratic")

_DESCRIPTOR_KEYS = ("family", "n", "m", "condition", "sigma", "seed")


@dataclass
class Problem:
    """A generated instance: objective plus a deterministic starting point."""

    family: str
    objective: object
    x0: np.ndarray
    descriptor: dict = field(default_factory=dict)
    f_star_kind: str | None = None  # "exact" | "numeric-reference" | None

    @property
    def x_star(self):
        return self.objective.x_star

    @property
    def f_star(self):
        return self.objective.f_star


def parse_descriptor(text: str) -> dict:
    """Parse ``key=value`` descriptor text (one pair per line or comma-separated)."""
    out: dict = {}
    pairs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for chunk in line.split(","):
            chunk = chunk.strip()
            if chunk:
                pairs.append((line_no, chunk))
    for line_no, chunk in pairs:
        if "=" not in chunk:
            raise ConfigError(f"expected key=value, got {chunk!r}", line_no=line_no)
        key, value = (s.strip() for s in chunk.split("=", 1))
        if key not in _DESCRIPTOR_KEYS:
            raise ConfigError(f"unknown descriptor key {key!r}", line_no=line_no)
        out[key] = value
    if "family" not in out:
        raise ConfigError("descriptor must name a family")
    return out


def format_descriptor(desc: dict) -> str:
    """Canonical one-line rendering, fixed key order."""
    parts = [f"{k}={desc[k]}" for k in _DESCRIPTOR_KEYS if k in desc]
    return ",".join(parts)


def _as_int(desc, key, default):
    try:
        return int(desc.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"descriptor key {key!r} must be an integer") from exc


def _as_float(desc, key, default):
    try:
        return float(desc.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"descriptor key {key!r} must be a number") from exc


def _random_spd(rng, n, condition):
    eigs = np.geomspace(1.0 / condition, 1.0, n)
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = (V * eigs) @ V.T
    return 0.5 * (Q + Q.T)


def make_problem(spec, seed: int | None = None) -> Problem:
    """Build a registered problem instance.

    ``spec`` is a descriptor dict or text.  An explicit ``seed`` overrides
    the descriptor's.  Unknown families raise :class:`ConfigError`.
    """
    desc = dict(parse_descriptor(spec) if isinstance(spec, str) else spec)
    family = str(desc.get("family", ""))
    if family not in FAMILIES:
        raise ConfigError(
            f"unknown problem family {family!r}; registered: {', '.join(FAMILIES)}"
        )
    if seed is None:
        seed = _as_int(desc, "seed", 0)
    desc["seed"] = str(seed)
    rng = np.random.default_rng(seed)

    if family == "quadratic":
        n = _as_int(desc, "n", 10)
        condition = _as_float(desc, "condition", 100.0)
        Q = _random_spd(rng, n, condition)
        # Draw the minimizer directly so its norm stays O(sqrt(n)) no matter
        # how ill-conditioned Q is, then back out the linear term.
        x_star = rng.standard_normal(n)
        b = -Q @ x_star
        f = QuadraticFunction(Q, b, 0.0, x_star=x_star)
        f.f_star = f.value(x_star)
        x0 = rng.standard_normal(n)
        return Problem(family, f, x0, desc, f_star_kind="exact")

    if family == "log-sum-exp":
        n = _as_int(desc, "n", 10)
        m = _as_int(desc, "m", 2 * _as_int(desc, "n", 10))
        sigma = _as_float(desc, "sigma", 1.0)
        A = rng.standard_normal((m, n))
        f = LogSumExpFunction(A, sigma=sigma)
        x0 = rng.standard_normal(n)
        return Problem(family, f, x0, desc, f_star_kind=None)

    if family == "least-squares":
        n = _as_int(desc, "n", 10)
        m = _as_int(desc, "m", 3 * _as_int(desc, "n", 10))
        A = rng.standard_normal((m, n))
        y = rng.standard_normal(m)
        x_star, *_ = np.linalg.lstsq(A, y, rcond=None)
        f = QuadraticFunction(A.T @ A, -A.T @ y, 0.5 * float(y @ y), x_star=x_star)
        f.f_star = f.value(x_star)
        x0 = rng.standard_normal(n)
        return Problem(family, f, x0, desc, f_star_kind="exact")

    # max-affine-plus-quadratic
    n = _as_int(desc, "n", 2)
    m = _as_int(desc, "m", 5)
    condition = _as_float(desc, "condition", 10.0)
    V = rng.standard_normal((m, n))
    offsets = rng.standard_normal(m)
    Qg = _random_spd(rng, n, condition)
    bg = 0.1 * rng.standard_normal(n)
    h = CompositeObjective(MaxAffineFunction(V, offsets), QuadraticFunction(Qg, bg))
    x0 = rng.standard_normal(n)
    x_star, f_star = _composite_reference_optimum(h, x0)
    h.x_star = x_star
    h.f_star = f_star
    return Problem(family, h, x0, desc, f_star_kind="numeric-reference")


def _composite_reference_optimum(h: CompositeObjective, x0: np.ndarray):
    """Numeric reference optimum from a long, tightly-tolerated solver run."""
    from .solvers import SolverConfig, apbm_composite_run

    cfg = SolverConfig(rho=1.0, B=1.0, max_iter=1_000_000, stat_tol=1e-13)
    result = apbm_composite_run(h, x0, cfg)
    return result.x.copy(), result.f_x

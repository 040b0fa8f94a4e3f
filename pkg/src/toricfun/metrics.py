"""Torus-invariant metrics on O(1) over P^n through their concave potentials.

A metric ``h`` is represented by ``f_h(u) = log ||1||_h`` evaluated at the
point ``[1 : e^{-u_1} : ... : e^{-u_n}]``.  With this half-log convention
``h <= h'`` iff ``f_h <= f_h'`` and ``t*h`` has potential ``f_h + log(t)/2``.

Built-in potentials:

* canonical      ``min(0, u_1, ..., u_n)``
* fubini_study   ``-1/2 log(1 + sum exp(-2 u_k))``
* piecewise_linear  ``min_i(<a_i, u> + c_i)``
* log_sum_exp    ``-1/(2p) log sum_i w_i exp(-2p(<a_i, u> + c_i))``
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, SpecError

__all__ = [
    "Potential",
    "LogSumExpPotential",
    "PiecewiseLinearPotential",
    "ShiftedPotential",
    "SumPotential",
    "CallablePotential",
    "MetricSpec",
    "InvariantMetric",
    "canonical_potential",
    "metric_from_spec",
    "canonical",
    "fubini_study",
    "scale",
    "is_dominated",
    "random_admissible",
    "random_nonconcave",
    "project",
    "make_rng",
]


def _as_points(u, n):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, n) if n > 1 or u.size != 1 else u.reshape(1, 1)
    return u


def canonical_potential(u: np.ndarray) -> np.ndarray:
    """``min(0, u_1, ..., u_n)`` row-wise."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    return np.minimum(0.0, u.min(axis=1))


class Potential:
    """Vectorised concave potential on ``R^n``; ``__call__`` takes ``(K, n)``."""

    n: int
    smooth: bool = False

    def __call__(self, u: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError


def _vertex_mask(a: np.ndarray) -> np.ndarray:
    n = a.shape[1]
    return np.array([(row == 0).all() or ((row == 0).sum() == n - 1 and row.max() == 1.0) for row in a])


class _Pieces:
    """Affine pieces ``<a_i, u> + c_i`` with slopes in the simplex."""

    def __init__(self, a, c):
        self.a_exact = [tuple(Fraction(v) for v in row) for row in a]
        self.a = np.array([[float(v) for v in row] for row in self.a_exact], dtype=float)
        self.c = np.asarray(c, dtype=float).reshape(-1)
        if self.a.ndim != 2 or self.a.shape[0] != self.c.size or self.c.size == 0:
            raise SpecError("pieces need matching non-empty slope and offset lists")
        self.n = self.a.shape[1]

    def face_mask(self, zero: Sequence[bool], top: bool) -> np.ndarray:
        keep = np.ones(len(self.a_exact), dtype=bool)
        for i, row in enumerate(self.a_exact):
            if any(z and v != 0 for z, v in zip(zero, row)):
                keep[i] = False
            if top and sum(row) != 1:
                keep[i] = False
        return keep


class PiecewiseLinearPotential(_Pieces, Potential):
    smooth = False

    def __call__(self, u):
        u = _as_points(u, self.n)
        return np.min(u @ self.a.T + self.c, axis=1)

    def subgradient(self, u):
        u = _as_points(u, self.n)
        return self.a[np.argmin(u @ self.a.T + self.c, axis=1)]

    @property
    def vertex_only(self) -> bool:
        return bool(_vertex_mask(self.a).all()) and len(set(self.a_exact)) == len(self.a_exact)


class LogSumExpPotential(_Pieces, Potential):
    smooth = True

    def __init__(self, a, c, weights=None, p: float = 1.0):
        super().__init__(a, c)
        self.w = np.ones(self.c.size) if weights is None else np.asarray(weights, dtype=float)
        self.p = float(p)
        if self.w.shape != self.c.shape or (self.w <= 0).any():
            raise SpecError("weights must be positive, one per piece")
        if not self.p > 0:
            raise SpecError("smoothing p must be positive")
        self._logw = np.log(self.w)

    def _z(self, u):
        return self._logw - 2.0 * self.p * (u @ self.a.T + self.c)

    def __call__(self, u):
        u = _as_points(u, self.n)
        return -logsumexp(self._z(u), axis=1) / (2.0 * self.p)

    def derivatives(self, u):
        """Value, gradient and Hessian of the potential at ``(K, n)`` points."""
        z = self._z(u)
        lse = logsumexp(z, axis=1, keepdims=True)
        pi = np.exp(z - lse)
        mean = pi @ self.a
        # centred form: stays positive semidefinite when pi sits on one piece
        dev = self.a[None, :, :] - mean[:, None, :]
        cov = np.einsum("ki,kij,kil->kjl", pi, dev, dev)
        return -lse[:, 0] / (2.0 * self.p), mean, -2.0 * self.p * cov

    def subgradient(self, u):
        return self.derivatives(_as_points(u, self.n))[1]

    def restrict(self, zero, top) -> "LogSumExpPotential":
        keep = self.face_mask(zero, top)
        if not keep.any():
            raise DomainError("no affine piece survives on this face; metric is not admissible")
        return LogSumExpPotential([self.a_exact[i] for i in np.flatnonzero(keep)],
                                  self.c[keep], self.w[keep], self.p)


class ShiftedPotential(Potential):
    """``base + shift``; the Fenchel transform shifts by ``-shift`` exactly."""

    def __init__(self, base: Potential, shift: float):
        self.base = base
        self.shift = float(shift)
        self.n = base.n
        self.smooth = base.smooth

    def __call__(self, u):
        return self.base(u) + self.shift

    def subgradient(self, u):
        return self.base.subgradient(u)


class SumPotential(Potential):
    """Convex combination ``sum_b coef_b * f_b`` of potentials."""

    def __init__(self, terms: Sequence[tuple[float, Potential]]):
        self.terms = [(float(c), p) for c, p in terms if c != 0.0]
        if not self.terms:
            raise SpecError("empty combination")
        self.n = self.terms[0][1].n
        if abs(sum(c for c, _ in self.terms) - 1.0) > 1e-12:
            raise SpecError("combination coefficients must sum to one")
        self.smooth = all(isinstance(p, LogSumExpPotential) for _, p in self.terms)

    def __call__(self, u):
        u = _as_points(u, self.n)
        return sum(c * p(u) for c, p in self.terms)

    def derivatives(self, u):
        v = g = H = 0.0
        for c, p in self.terms:
            pv, pg, pH = p.derivatives(u)
            v, g, H = v + c * pv, g + c * pg, H + c * pH
        return v, g, H

    def restrict(self, zero, top) -> "SumPotential":
        return SumPotential([(c, p.restrict(zero, top)) for c, p in self.terms])


class CallablePotential(Potential):
    """Wraps a user function ``f(u) -> values`` on ``(K, n)`` arrays."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n: int):
        self.fn = fn
        self.n = int(n)

    def __call__(self, u):
        return np.asarray(self.fn(_as_points(u, self.n)), dtype=float)


# --------------------------------------------------------------------------
# specs
# --------------------------------------------------------------------------

KINDS = ("canonical", "fubini_study", "piecewise_linear", "log_sum_exp", "scaled",
         "projected", "custom")


def _frac_str(v: Fraction) -> str:
    return str(Fraction(v))


@dataclass
class MetricSpec:
    """Declarative description of an invariant metric.

    JSON layout: ``{"kind", "n", "pieces": [{"a": [...], "c": ...}], "p",
    "weights", "t", "base"}``; slopes are written as exact ``"p/q"`` strings.
    """

    kind: str
    n: int
    pieces: list[tuple[tuple[Fraction, ...], float]] = field(default_factory=list)
    p: float | None = None
    weights: list[float] | None = None
    t: float | None = None
    base: "MetricSpec | None" = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "n": self.n}
        if self.pieces:
            out["pieces"] = [{"a": [_frac_str(v) for v in a], "c": float(c)} for a, c in self.pieces]
        if self.p is not None:
            out["p"] = float(self.p)
        if self.weights is not None:
            out["weights"] = [float(w) for w in self.weights]
        if self.t is not None:
            out["t"] = float(self.t)
        if self.base is not None:
            out["base"] = self.base.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricSpec":
        kind = d.get("kind")
        if kind not in KINDS:
            raise SpecError(f"unknown metric kind {kind!r}")
        base = cls.from_dict(d["base"]) if d.get("base") is not None else None
        n = d.get("n", base.n if base is not None else None)
        if n is None and d.get("pieces"):
            n = len(d["pieces"][0]["a"])
        if n is None:
            raise SpecError("spec needs the dimension n")
        pieces = [(tuple(Fraction(v) for v in pc["a"]), float(pc["c"])) for pc in d.get("pieces", [])]
        return cls(kind, int(n), pieces, d.get("p"), d.get("weights"), d.get("t"), base)

    @classmethod
    def from_json(cls, text: str) -> "MetricSpec":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _vertices(n: int) -> list[tuple[Fraction, ...]]:
    zero = tuple(Fraction(0) for _ in range(n))
    return [zero] + [tuple(Fraction(int(k == j)) for k in range(n)) for j in range(n)]


def _validate_pieces(spec: MetricSpec):
    if not spec.pieces:
        raise SpecError(f"{spec.kind} spec needs pieces")
    for a, _ in spec.pieces:
        if len(a) != spec.n:
            raise SpecError(f"slope {a} has wrong dimension")
        if any(v < 0 for v in a) or sum(a) > 1:
            raise SpecError(f"slope {tuple(map(str, a))} is not in the standard simplex")
    slopes = {a for a, _ in spec.pieces}
    if not all(v in slopes for v in _vertices(spec.n)):
        raise SpecError("every vertex of the simplex must appear as a slope (f - f_inf bounded)")


@dataclass
class InvariantMetric:
    """An invariant metric: its potential plus provenance."""

    potential: Potential
    kind: str
    spec: MetricSpec | None = None
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.potential.n

    def f(self, u) -> np.ndarray:
        return self.potential(u)

    def __call__(self, u) -> np.ndarray:
        return self.potential(u)

    def subgradient(self, u):
        sub = getattr(self.potential, "subgradient", None)
        return None if sub is None else sub(u)

    def digest(self) -> str:
        if self.spec is not None:
            return self.spec.digest()
        if self.params:
            blob = json.dumps(self.params, sort_keys=True, default=str).encode()
            return f"{self.kind}-{hashlib.sha256(blob).hexdigest()[:12]}"
        return f"{self.kind}-{id(self):x}"

    def bound_constant(self) -> float:
        """A constant ``K`` with ``|f - f_inf| <= K`` on ``R^n``."""
        return _bound(self.potential)


def _bound(pot: Potential) -> float:
    if isinstance(pot, ShiftedPotential):
        return _bound(pot.base) + abs(pot.shift)
    if isinstance(pot, SumPotential):
        return sum(abs(c) * _bound(p) for c, p in pot.terms)
    if isinstance(pot, (PiecewiseLinearPotential, LogSumExpPotential)):
        vm = _vertex_mask(pot.a)
        lo, hi = pot.c.min(), pot.c[vm].max()
        if isinstance(pot, LogSumExpPotential):
            lo -= np.log(pot.w.sum()) / (2 * pot.p)
            hi = (pot.c[vm] - np.log(pot.w[vm]) / (2 * pot.p)).max()
        return float(max(abs(lo), abs(hi)))
    raise DomainError("no bound available for custom potentials")


def metric_from_spec(spec: MetricSpec | dict) -> InvariantMetric:
    """Build the metric described by ``spec``."""
    if isinstance(spec, dict):
        spec = MetricSpec.from_dict(spec)
    n = spec.n
    if n < 1:
        raise SpecError("n must be >= 1")
    kind = spec.kind
    if kind == "canonical":
        pot = PiecewiseLinearPotential(_vertices(n), np.zeros(n + 1))
    elif kind == "fubini_study":
        pot = LogSumExpPotential(_vertices(n), np.zeros(n + 1), np.ones(n + 1), 1.0)
    elif kind == "piecewise_linear":
        _validate_pieces(spec)
        pot = PiecewiseLinearPotential([a for a, _ in spec.pieces], [c for _, c in spec.pieces])
    elif kind == "log_sum_exp":
        _validate_pieces(spec)
        weights = spec.weights if spec.weights is not None else [1.0] * len(spec.pieces)
        if len(weights) != len(spec.pieces) or any(w <= 0 for w in weights):
            raise SpecError("weights must be positive, one per piece")
        if spec.p is None or not spec.p > 0:
            raise SpecError("log_sum_exp spec needs p > 0")
        pot = LogSumExpPotential([a for a, _ in spec.pieces], [c for _, c in spec.pieces], weights, spec.p)
    elif kind == "scaled":
        if spec.base is None or spec.t is None:
            raise SpecError("scaled spec needs base and t")
        return scale(metric_from_spec(spec.base), spec.t)
    elif kind == "projected":
        if spec.base is None:
            raise SpecError("projected spec needs base")
        return project(metric_from_spec(spec.base))
    else:
        raise SpecError("custom metrics have no declarative form")
    return InvariantMetric(pot, kind, spec)


def canonical(n: int) -> InvariantMetric:
    return metric_from_spec(MetricSpec("canonical", n))


def fubini_study(n: int) -> InvariantMetric:
    return metric_from_spec(MetricSpec("fubini_study", n))


def scale(h: InvariantMetric, t: float) -> InvariantMetric:
    """The metric ``t*h``: potential ``f_h + log(t)/2``."""
    if not t > 0:
        raise DomainError(f"scale factor must be positive, got {t}")
    shift = 0.5 * np.log(t)
    base = h.potential
    if isinstance(base, ShiftedPotential):
        shift += base.shift
        base = base.base
    spec = MetricSpec("scaled", h.n, t=float(t), base=h.spec) if h.spec is not None else None
    pot = base if shift == 0.0 else ShiftedPotential(base, shift)
    return InvariantMetric(pot, "scaled", spec, {"t": float(t), "base": h.kind})


def _probe_grid(n: int, radius: float, per_dim: int) -> np.ndarray:
    g = np.linspace(-radius, radius, per_dim)
    mesh = np.meshgrid(*([g] * n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], -1)
    # rays along the directions where the canonical potential has kinks
    r = np.linspace(-radius, radius, 8 * per_dim)[:, None]
    rays = [r * np.ones((1, n))]
    for k in range(n):
        e = np.zeros((1, n))
        e[0, k] = 1.0
        rays.append(r * e)
    return np.concatenate([pts, *rays])


def is_dominated(h: InvariantMetric, h2: InvariantMetric, grid_budget: int = 4000,
                 slack: float = 1e-9) -> tuple[bool, np.ndarray | None]:
    """Sampling test of ``h <= h2``; returns ``(ok, witness)``.

    Probes grids on the boxes ``[-R, R]^n`` for ``R`` in 1, 4, 16, 50.  A
    ``True`` answer is evidence, not proof.
    """
    n = h.n
    per_dim = max(3, int(round(grid_budget ** (1.0 / n))))
    for radius in (1.0, 4.0, 16.0, 50.0):
        u = _probe_grid(n, radius, per_dim)
        gap = h.f(u) - h2.f(u)
        bad = np.flatnonzero(gap > slack)
        if bad.size:
            return False, u[bad[np.argmax(gap[bad])]]
    return True, None


def make_rng(seed: int, algorithm: str = "philox") -> np.random.Generator:
    """Counter-based generator named in experiment configs."""
    if algorithm != "philox":
        raise DomainError(f"unsupported rng algorithm {algorithm!r}")
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _random_slope(rng: np.random.Generator, n: int, denom: int = 12) -> tuple[Fraction, ...]:
    while True:
        cut = np.sort(rng.integers(0, denom + 1, size=n + 1))
        parts = np.diff(np.concatenate([[0], cut]))
        a = tuple(Fraction(int(v), denom) for v in parts[:n])
        if sum(a) <= 1:
            return a


def random_admissible(seed: int, n: int, complexity: int = 2,
                      below: str = "canonical") -> InvariantMetric:
    """Seeded log-sum-exp metric dominated by ``h_inf`` (or by ``h_FS``).

    Every vertex slope is present with ``c <= 0`` and weight ``>= 1``, which
    forces ``f <= min(0, u)``.  For ``below="fubini_study"`` the smoothing is
    restricted to ``p <= 1``, which forces ``f <= f_FS`` as well.
    """
    if complexity < 1:
        raise DomainError("complexity must be >= 1")
    if below not in ("canonical", "fubini_study"):
        raise DomainError(f"unknown dominating metric {below!r}")
    rng = make_rng(seed)
    pieces, weights = [], []
    for v in _vertices(n):
        pieces.append((v, -float(rng.uniform(0.0, 0.5))))
        weights.append(float(rng.uniform(1.0, 2.0)))
    for _ in range(complexity):
        pieces.append((_random_slope(rng, n), -float(rng.uniform(0.0, 1.5))))
        weights.append(float(rng.uniform(0.5, 2.0)))
    p = float(rng.uniform(0.5, 3.0)) if below == "canonical" else float(rng.uniform(0.4, 1.0))
    spec = MetricSpec("log_sum_exp", n, pieces, p, weights)
    h = metric_from_spec(spec)
    h.params.update(seed=int(seed), complexity=int(complexity), below=below)
    return h


def random_nonconcave(seed: int, n: int = 1, complexity: int = 2) -> InvariantMetric:
    """Seeded admissible potential minus a narrow Gaussian dip.

    The dip ``a exp(-|u - c|^2 / s^2)`` with ``2a/s^2 > 2`` beats the
    curvature ``p/2 <= 3/2`` of the base, so the potential is not concave
    near ``c``; it stays below the base and hence below ``f_inf``.
    """
    base = random_admissible(seed, n, complexity)
    rng = make_rng(seed + 1_000_003)
    a = float(rng.uniform(0.3, 0.6))
    s = float(rng.uniform(0.2, 0.5))
    c = rng.uniform(-2.0, 2.0, size=n)

    def fn(u):
        return base.f(u) - a * np.exp(-((u - c) ** 2).sum(axis=-1) / s**2)

    params = {"seed": int(seed), "base": base.digest(), "depth": a, "width": s, "center": c.tolist()}
    return InvariantMetric(CallablePotential(fn, n), "custom", None, params)


def project(h: InvariantMetric, resolution: int | None = None) -> InvariantMetric:
    """Envelope metric ``P[h]``: potential ``u -> min_x(<x,u> - fcheck_h(x))``.

    The minimum runs over the lattice ``{x : M x integer} in Delta_n``, so the
    result is piecewise linear with slopes in the simplex and its potential
    dominates ``f_h``.
    """
    from .fenchel import transform_points  # local import: fenchel depends on metrics
    from .simplex import lattice_points

    n = h.n
    M = resolution or (512 if n == 1 else 24)
    mus = lattice_points(n, M)
    x = np.asarray(mus, dtype=float) / M
    vals, _ = transform_points(h.potential, x)
    if not np.all(np.isfinite(vals)):
        raise DomainError("Fenchel transform is not finite on the simplex")
    slopes = [tuple(Fraction(v, M) for v in mu) for mu in mus]
    pot = PiecewiseLinearPotential(slopes, -vals)
    spec = MetricSpec("projected", n, base=h.spec) if h.spec is not None else None
    return InvariantMetric(pot, "projected", spec, {"resolution": M, "base": h.kind})

"""Lattice points, the cell partition of the standard simplex, and quadrature.

The standard simplex is ``{x in R^n : x_k >= 0, sum(x) <= 1}``.  For a degree
``m`` it is partitioned into the cells

    Delta_{n,nu} = {x in Delta_n : nu_k/m <= x_k < (nu_k + 1)/m}

indexed by ``nu`` in ``P_m = {nu in N^n : |nu| <= m}``.  In the local
coordinate ``t = m*x - nu`` a cell is the unit cube cut by the half space
``sum(t) <= m - |nu|``, which is what :func:`region_rule` integrates over.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import AccuracyError, DomainError

__all__ = [
    "LatticePoint",
    "Cell",
    "ProjectiveFanChart",
    "QuadratureScheme",
    "lattice_points",
    "cell",
    "cells",
    "cell_volume",
    "cell_volume_exact",
    "cell_rule",
    "cell_average",
    "graded_rule",
    "region_rule",
    "cube_rule",
    "simplex_quadrature",
    "fan_charts",
    "charts_containing",
]

LatticePoint = tuple  # tuple of n non-negative ints


def _iter_points(n: int, budget: int) -> Iterator[tuple[int, ...]]:
    if n == 0:
        yield ()
        return
    for first in range(budget + 1):
        for rest in _iter_points(n - 1, budget - first):
            yield (first,) + rest


@functools.lru_cache(maxsize=256)
def _points_cached(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    return tuple(_iter_points(n, m))


def lattice_points(n: int, m: int) -> list[tuple[int, ...]]:
    """Return ``P_m`` in lexicographic order.

    >>> lattice_points(2, 1)
    [(0, 0), (0, 1), (1, 0)]
    """
    if n < 1 or m < 0:
        raise DomainError(f"need n >= 1 and m >= 0, got n={n}, m={m}")
    return list(_points_cached(int(n), int(m)))


def _check_nu(n: int, m: int, nu: Sequence[int]) -> tuple[int, ...]:
    nu = tuple(int(v) for v in nu)
    if len(nu) != n or any(v < 0 for v in nu) or sum(nu) > m:
        raise DomainError(f"nu={nu} is not in P_{m} for n={n}")
    return nu


def cell_volume_exact(n: int, m: int, nu: Sequence[int]) -> Fraction:
    """Exact Lebesgue volume of ``Delta_{n,nu}`` (unit cube has volume 1).

    Inclusion-exclusion over the faces of the cube ``[0,1]^n`` intersected
    with ``{sum(t) <= c}``, ``c = min(m - |nu|, n)``.
    """
    nu = _check_nu(n, m, nu)
    c = min(m - sum(nu), n)
    total = sum((-1) ** k * math.comb(n, k) * (c - k) ** n for k in range(c + 1))
    return Fraction(total, math.factorial(n) * m**n)


def cell_volume(n: int, m: int, nu: Sequence[int]) -> float:
    return float(cell_volume_exact(n, m, nu))


@dataclass(frozen=True)
class Cell:
    """One piece ``Delta_{n,nu}`` of the degree-``m`` partition."""

    n: int
    m: int
    nu: tuple[int, ...]
    volume_exact: Fraction = field(compare=False)

    @property
    def volume(self) -> float:
        return float(self.volume_exact)

    @property
    def degenerate(self) -> bool:
        return sum(self.nu) == self.m

    @property
    def corner(self) -> np.ndarray:
        """The point ``nu/m``."""
        return np.asarray(self.nu, dtype=float) / self.m


def cell(n: int, m: int, nu: Sequence[int]) -> Cell:
    nu = _check_nu(n, m, nu)
    return Cell(n, m, nu, cell_volume_exact(n, m, nu))


def cells(n: int, m: int) -> list[Cell]:
    return [cell(n, m, nu) for nu in lattice_points(n, m)]


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def graded_rule(order: int = 31):
    """Tanh-sinh rule on (0, 1) with ``order`` nodes.

    Returns ``(s, sc, w)`` where ``sc = 1 - s`` is computed without
    cancellation, so integrands singular at either endpoint (``log(1-s)``,
    ``s^alpha``) can be evaluated at the clustered nodes.
    """
    if order < 3:
        raise DomainError("order must be >= 3")
    half = (order - 1) // 2
    h = (3.0 if order >= 25 else 2.5) / half
    k = np.arange(-half, half + 1) * h
    y = 0.5 * np.pi * np.sinh(k)
    s = 1.0 / (1.0 + np.exp(-2.0 * y))
    sc = 1.0 / (1.0 + np.exp(2.0 * y))
    w = h * 0.25 * np.pi * np.cosh(k) / np.cosh(y) ** 2
    for a in (s, sc, w):
        a.setflags(write=False)
    return s, sc, w


def _region(n: int, b: float, bm1: float, order: int):
    # returns t, 1 - t and weights for {t in [0,1]^n : sum(t) <= b}; bm1 = b - 1
    if n == 0:
        return np.zeros((1, 0)), np.zeros((1, 0)), np.ones(1)
    if b >= n:
        return cube_rule(n, order)
    s, sc, ws = graded_rule(order)
    # panels of the first coordinate: (lo, hi, 1 - hi, (b - 1) - lo)
    panels = []
    lo, lo_gap = 0.0, bm1
    for k in range(n - 1, 0, -1):
        cut = b - k
        if 0.0 < cut < min(1.0, b):
            panels.append((lo, cut, k - bm1, lo_gap))
            lo, lo_gap = cut, float(k - 1)
    if b >= 1.0:
        panels.append((lo, 1.0, 0.0, lo_gap))
    else:
        panels.append((lo, b, -bm1, lo_gap))
    ts, tcs, wts = [], [], []
    for lo, hi, one_minus_hi, gap in panels:
        width = hi - lo
        if width <= 0.0:
            continue
        for si, sci, wi in zip(s, sc, ws):
            off = width * si
            sub_t, sub_c, sub_w = _region(n - 1, b - lo - off, gap - off, order)
            K = sub_t.shape[0]
            bt = np.empty((K, n))
            bc = np.empty((K, n))
            bt[:, 0] = lo + off
            bc[:, 0] = one_minus_hi + width * sci
            bt[:, 1:] = sub_t
            bc[:, 1:] = sub_c
            ts.append(bt)
            tcs.append(bc)
            wts.append(width * wi * sub_w)
    return np.concatenate(ts), np.concatenate(tcs), np.concatenate(wts)


@functools.lru_cache(maxsize=128)
def region_rule(n: int, budget: int, order: int = 31):
    """Nodes for ``{t in [0,1]^n : sum(t) <= budget}``, integer ``budget``.

    Iterated tanh-sinh; the outer intervals are split wherever the inner
    region changes shape, so every panel integrand is smooth inside and
    endpoint singularities are absorbed by the rule.  Returns
    ``(t, 1 - t, w)``.
    """
    if budget <= 0:
        raise DomainError("region budget must be positive")
    t, tc, w = _region(n, float(budget), float(budget) - 1.0, order)
    for a in (t, tc, w):
        a.setflags(write=False)
    return t, tc, w


@functools.lru_cache(maxsize=64)
def cube_rule(n: int, order: int = 31):
    """Tensor tanh-sinh rule on ``[0,1]^n``; returns ``(t, 1 - t, w)``."""
    s, sc, w = graded_rule(order)
    idx = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(s.size)] * n), indexing="ij")], -1)
    t, tc, wt = s[idx], sc[idx], np.prod(w[idx], axis=-1)
    for a in (t, tc, wt):
        a.setflags(write=False)
    return t, tc, wt


def cell_rule(c: Cell, order: int = 31):
    """Rule for a non-degenerate cell in local coordinates ``t = m x - nu``.

    Returns ``(x, t, 1 - t, w)`` with weights already scaled to ``x``-volume.
    """
    if c.degenerate:
        raise DomainError("degenerate cells carry no quadrature rule")
    t, tc, w = region_rule(c.n, c.m - sum(c.nu), order)
    x = (np.asarray(c.nu, dtype=float) + t) / c.m
    return x, t, tc, w / float(c.m) ** c.n


def cell_average(c: Cell, g: Callable[[np.ndarray], np.ndarray], order: int = 31,
                 tol: float = 1e-9) -> float:
    """Average of ``g`` over a cell; point value at ``nu/m`` if degenerate.

    ``g`` maps an ``(K, n)`` array of points to ``K`` values.  The result is
    compared with a rule of ``order + 10`` nodes per direction and
    :class:`AccuracyError` is raised when they disagree by more than
    ``tol * max(1, |avg|)``.
    """
    if c.degenerate:
        return float(np.asarray(g(c.corner[None, :]), dtype=float)[0])
    vol = c.volume
    x, _, _, w = cell_rule(c, order)
    coarse = float(w @ np.asarray(g(x), dtype=float)) / vol
    x, _, _, w = cell_rule(c, order + 10)
    fine = float(w @ np.asarray(g(x), dtype=float)) / vol
    err = abs(fine - coarse)
    if not np.isfinite(fine) or err > tol * max(1.0, abs(fine)):
        raise AccuracyError(f"cell average for nu={c.nu} did not converge", fine, err)
    return fine


@dataclass(frozen=True)
class QuadratureScheme:
    """Deterministic node/weight set over a domain of dimension ``n``."""

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    domain: str
    resolution: int
    order: int

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(self.weights @ np.asarray(g(self.nodes), dtype=float))


def simplex_quadrature(n: int, resolution: int, order: int = 31) -> QuadratureScheme:
    """Composite rule on ``Delta_n`` built from the degree-``resolution`` cells.

    Doubling ``resolution`` halves the cell width.  The weights sum to
    ``1/n!`` up to rounding.
    """
    if resolution < 1:
        raise DomainError("resolution must be >= 1")
    xs, ws = [], []
    for c in cells(n, resolution):
        if c.degenerate:
            continue
        x, _, _, w = cell_rule(c, order)
        xs.append(x)
        ws.append(w)
    return QuadratureScheme(n, np.concatenate(xs), np.concatenate(ws), "simplex", resolution, order)


# --------------------------------------------------------------------------
# the fan of P^n
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectiveFanChart:
    """The compact piece ``C_j`` of the covering of ``P^n``.

    ``j = 0`` is the polydisk ``|z_k| <= 1``; for ``j >= 1`` the chart
    coordinates are ``y_k = z_k / z_j`` (``k != j``) and ``y_j = 1 / z_j``.
    """

    n: int
    index: int

    def to_chart(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.index == 0:
            return z.copy()
        j = self.index - 1
        y = z / z[..., j : j + 1]
        y[..., j] = 1.0 / z[..., j]
        return y

    def contains(self, z: np.ndarray) -> bool:
        y = self.to_chart(z)
        return bool(np.all(np.abs(y) <= 1.0))


def fan_charts(n: int) -> list[ProjectiveFanChart]:
    return [ProjectiveFanChart(n, j) for j in range(n + 1)]


def charts_containing(z: Sequence[complex]) -> list[int]:
    """Indices ``j`` with ``z in C_j`` (``z`` in the affine chart ``x_0 != 0``)."""
    z = np.asarray(z, dtype=complex)
    out = []
    for ch in fan_charts(z.shape[-1]):
        with np.errstate(divide="ignore", invalid="ignore"):
            if ch.index and z[ch.index - 1] == 0:
                continue
            if ch.contains(z):
                out.append(ch.index)
    return out

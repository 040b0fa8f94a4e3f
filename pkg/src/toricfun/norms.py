"""L2 norms of monomials for invariant metrics on O(m).

``<z^nu, z^nu> = int |z^nu|^2 exp(2 m f_h(u)) dvol`` where ``u_k = -log|z_k|``.
Torus invariance reduces every integral to the squared radii ``s_k = |z_k|^2``.

canonical volume
    Sum over the pieces ``C_0 = {|z_k| <= 1}`` and ``C_j = {|z_k| <= |z_j|,
    |z_j| >= 1}``.  In the coordinates ``sigma`` of ``C_j`` (``sigma_j =
    1/|z_j|^2``, ``sigma_k = |z_k/z_j|^2``) the density is Lebesgue on
    ``[0,1]^n`` and the integrand is
    ``prod_{k != j} sigma_k^nu_k * sigma_j^-|nu| * exp(2 m f(u))``.
fubini_study volume
    Density ``n!/(1 + sum s)^(n+1)`` in every affine chart, so the same
    pieces ``C_j`` are used with that extra factor.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import AccuracyError, DomainError
from .metrics import InvariantMetric, PiecewiseLinearPotential, ShiftedPotential
from .simplex import _check_nu, cube_rule, lattice_points

__all__ = [
    "VOLUMES",
    "MonomialNorm",
    "monomial_norm",
    "monomial_norms",
    "monomial_norm_canonical_closed_form",
    "monomial_norm_fs_closed_form",
    "log_l2_volume",
    "norms_to_csv",
    "norms_to_json",
]

VOLUMES = ("canonical", "fubini_study")


@dataclass
class MonomialNorm:
    """One monomial norm with its per-chart split."""

    nu: tuple[int, ...]
    m: int
    metric: str
    volume: str
    value: float
    error: float
    charts: list[float] = field(default_factory=list)

    @property
    def log_value(self) -> float:
        return math.log(self.value)


def monomial_norm_canonical_closed_form(n: int, m: int, nu: Sequence[int]) -> Fraction:
    """Exact norm of ``z^nu`` for the canonical metric and canonical volume."""
    nu = _check_nu(n, m, nu)
    inv = [Fraction(1, 1 + v) for v in nu]
    total = math.prod(inv, start=Fraction(1))
    rest = Fraction(1, 1 + m - sum(nu))
    for j in range(n):
        total += rest * math.prod((inv[k] for k in range(n) if k != j), start=Fraction(1))
    return total


def monomial_norm_fs_closed_form(n: int, m: int, nu: Sequence[int]) -> Fraction:
    """Exact norm of ``z^nu`` for the Fubini-Study metric and volume."""
    nu = _check_nu(n, m, nu)
    num = math.prod(math.factorial(v) for v in nu) * math.factorial(m - sum(nu)) * math.factorial(n)
    return Fraction(num, math.factorial(m + n))


def _kinks(h: InvariantMetric):
    # u-values of the breakpoints of a one-variable piecewise-linear potential
    pot, n = h.potential, h.n
    if isinstance(pot, ShiftedPotential):
        pot = pot.base
    if n != 1 or not isinstance(pot, PiecewiseLinearPotential):
        return None
    a, c = pot.a[:, 0], pot.c
    # lower envelope of the lines a u + c, traced through increasing u
    order = np.lexsort((c, -a))
    lines = []
    for ai, ci in zip(a[order], c[order]):
        if lines and lines[-1][0] == ai:
            continue
        while len(lines) >= 2:
            (a1, c1), (a2, c2) = lines[-2], lines[-1]
            # line 2 is useless if line (ai, ci) overtakes line 1 before line 2 does
            if (c2 - c1) * (a1 - ai) >= (ci - c1) * (a1 - a2):
                lines.pop()
            else:
                break
        lines.append((ai, ci))
    return np.array([(c2 - c1) / (a1 - a2) for (a1, c1), (a2, c2) in zip(lines, lines[1:])])


_TAU_MAX = 38.0


@functools.lru_cache(maxsize=64)
def _gl(q: int):
    return np.polynomial.legendre.leggauss(q)


def _log_panels(cuts: tuple[float, ...], q: int):
    """Composite Gauss-Legendre rule on ``tau`` in ``[0, T]``, unit panels."""
    x, w = _gl(q)
    edges = np.union1d(np.arange(0.0, _TAU_MAX + 0.5), [c for c in cuts if 0.0 < c < _TAU_MAX])
    lo, hi = edges[:-1, None], edges[1:, None]
    tau = (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel()
    wt = (0.5 * (hi - lo) * w).ravel()
    return tau, wt


def _chart_rule(n: int, order: int, cuts: tuple[float, ...] = ()):
    """``(log sigma, weights)`` on ``(0,1]^n`` for chart integrands.

    For ``n <= 2`` the rule works in ``tau = -log sigma`` (Jacobian folded in
    the weights, nodes with ``sum tau > T`` dropped since the chart integrand
    is bounded by ``exp(-sum tau)`` there); otherwise tensor tanh-sinh.
    """
    if n > 2:
        t, _, w = cube_rule(n, order)
        return np.log(t), w
    tau, wt = _log_panels(cuts, (order + 1) // 2)
    wt = wt * np.exp(-tau)
    if n == 1:
        return -tau[:, None], wt
    T1, T2 = np.meshgrid(tau, tau, indexing="ij")
    W = np.outer(wt, wt)
    keep = (T1 + T2).ravel() <= _TAU_MAX
    return -np.stack([T1.ravel()[keep], T2.ravel()[keep]], -1), W.ravel()[keep]


def _chart_nodes(h: InvariantMetric, j: int, order: int):
    """``(log sigma, u, w)`` for chart ``j`` of the canonical covering."""
    n = h.n
    kinks = _kinks(h)
    cuts: tuple[float, ...] = ()
    if kinks is not None:
        # chart 0: tau = 2u; chart 1: tau = -2u
        cuts = tuple(float(v) for v in (2.0 * kinks if j == 0 else -2.0 * kinks))
    lsig, w = _chart_rule(n, order, cuts)
    if j == 0:
        u = -0.5 * lsig
    else:
        u = 0.5 * (lsig[:, j - 1 : j] - lsig)
        u[:, j - 1] = 0.5 * lsig[:, j - 1]
    return lsig, u, w


def _exponents(nus: np.ndarray, j: int) -> np.ndarray:
    E = nus.astype(float).copy()
    if j > 0:
        E[:, j - 1] = -nus.sum(axis=1)
    return E


def _table(h, m, nus, order, volume):
    n = h.n
    charts = []
    for j in range(n + 1):
        lsig, u, w = _chart_nodes(h, j, order)
        logf = 2.0 * m * h.f(u)
        if volume == "fubini_study":
            # the density n!/(1 + sum sigma)^(n+1) is the same in every affine chart
            logf = logf + math.log(math.factorial(n)) - (n + 1) * np.log1p(np.exp(lsig).sum(axis=1))
        logs = lsig @ _exponents(nus, j).T + logf[:, None]
        charts.append(w @ np.exp(logs))
    return np.stack(charts, axis=1)


def monomial_norms(h: InvariantMetric, m: int, volume: str = "canonical", order: int = 31,
                   nus: Sequence[Sequence[int]] | None = None, tol: float = 1e-7) -> list[MonomialNorm]:
    """Norms of every ``z^nu``, ``nu`` in ``P_m`` (or the given list).

    The error is the change against a rule with ten more nodes per direction.

    Raises:
        AccuracyError: a relative error estimate exceeds ``tol``.
    """
    if volume not in VOLUMES:
        raise DomainError(f"unknown volume {volume!r}; choose from {VOLUMES}")
    if m < 0:
        raise DomainError("m must be >= 0")
    n = h.n
    nus = lattice_points(n, m) if nus is None else [_check_nu(n, m, nu) for nu in nus]
    arr = np.asarray(nus, dtype=int).reshape(len(nus), n)
    coarse = _table(h, m, arr, order, volume)
    fine = _table(h, m, arr, order + 10, volume)
    out = []
    for i, nu in enumerate(nus):
        value = float(fine[i].sum())
        err = abs(value - float(coarse[i].sum()))
        if not (value > 0 and np.isfinite(value)) or err > tol * value:
            raise AccuracyError(f"norm of z^{tuple(nu)} did not converge", value, err)
        out.append(MonomialNorm(tuple(int(v) for v in nu), m, h.digest(), volume, value, err,
                                [float(v) for v in fine[i]]))
    return out


def monomial_norm(h: InvariantMetric, m: int, nu: Sequence[int], volume: str = "canonical",
                  order: int = 31, tol: float = 1e-7) -> MonomialNorm:
    """Norm of a single monomial; see :func:`monomial_norms`."""
    return monomial_norms(h, m, volume, order, [nu], tol)[0]


def log_l2_volume(h: InvariantMetric, m: int, volume: str = "canonical", order: int = 31,
                  nus: Sequence[Sequence[int]] | None = None) -> float:
    """``sum_nu log <z^nu, z^nu>``, the log Gram determinant in the monomial basis."""
    return float(sum(math.log(r.value) for r in monomial_norms(h, m, volume, order, nus)))


def norms_to_csv(rows: Sequence[MonomialNorm]) -> str:
    """CSV with columns ``nu, chart_0..chart_n, value, err``."""
    if not rows:
        return ""
    n = len(rows[0].nu)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["nu"] + [f"chart_{j}" for j in range(n + 1)] + ["value", "err"])
    for r in rows:
        charts = list(r.charts) + [""] * (n + 1 - len(r.charts))
        writer.writerow([" ".join(map(str, r.nu))] + [repr(c) if c != "" else "" for c in charts]
                        + [repr(r.value), repr(r.error)])
    return buf.getvalue()


def norms_to_json(rows: Sequence[MonomialNorm]) -> str:
    return json.dumps([asdict(r) for r in rows], sort_keys=True)

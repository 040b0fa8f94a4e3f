"""The functional V, its bound c_m, per-monomial margins and Berman's functionals.

With ``N_m = C(n+m, n)`` monomials of degree ``<= m``:

* ``V(h, m) = sum_nu log <z^nu, z^nu> + 2 m^(n+1) int fcheck_h``
* ``c_m = -sum_nu avg log R_nu + N_m log(n+1)`` with
  ``R_nu(x) = (1 - |nu| + m|x|) prod_k (1 + nu_k - m x_k)``
* per-monomial margin ``[-2m avg fcheck - avg log R_nu + log(n+1)] - log <z^nu, z^nu>``

Averages run over the cell ``Delta_{n,nu}``; on a degenerate cell (``|nu| = m``)
they are values at ``nu/m``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .errors import AccuracyError, DomainError
from .fenchel import FenchelGrid, integrate_transform, transform
from .metrics import InvariantMetric, SumPotential, canonical, fubini_study, is_dominated
from .norms import MonomialNorm, monomial_norms
from .simplex import Cell, _check_nu, cell, cells, lattice_points

__all__ = [
    "RnuPolynomial",
    "FunctionalReport",
    "FenchelData",
    "fenchel_data",
    "bott_chern_integral",
    "compute_V",
    "compute_c_m",
    "nu_margin",
    "nu_margins",
    "verify_main_bound",
    "energy_E",
    "berman_L",
    "berman_F",
    "exponent_set",
    "stirling_ok",
    "stirling_threshold",
    "compute_t0",
    "comparison_bound_check",
    "MixedQ",
    "mixed_q",
    "scaling_coefficient",
]


@dataclass(frozen=True)
class RnuPolynomial:
    """``R_nu(x) = (1 - |nu| + m|x|) prod_k (1 + nu_k - m x_k)``."""

    n: int
    m: int
    nu: tuple[int, ...]

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = self.m * x - np.asarray(self.nu, dtype=float)
        return (1.0 + t.sum(axis=1)) * np.prod(1.0 - t, axis=1)

    @staticmethod
    def log_local(t: np.ndarray, tc: np.ndarray) -> np.ndarray:
        """``log R`` from local coordinates ``t = m x - nu`` and ``tc = 1 - t``."""
        return np.log1p(t.sum(axis=1)) + np.log(tc).sum(axis=1)


@dataclass
class FunctionalReport:
    """Result of one functional evaluation or inequality check.

    ``margin`` is ``bound - value`` when a bound is present.
    """

    name: str
    inputs: dict[str, Any]
    value: float
    bound: float | None = None
    margin: float | None = None
    breakdown: dict[str, Any] = field(default_factory=dict)
    quadrature: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    status: str = "ok"

    def __post_init__(self):
        if self.bound is not None and self.margin is None:
            self.margin = self.bound - self.value

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _inputs(h: InvariantMetric, m: int, **extra) -> dict[str, Any]:
    d = {"metric": h.digest(), "kind": h.kind, "n": h.n, "m": m}
    d.update(extra)
    return d


# --------------------------------------------------------------------------
# Fenchel side
# --------------------------------------------------------------------------

@dataclass
class FenchelData:
    """``int fcheck``, its per-cell pieces at degree ``m`` and corner values."""

    integral: float
    error: float
    m: int
    cell_integrals: dict[tuple[int, ...], float]
    corner_values: dict[tuple[int, ...], float]

    def average(self, c: Cell) -> float:
        if c.degenerate:
            return self.corner_values[c.nu]
        return self.cell_integrals[c.nu] / c.volume


def fenchel_data(h: InvariantMetric, m: int, order: int = 31,
                 grid: FenchelGrid | None = None) -> FenchelData:
    """Integrate ``fcheck_h`` over the degree-``m`` cells.

    A supplied grid is reused when it was integrated at degree ``m``.
    """
    if grid is not None and grid.degree == m and grid.integral is not None and grid.cell_integrals:
        total, err, per = grid.integral, grid.integral_error or 0.0, grid.cell_integrals
    else:
        total, err, per = integrate_transform(h, m, order)
    if not per:
        # closed-form path (n = 1 piecewise linear): split per cell by quadrature
        _, _, per = _cellwise(h, m, order)
    corners = {c.nu: transform(h, c.corner) for c in cells(h.n, m) if c.degenerate}
    return FenchelData(total, err, m, per, corners)


def _cellwise(h, m, order):
    from .fenchel import transform_points
    from .simplex import cell_rule

    per = {}
    for c in cells(h.n, m):
        if c.degenerate:
            continue
        x, _, _, w = cell_rule(c, order)
        vals, _ = transform_points(h, x)
        per[c.nu] = float(w @ vals)
    return sum(per.values()), 0.0, per


def bott_chern_integral(h: InvariantMetric, m: int, fenchel: FenchelData | FenchelGrid | None = None,
                        order: int = 31) -> float:
    """``m^(n+1) int_{Delta_n} fcheck_h``."""
    if isinstance(fenchel, FenchelGrid):
        if fenchel.integral is None:
            raise DomainError("grid carries no integral")
        integral = fenchel.integral
    elif isinstance(fenchel, FenchelData):
        integral = fenchel.integral
    else:
        integral = integrate_transform(h, max(1, m), order)[0]
    return float(m ** (h.n + 1) * integral)


# --------------------------------------------------------------------------
# V, c_m and the per-monomial inequality
# --------------------------------------------------------------------------

def compute_V(h: InvariantMetric, m: int, order: int = 31, fenchel: FenchelData | None = None,
              norms: Sequence[MonomialNorm] | None = None) -> FunctionalReport:
    """``V(h, m) = sum_nu log <z^nu, z^nu> + 2 m^(n+1) int fcheck_h``."""
    if m < 1:
        raise DomainError("m must be >= 1")
    fd = fenchel or fenchel_data(h, m, order)
    rows = norms if norms is not None else monomial_norms(h, m, "canonical", order)
    log_vol = float(sum(math.log(r.value) for r in rows))
    bc = bott_chern_integral(h, m, fd)
    err = sum(r.error / r.value for r in rows) + 2 * m ** (h.n + 1) * fd.error
    return FunctionalReport(
        "V", _inputs(h, m, volume="canonical"), log_vol + 2.0 * bc,
        breakdown={"log_l2_volume": log_vol, "bott_chern": bc, "integral": fd.integral, "error": err},
        quadrature={"order": order, "degree": fd.m},
    )


def _log_r_average(c: Cell, order: int) -> float:
    """Average of ``log R_nu`` on a cell, using the exact complements ``1 - t``."""
    if c.degenerate:
        return 0.0
    from .simplex import cell_rule

    vals = []
    for o in (order, order + 10):
        _, t, tc, w = cell_rule(c, o)
        vals.append(float(w @ RnuPolynomial.log_local(t, tc)) / c.volume)
    if abs(vals[1] - vals[0]) > 1e-9:
        raise AccuracyError(f"average of log R for nu={c.nu} did not converge", vals[1], abs(vals[1] - vals[0]))
    return vals[1]


@functools.lru_cache(maxsize=256)
def _log_r_table(n: int, m: int, order: int) -> dict[tuple[int, ...], float]:
    return {c.nu: _log_r_average(c, order) for c in cells(n, m)}


def compute_c_m(n: int, m: int, order: int = 31) -> FunctionalReport:
    """``c_m = -sum_nu avg log R_nu + C(n+m, n) log(n+1)``.

    Degenerate cells contribute ``log R_nu(nu/m) = 0``; their count is listed
    in the breakdown.
    """
    if n < 1 or m < 1:
        raise DomainError("need n >= 1 and m >= 1")
    table = _log_r_table(n, m, order)
    N = math.comb(n + m, n)
    value = -sum(table.values()) + N * math.log(n + 1)
    degenerate = [nu for nu in table if sum(nu) == m]
    return FunctionalReport(
        "c_m", {"n": n, "m": m}, value,
        breakdown={"log_r_averages": {" ".join(map(str, k)): v for k, v in table.items()},
                   "degenerate_cells": len(degenerate), "degenerate_contribution": 0.0,
                   "log_term": N * math.log(n + 1)},
        quadrature={"order": order},
    )


def _nu_margin_value(n, m, nu, fd: FenchelData, norm: MonomialNorm, order: int):
    c = cell(n, m, nu)
    avg_f = fd.average(c)
    avg_r = _log_r_table(n, m, order)[c.nu]
    rhs = -2.0 * m * avg_f - avg_r + math.log(n + 1)
    return rhs - math.log(norm.value), avg_f, avg_r


def nu_margins(h: InvariantMetric, m: int, order: int = 31, fenchel: FenchelData | None = None,
               norms: Sequence[MonomialNorm] | None = None) -> dict[tuple[int, ...], float]:
    """Per-monomial margins for every ``nu`` in ``P_m``."""
    fd = fenchel or fenchel_data(h, m, order)
    rows = norms if norms is not None else monomial_norms(h, m, "canonical", order)
    return {r.nu: _nu_margin_value(h.n, m, r.nu, fd, r, order)[0] for r in rows}


def nu_margin(h: InvariantMetric, m: int, nu: Sequence[int], order: int = 31,
              fenchel: FenchelData | None = None) -> FunctionalReport:
    """``[-2m avg fcheck - avg log R_nu + log(n+1)] - log <z^nu, z^nu>``."""
    nu = _check_nu(h.n, m, nu)
    fd = fenchel or fenchel_data(h, m, order)
    norm = monomial_norms(h, m, "canonical", order, [nu])[0]
    margin, avg_f, avg_r = _nu_margin_value(h.n, m, nu, fd, norm, order)
    log_norm = math.log(norm.value)
    return FunctionalReport(
        "nu_margin", _inputs(h, m, nu=list(nu)), log_norm, bound=log_norm + margin, margin=margin,
        breakdown={"avg_fcheck": avg_f, "avg_log_R": avg_r, "log_norm": log_norm,
                   "degenerate": sum(nu) == m},
        quadrature={"order": order},
    )


def verify_main_bound(h: InvariantMetric, m: int, order: int = 31, check_hypothesis: bool = True,
                      seed: int | None = None) -> FunctionalReport:
    """``c_m - V(h, m)`` together with every per-monomial margin."""
    fd = fenchel_data(h, m, order)
    rows = monomial_norms(h, m, "canonical", order)
    V = compute_V(h, m, order, fd, rows)
    cm = compute_c_m(h.n, m, order)
    margins = nu_margins(h, m, order, fd, rows)
    status = "ok"
    if check_hypothesis:
        dominated, witness = is_dominated(h, canonical(h.n))
        if not dominated:
            status = "hypothesis-failed"
    else:
        status = "hypothesis-unchecked"
    worst = min(margins, key=margins.get)
    return FunctionalReport(
        "main_bound", _inputs(h, m), V.value, bound=cm.value,
        breakdown={"V": V.breakdown, "c_m": cm.value,
                   "nu_margins": {" ".join(map(str, k)): v for k, v in margins.items()},
                   "min_nu_margin": margins[worst], "argmin_nu": list(worst)},
        quadrature={"order": order, "degree": m}, seed=seed, status=status,
    )


def scaling_coefficient(n: int, m: int) -> float:
    """Coefficient of ``log t`` in ``V(t h) - V(h)`` as stated for the scaling law."""
    return math.comb(n + m, n) - 2.0 * m ** (n + 1) / math.factorial(n)


# --------------------------------------------------------------------------
# Berman functionals
# --------------------------------------------------------------------------

def energy_E(h: InvariantMetric, h0: InvariantMetric, order: int = 31, degree: int = 4,
             integrals: tuple[float, float] | None = None) -> float:
    """``(1/V) [int fcheck_h - int fcheck_h0]`` with ``V = 1/n!``."""
    if h.n != h0.n:
        raise DomainError("metrics live on different dimensions")
    a, b = integrals if integrals is not None else (
        integrate_transform(h, degree, order)[0], integrate_transform(h0, degree, order)[0])
    return math.factorial(h.n) * (a - b)


def exponent_set(n: int, m: int, exponents: str = "displayed") -> list[tuple[int, ...]]:
    """``P_{m-2}`` (``displayed``) or ``P_{m-n-1}`` (``geometric``)."""
    if exponents == "displayed":
        k = m - 2
    elif exponents == "geometric":
        k = m - n - 1
    else:
        raise DomainError(f"unknown exponent set {exponents!r}")
    if k < 0:
        raise DomainError(f"empty exponent set for n={n}, m={m} ({exponents})")
    return lattice_points(n, k)


def berman_L(h: InvariantMetric, m: int, order: int = 31, exponents: str = "displayed",
             volume: str = "fubini_study") -> float:
    """``-(1/N) sum_{nu in S} log <z^nu, z^nu>`` with weight ``h^m``."""
    S = exponent_set(h.n, m, exponents)
    rows = monomial_norms(h, m, volume, order, S)
    return -float(sum(math.log(r.value) for r in rows)) / len(S)


def berman_F(h: InvariantMetric, m: int, order: int = 31, exponents: str = "displayed",
             volume: str = "fubini_study", energy_factor: float = 1.0, degree: int = 4,
             fs_integral: float | None = None) -> FunctionalReport:
    """``(1/N) sum_S log <z^nu, z^nu> + (n!/m^n) m^(n+1) [int fcheck_h - int fcheck_FS]``.

    ``energy_factor = 2`` gives the variant in which the two scaling
    contributions cancel.
    """
    n = h.n
    L = berman_L(h, m, order, exponents, volume)
    ih, eh, _ = integrate_transform(h, degree, order)
    ifs = fs_integral if fs_integral is not None else integrate_transform(fubini_study(n), degree, order)[0]
    energy = energy_factor * math.factorial(n) / m**n * m ** (n + 1) * (ih - ifs)
    return FunctionalReport(
        "berman_F", _inputs(h, m, exponents=exponents, volume=volume, energy_factor=energy_factor),
        -L + energy, breakdown={"log_gram": -L, "energy": energy, "integral": ih, "fs_integral": ifs},
        quadrature={"order": order, "degree": degree},
    )


def stirling_ok(n: int, m: int) -> bool:
    """``n! C(n+m-2, n) m^(n+1)/m^n <= 2 (m-2)^(n+1)`` in exact arithmetic."""
    lhs = Fraction(math.factorial(n) * math.comb(n + m - 2, n) * m ** (n + 1), m**n)
    return m >= 2 and lhs <= 2 * (m - 2) ** (n + 1)


def stirling_threshold(n: int, start: int = 3, stop: int = 10_000) -> int:
    """Smallest ``m >= start`` passing :func:`stirling_ok`."""
    for m in range(start, stop):
        if stirling_ok(n, m):
            return m
    raise DomainError("no threshold found in range")


def compute_t0(n: int, exponents: str = "displayed", radii: int = 2001):
    """``sup`` of the Fubini-Study over canonical density ratio times the weight shift.

    On a radial grid ``|z_k| = r`` (the ratio only depends on the radii and the
    extremes sit on such rays) the function
    ``n! max(1, r^2)^(n+1) e^(2k f_inf) / (1 + n r^2)^(n+1)`` with ``k`` the
    degree shift of the exponent set is maximised.  Returns ``(t0, grid)``.
    """
    k = 2 if exponents == "displayed" else n + 1
    r = np.concatenate([np.linspace(0.0, 4.0, radii), np.geomspace(4.0, 1e4, radii)])
    big = np.maximum(1.0, r**2)
    ratio = math.factorial(n) * big ** (n + 1) * big ** (-k) / (1.0 + n * r**2) ** (n + 1)
    # single-axis rays |z_1| = r, others 0
    ratio1 = math.factorial(n) * big ** (n + 1) * big ** (-k) / (1.0 + r**2) ** (n + 1)
    t0 = float(max(ratio.max(), ratio1.max()))
    return t0, {"r_min": 0.0, "r_max": 1e4, "points": int(2 * radii)}


def comparison_bound_check(h: InvariantMetric, m: int, order: int = 31, exponents: str = "displayed",
                           volume: str = "fubini_study", t0: float | None = None,
                           seed: int | None = None, fs_integral: float | None = None) -> FunctionalReport:
    """``F(h) <= V(h, m-2)/C(n+m-2, n) + log t0``; margin is ``RHS - F``."""
    n = h.n
    ok = stirling_ok(n, m)
    if t0 is None:
        t0 = 1.0 if n == 1 else compute_t0(n, exponents)[0]
    F = berman_F(h, m, order, exponents, volume, fs_integral=fs_integral)
    V = compute_V(h, m - 2, order)
    rhs = V.value / math.comb(n + m - 2, n) + math.log(t0)
    return FunctionalReport(
        "comparison", _inputs(h, m, exponents=exponents, t0=t0), F.value, bound=rhs,
        breakdown={"F": F.breakdown, "V_m_minus_2": V.value, "stirling_ok": ok},
        quadrature={"order": order}, seed=seed, status="ok" if ok else "below-threshold",
    )


# --------------------------------------------------------------------------
# mixed coefficients
# --------------------------------------------------------------------------

@dataclass
class MixedQ:
    """``q = int fcheck_h`` and ``q_0..q_n`` with ``G(M) = sum q_k M^k/k!``."""

    q: float
    coefficients: list[float]
    G: list[float]
    holdout_M: int
    holdout_direct: float
    holdout_interpolated: float

    @property
    def holdout_rel_error(self) -> float:
        d = self.holdout_direct
        return abs(self.holdout_interpolated - d) / max(abs(d), 1e-300)

    def bound_margins(self, n: int) -> list[float]:
        """``q - q_0`` then ``j! 2^(n+1) q - q_j`` for ``j >= 1``."""
        out = [self.q - self.coefficients[0]]
        for j, qj in enumerate(self.coefficients[1:], start=1):
            out.append(math.factorial(j) * 2 ** (n + 1) * self.q - qj)
        return out


def _combo(f1, f0, M):
    if M == 0:
        return f1.potential
    return SumPotential([(1.0 / (1 + M), f1.potential), (M / (1.0 + M), f0.potential)])


def _G(h, h0, M, degree, order):
    n = h.n
    hinf = canonical(n)
    a = integrate_transform(_combo(h, h0, M), degree, order)[0]
    b = integrate_transform(_combo(hinf, h0, M), degree, order)[0]
    return (1 + M) ** (n + 1) * (a - b)


def mixed_q(h: InvariantMetric, h0: InvariantMetric, degree: int = 2, order: int = 31) -> MixedQ:
    """Coefficients of ``G(M) = (1+M)^(n+1) [int ((f_h + M f_0)/(1+M))check - (same for f_inf)]``.

    ``G`` is sampled at ``M = 0..n`` and the Vandermonde system is solved in
    exact rationals on the floating values; ``M = n+1`` is kept as a
    held-out check.
    """
    n = h.n
    G = [_G(h, h0, M, degree, order) for M in range(n + 2)]
    V = [[Fraction(M) ** k for k in range(n + 1)] for M in range(n + 1)]
    rhs = [Fraction(g) for g in G[: n + 1]]
    sol = _solve_exact(V, rhs)
    coeffs = [float(s * math.factorial(k)) for k, s in enumerate(sol)]
    interp = float(sum(s * Fraction(n + 1) ** k for k, s in enumerate(sol)))
    q = integrate_transform(h, degree, order)[0]
    return MixedQ(q, coeffs, G, n + 1, G[n + 1], interp)


def _solve_exact(A, b):
    n = len(b)
    M = [row[:] + [bb] for row, bb in zip(A, b)]
    for i in range(n):
        p = next(r for r in range(i, n) if M[r][i] != 0)
        M[i], M[p] = M[p], M[i]
        for r in range(n):
            if r != i and M[r][i] != 0:
                f = M[r][i] / M[i][i]
                M[r] = [x - f * y for x, y in zip(M[r], M[i])]
    return [M[i][n] / M[i][i] for i in range(n)]

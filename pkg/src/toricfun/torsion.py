"""Todd coefficients, the bound polynomial ``B(m)`` and the threshold ``m0``.

``Td(x) = x/(1 - e^-x) = 1 + b_1 x + b_2 x^2 + ...`` and

    B(m) = -m^(n+1) + sum_{j=1}^n 2^(n+1) |b_(n+1-j)| m^j.

All arithmetic here is in exact rationals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError
from .functionals import FunctionalReport, MixedQ, mixed_q
from .metrics import InvariantMetric, fubini_study, is_dominated

__all__ = [
    "ToddCoefficients",
    "BoundPolynomial",
    "M0Certificate",
    "todd_coefficients",
    "bound_polynomial",
    "find_m0",
    "torsion_variation_bound",
    "frac_str",
]


def frac_str(v: Fraction) -> str:
    """``"p/q"`` (or ``"p"``) for JSON."""
    return str(Fraction(v))


@dataclass(frozen=True)
class ToddCoefficients:
    """``b_1..b_K`` of the Todd series; ``b[0]`` is the constant term 1."""

    b: tuple[Fraction, ...]

    def __getitem__(self, j: int) -> Fraction:
        return self.b[j]

    @property
    def K(self) -> int:
        return len(self.b) - 1

    def to_dict(self):
        return {f"b_{j}": frac_str(v) for j, v in enumerate(self.b) if j >= 1}


def todd_coefficients(K: int) -> ToddCoefficients:
    """Invert ``(1 - e^-x)/x = sum_k (-1)^k x^k/(k+1)!`` as a power series."""
    if K < 1:
        raise DomainError("K must be >= 1")
    a = [Fraction((-1) ** k, math.factorial(k + 1)) for k in range(K + 1)]
    b = [Fraction(1)]
    for k in range(1, K + 1):
        b.append(-sum(a[i] * b[k - i] for i in range(1, k + 1)))
    return ToddCoefficients(tuple(b))


@dataclass(frozen=True)
class BoundPolynomial:
    """``B(m)`` with exact coefficients, ``coeffs[j]`` multiplying ``m^j``."""

    n: int
    coeffs: tuple[Fraction, ...]

    def __call__(self, m) -> Fraction:
        return sum((c * Fraction(m) ** j for j, c in enumerate(self.coeffs)), Fraction(0))

    def cauchy_bound(self) -> Fraction:
        """Every real root has modulus below ``1 + max |c_j / c_lead|``."""
        lead = self.coeffs[-1]
        return 1 + max(abs(c / lead) for c in self.coeffs[:-1])

    def to_dict(self):
        return {"n": self.n, "coefficients": [frac_str(c) for c in self.coeffs]}


def bound_polynomial(n: int) -> BoundPolynomial:
    if n < 1:
        raise DomainError("n must be >= 1")
    b = todd_coefficients(n)
    coeffs = [Fraction(0)] * (n + 2)
    coeffs[n + 1] = Fraction(-1)
    for j in range(1, n + 1):
        coeffs[j] = 2 ** (n + 1) * abs(b[n + 1 - j])
    return BoundPolynomial(n, tuple(coeffs))


@dataclass(frozen=True)
class M0Certificate:
    """Why ``m0`` is the least integer with ``B(m) <= 0`` for all ``m >= m0``."""

    m0: int
    root_bound: Fraction
    checked_upto: int
    value_at_m0: Fraction
    value_before: Fraction | None

    def to_dict(self):
        return {"m0": self.m0, "root_bound": frac_str(self.root_bound), "checked_upto": self.checked_upto,
                "B(m0)": frac_str(self.value_at_m0),
                "B(m0-1)": None if self.value_before is None else frac_str(self.value_before)}


def find_m0(n: int) -> tuple[int, M0Certificate]:
    """Least ``m0 >= 1`` with ``B(m) <= 0`` for every integer ``m >= m0``.

    Beyond the Cauchy root bound ``B`` has the sign of its leading
    coefficient (negative), so checking the integers up to that bound
    suffices.
    """
    B = bound_polynomial(n)
    R = B.cauchy_bound()
    top = math.ceil(R)
    m0 = 1
    for m in range(1, top + 1):
        if B(m) > 0:
            m0 = m + 1
    before = B(m0 - 1) if m0 > 1 else None
    return m0, M0Certificate(m0, R, top, B(m0), before)


def torsion_variation_bound(h: InvariantMetric, m: int, q: MixedQ | None = None,
                            pairing: str = "factorial", degree: int = 2) -> FunctionalReport:
    """Computable part of the torsion-variation bound.

    ``Delta = -m^(n+1) q + sum_j b_j (q_j/j!) m^(n+1-j)`` (``pairing="literal"``
    drops the ``1/j!``) and the relaxed bound ``B(m) q``.  The remaining
    constant ``c'_m`` is carried as a symbol.
    """
    if pairing not in ("factorial", "literal"):
        raise DomainError(f"unknown pairing {pairing!r}")
    n = h.n
    h0 = fubini_study(n)
    dominated, _ = is_dominated(h, h0)
    q = q or mixed_q(h, h0, degree)
    b = todd_coefficients(n)
    delta = -(m ** (n + 1)) * q.q
    for j in range(1, n + 1):
        qj = q.coefficients[j] / (math.factorial(j) if pairing == "factorial" else 1)
        delta += float(b[j]) * qj * m ** (n + 1 - j)
    B = bound_polynomial(n)
    relaxed = float(B(m)) * q.q
    m0, cert = find_m0(n)
    return FunctionalReport(
        "torsion_variation", {"metric": h.digest(), "n": n, "m": m, "pairing": pairing}, delta,
        bound=relaxed,
        breakdown={"q": q.q, "q_k": q.coefficients, "B(m)": frac_str(B(m)), "m0": m0,
                   "regime": "m >= m0" if m >= m0 else "m < m0", "certificate": cert.to_dict(),
                   "upper_bound_of_minus_T": "c'_m + Delta", "holdout_rel_error": q.holdout_rel_error},
        status="ok" if dominated else "hypothesis-failed",
    )

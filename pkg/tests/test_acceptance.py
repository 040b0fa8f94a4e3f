"""Acceptance criteria, one test and one verdict line each.

Tolerances are fixed here and never loosened to make a criterion pass.
"""
import math

import numpy as np
import pytest

from toricfun.fenchel import integrate_transform, transform_points
from toricfun.functionals import (
    berman_F,
    comparison_bound_check,
    compute_c_m,
    compute_V,
    fenchel_data,
    mixed_q,
    scaling_coefficient,
    stirling_threshold,
    verify_main_bound,
)
from toricfun.metrics import (
    canonical,
    fubini_study,
    is_dominated,
    make_rng,
    project,
    random_admissible,
    random_nonconcave,
    scale,
)
from toricfun.norms import monomial_norm_canonical_closed_form, monomial_norms
from toricfun.reporting import SUITES, ExperimentConfig, margins_dat, report_json, run_suite, summary_csv
from toricfun.simplex import cell, lattice_points
from toricfun.torsion import find_m0, todd_coefficients, torsion_variation_bound


def random_scale(seed: int) -> float:
    return float(np.exp(make_rng(10_000 + seed).uniform(-2.0, 2.0)))


def entropy(x):
    full = np.concatenate([x, 1 - x.sum(axis=1, keepdims=True)], axis=1)
    safe = np.where(full > 0, full, 1.0)
    return -0.5 * np.where(full > 0, full * np.log(safe), 0.0).sum(axis=1)


def test_c01_canonical_norm_oracle(verdict):
    worst = 0.0
    for n in (1, 2, 3):
        for m in range(0, 7):
            for r in monomial_norms(canonical(n), m):
                exact = float(monomial_norm_canonical_closed_form(n, m, r.nu))
                worst = max(worst, abs(r.value - exact) / exact)
    assert verdict(1, worst <= 1e-6, f"max rel err {worst:.2e} (tol 1e-6), n<=3, m<=6")


def test_c02_fenchel_zero_law(verdict):
    worst = 0.0
    for n in (1, 2, 3):
        for M in (8, 16, 32, 64):
            x = np.asarray(lattice_points(n, M), dtype=float) / M
            vals, _ = transform_points(canonical(n).potential, x)
            worst = max(worst, float(np.abs(vals).max()))
    assert verdict(2, worst <= 1e-8, f"max |fcheck_inf| {worst:.2e} (tol 1e-8), M<=64")


def test_c03_fs_transform(verdict):
    worst = 0.0
    for n in (1, 2):
        x = np.asarray(lattice_points(n, 64), dtype=float) / 64
        vals, _ = transform_points(fubini_study(n).potential, x)
        worst = max(worst, float(np.abs(vals - entropy(x)).max()))
    integral = integrate_transform(fubini_study(1).potential, 4)[0]
    ok = worst <= 1e-6 and abs(integral - 0.25) <= 1e-6
    assert verdict(3, ok, f"entropy err {worst:.2e} (tol 1e-6), int {integral!r} (0.25 +- 1e-6)")


def test_c04_c_m_oracle(verdict):
    c1, c2 = compute_c_m(1, 1).value, compute_c_m(1, 2).value
    e1, e2 = abs(c1 - 2.0), abs(c2 - (4 - math.log(2)))
    assert verdict(4, max(e1, e2) <= 1e-6, f"|c_1-2| {e1:.2e}, |c_2-(4-ln2)| {e2:.2e} (tol 1e-6)")


def test_c05_V_oracle(verdict):
    v1, v2 = compute_V(canonical(1), 1).value, compute_V(canonical(1), 2).value
    e1, e2 = abs(v1 - 2 * math.log(1.5)), abs(v2 - 2 * math.log(4 / 3))
    below = v1 <= compute_c_m(1, 1).value and v2 <= compute_c_m(1, 2).value
    ok = max(e1, e2) <= 1e-6 and below
    assert verdict(5, ok, f"errs {e1:.2e}, {e2:.2e} (tol 1e-6), V <= c_m: {below}")


def test_c06_scaling_law(verdict):
    worst, where, derived = 0.0, None, 0.0
    for s in range(100):
        n, m, t = 1 + s % 2, 1 + (s // 2) % 4, random_scale(s)
        h = random_admissible(s, n)
        d = compute_V(scale(h, t), m).value - compute_V(h, m).value
        dev = abs(d - scaling_coefficient(n, m) * math.log(t))
        if dev > worst:
            worst, where = dev, (s, n, m)
        # for comparison only: the law implied by the definitions
        true = m * math.comb(n + m, n) - m ** (n + 1) / math.factorial(n)
        derived = max(derived, abs(d - true * math.log(t)))
    detail = (f"max deviation {worst:.3e} (tol 1e-8) at seed,n,m={where}; "
              f"vs m*C(n+m,n) - m^(n+1)/n!: {derived:.1e}")
    assert verdict(6, worst <= 1e-8, detail)


def test_c07_main_bound(verdict):
    count, worst_bound, worst_nu = 0, math.inf, math.inf
    for s in range(200):
        n, m = 1 + s % 2, 2 + (s // 2) % 4
        r = verify_main_bound(random_admissible(s, n), m, seed=s)
        assert r.status == "ok"
        count += 1
        worst_bound = min(worst_bound, r.margin)
        worst_nu = min(worst_nu, r.breakdown["min_nu_margin"])
    ok = count >= 200 and worst_bound >= -1e-9 and worst_nu >= -1e-9
    assert verdict(7, ok, f"{count} metrics, min c_m-V {worst_bound:.4f}, min nu-margin {worst_nu:.4f}")


def test_c08_per_nu_invariance(verdict):
    def quantity(h, m):
        fd = fenchel_data(h, m)
        return {r.nu: -2 * m * fd.average(cell(h.n, m, r.nu)) - math.log(r.value)
                for r in monomial_norms(h, m)}

    worst = 0.0
    for s in range(20):
        n, m = 1 + s % 2, 2 + (s // 2) % 3
        h = random_admissible(s, n)
        a, b = quantity(h, m), quantity(scale(h, random_scale(s)), m)
        worst = max(worst, max(abs(a[k] - b[k]) for k in a))
    assert verdict(8, worst <= 1e-8, f"max drift {worst:.2e} (tol 1e-8) over 20 metrics")


def test_c09_projection(verdict):
    u = np.linspace(-12.0, 12.0, 2401)[:, None]
    drift, below, gap = 0.0, math.inf, math.inf
    for s in range(50):
        h = random_nonconcave(s)
        P = project(h)
        drift = max(drift, float(np.abs(project(P).f(u) - P.f(u)).max()))
        below = min(below, float((P.f(u) - h.f(u)).min()))
        gap = min(gap, compute_V(P, 3).value - compute_V(h, 3).value)
    u2 = np.stack(np.meshgrid(np.linspace(-6, 6, 41), np.linspace(-6, 6, 41)), -1).reshape(-1, 2)
    for s in range(3):
        h = random_admissible(s, 2)
        P = project(h)
        below = min(below, float((P.f(u2) - h.f(u2)).min()))
    ok = drift <= 1e-6 and below >= -1e-12 and gap >= -1e-6
    assert verdict(9, ok, f"idempotence drift {drift:.1e}, min f_P-f_h {below:.1e}, min V(P)-V(h) {gap:.3f}")


def test_c10_q_coefficients(verdict):
    worst_margin, worst_hold = math.inf, 0.0
    for s in range(50):
        n = 2 if s % 5 == 4 else 1
        h = random_admissible(s, n, below="fubini_study")
        assert is_dominated(h, fubini_study(n))[0] and is_dominated(fubini_study(n), canonical(n))[0]
        q = mixed_q(h, fubini_study(n))
        worst_margin = min(worst_margin, min(q.bound_margins(n)))
        worst_hold = max(worst_hold, q.holdout_rel_error)
    ok = worst_margin >= -1e-9 and worst_hold <= 1e-3
    assert verdict(10, ok, f"min bound margin {worst_margin:.3e}, max holdout rel err {worst_hold:.1e}")


def test_c11_todd_and_threshold(verdict):
    from fractions import Fraction

    b = todd_coefficients(4)
    exact = b.b[1:5] == (Fraction(1, 2), Fraction(1, 12), Fraction(0), Fraction(-1, 720))
    m0, cert = find_m0(1)
    cert_ok = m0 == 2 and cert.value_at_m0 <= 0 and (cert.value_before or 0) > 0
    worst = -math.inf
    for s in range(20):
        n = 1 + s % 2
        h = random_admissible(s, n, below="fubini_study")
        q = mixed_q(h, fubini_study(n))
        start = find_m0(n)[0]
        for m in range(start, start + 6):
            r = torsion_variation_bound(h, m, q)
            worst = max(worst, r.value - r.bound, r.bound)
    ok = exact and cert_ok and worst <= 0
    assert verdict(11, ok, f"Todd exact {exact}, m0(1)={m0} certified {cert_ok}, max(D-Dbar, Dbar) {worst:.3e}")


def test_c12_comparison(verdict):
    m = stirling_threshold(1)
    low = math.inf
    for s in range(50):
        r = comparison_bound_check(random_admissible(s, 1), m, t0=1.0, seed=s)
        assert r.status == "ok"
        low = min(low, r.margin)
    drift = 0.0
    for s in range(10):
        h = random_admissible(s, 1)
        drift = max(drift, abs(berman_F(scale(h, random_scale(s)), m).value - berman_F(h, m).value))
    ok = low >= -1e-6 and drift <= 1e-9
    assert verdict(12, ok, f"m={m}: min margin {low:.4f} (>= -1e-6); F drift under scaling {drift:.3e} (tol 1e-9)")


def test_c13_reproducibility(verdict):
    same = True
    for suite in SUITES:
        cfg = dict(suite=suite, n=1, m=[3], seeds=2)
        a, b = run_suite(ExperimentConfig(**cfg)), run_suite(ExperimentConfig(**cfg, jobs=2))
        for fmt in (report_json, summary_csv, margins_dat):
            same &= fmt(a) == fmt(b)
    assert verdict(13, same, f"byte-identical report/summary/margins for all {len(SUITES)} suites")

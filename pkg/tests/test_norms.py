"""Monomial L2 norms against closed forms and structural identities."""
import math
from fractions import Fraction

import numpy as np
import pytest

from toricfun.errors import AccuracyError, DomainError
from toricfun.metrics import canonical, fubini_study, project, random_admissible, scale
from toricfun.norms import (
    log_l2_volume,
    monomial_norm,
    monomial_norm_canonical_closed_form,
    monomial_norm_fs_closed_form,
    monomial_norms,
    norms_to_csv,
    norms_to_json,
)
from toricfun.simplex import lattice_points


def test_closed_form_values():
    # n = 1, m = 2: 1/(1+nu) + 1/(1+m-nu)
    assert [monomial_norm_canonical_closed_form(1, 2, (v,)) for v in range(3)] == [
        Fraction(4, 3), Fraction(1), Fraction(4, 3)]
    assert monomial_norm_canonical_closed_form(2, 1, (1, 0)) == 2
    assert monomial_norm_fs_closed_form(1, 2, (1,)) == Fraction(1, 6)


@pytest.mark.parametrize("n,m", [(1, 4), (2, 3)])
def test_canonical_norms_match_closed_form(n, m):
    for r in monomial_norms(canonical(n), m):
        exact = float(monomial_norm_canonical_closed_form(n, m, r.nu))
        assert abs(r.value - exact) <= 1e-10 * exact
        assert len(r.charts) == n + 1
        assert sum(r.charts) == pytest.approx(r.value, rel=1e-14)


@pytest.mark.parametrize("n,m", [(1, 3), (2, 2)])
def test_fs_norms_match_closed_form(n, m):
    for r in monomial_norms(fubini_study(n), m, volume="fubini_study"):
        exact = float(monomial_norm_fs_closed_form(n, m, r.nu))
        assert abs(r.value - exact) <= 1e-10 * exact


def test_scaling_multiplies_norms():
    h = random_admissible(6, 2)
    a = log_l2_volume(h, 3)
    b = log_l2_volume(scale(h, 4.0), 3)
    # each of the C(5,2) monomials picks up t^m
    assert b - a == pytest.approx(10 * 3 * math.log(4.0), abs=1e-9)


def test_larger_metric_has_larger_norms():
    h = random_admissible(0, 1)
    base = monomial_norms(h, 3)
    bigger = monomial_norms(project(h), 3)
    assert all(b.value >= a.value * (1 - 1e-12) for a, b in zip(base, bigger))


def test_symmetry_of_canonical_norms():
    rows = {r.nu: r.value for r in monomial_norms(canonical(2), 3)}
    assert rows[(1, 0)] == pytest.approx(rows[(0, 1)], rel=1e-13)
    assert rows[(0, 0)] == pytest.approx(rows[(3, 0)], rel=1e-13)


def test_single_norm_and_errors():
    r = monomial_norm(fubini_study(1), 2, (1,))
    assert r.error < 1e-12 * r.value
    with pytest.raises(DomainError):
        monomial_norms(canonical(1), 2, volume="flat")
    with pytest.raises(AccuracyError):
        monomial_norms(random_admissible(0, 1), 3, order=5, tol=1e-15)


def test_serialisation():
    rows = monomial_norms(canonical(1), 1)
    text = norms_to_csv(rows)
    assert text.splitlines()[0] == "nu,chart_0,chart_1,value,err"
    assert len(text.splitlines()) == 1 + len(lattice_points(1, 1))
    assert '"nu": [0]' in norms_to_json(rows)
    assert np.isfinite([r.log_value for r in rows]).all()

"""Lattice points, cell volumes, quadrature rules and the fan charts."""
import math
from fractions import Fraction

import numpy as np
import pytest

from toricfun.errors import DomainError
from toricfun.simplex import (
    cell,
    cell_average,
    cell_volume_exact,
    cells,
    charts_containing,
    cube_rule,
    graded_rule,
    lattice_points,
    simplex_quadrature,
)


@pytest.mark.parametrize("n,m", [(1, 0), (1, 5), (2, 3), (3, 4), (4, 2)])
def test_lattice_point_count(n, m):
    pts = lattice_points(n, m)
    assert len(pts) == math.comb(n + m, n)
    assert len(set(pts)) == len(pts)
    assert all(min(p) >= 0 and sum(p) <= m for p in pts)


def test_lattice_points_are_sorted_and_deterministic():
    assert lattice_points(2, 2) == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]


@pytest.mark.parametrize("n,m", [(1, 3), (2, 2), (2, 5), (3, 3)])
def test_cell_volumes_tile_the_simplex(n, m):
    total = sum(cell_volume_exact(n, m, nu) for nu in lattice_points(n, m))
    assert total == Fraction(1, math.factorial(n))


def test_cell_volume_values():
    # interior cube, a cut cube and a degenerate corner
    assert cell_volume_exact(2, 2, (0, 0)) == Fraction(1, 4)
    assert cell_volume_exact(2, 2, (1, 0)) == Fraction(1, 8)
    assert cell_volume_exact(2, 2, (2, 0)) == 0
    assert cell(2, 2, (2, 0)).degenerate


def test_bad_multi_index():
    with pytest.raises(DomainError):
        cell_volume_exact(2, 2, (2, 1))
    with pytest.raises(DomainError):
        cell_volume_exact(2, 2, (1,))


def test_graded_rule_integrates_log_singularity():
    s, sc, w = graded_rule(31)
    assert w @ np.log(s) == pytest.approx(-1.0, abs=1e-12)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_cube_rule_integrates_monomials(n):
    t, tc, w = cube_rule(n, 31)
    assert w @ t.prod(axis=1) == pytest.approx(2.0**-n, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_simplex_quadrature_moments(n):
    q = simplex_quadrature(n, 3)
    assert q.integrate(lambda x: np.ones(len(x))) == pytest.approx(1 / math.factorial(n), abs=1e-12)
    # int x_1 over Delta_n = 1/(n+1)!
    assert q.integrate(lambda x: x[:, 0]) == pytest.approx(1 / math.factorial(n + 1), abs=1e-12)


def test_cell_average_of_linear_function():
    c = cell(2, 3, (1, 1))
    avg = cell_average(c, lambda x: x.sum(axis=1))
    # centroid of the triangle with corners nu/m, (nu+e1)/m, (nu+e2)/m
    assert avg == pytest.approx((2 + 2 / 3) / 3, abs=1e-12)


def test_cell_average_degenerate_is_point_value():
    c = cells(1, 2)[-1]
    assert cell_average(c, lambda x: 5 * x[:, 0]) == 5.0


def test_charts_cover_projective_space():
    assert charts_containing([0.5, 0.5j]) == [0]
    assert charts_containing([2.0, 1.0]) == [1]
    assert charts_containing([1.0, 1.0]) == [0, 1, 2]

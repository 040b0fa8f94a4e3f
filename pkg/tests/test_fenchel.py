"""Fenchel transforms: closed forms, shift law, solver agreement, grids."""
import numpy as np
import pytest

from toricfun.errors import DomainError
from toricfun.fenchel import (
    FLAG_BOUNDARY,
    FLAG_OK,
    FenchelGrid,
    biconjugate,
    integrate_over_simplex,
    integrate_transform,
    transform,
    transform_grid,
    transform_points,
)
from toricfun.metrics import (
    CallablePotential,
    SumPotential,
    canonical,
    fubini_study,
    metric_from_spec,
    random_admissible,
    scale,
)
from toricfun.simplex import lattice_points


def entropy(x):
    x = np.atleast_2d(x)
    full = np.concatenate([x, 1 - x.sum(axis=1, keepdims=True)], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(full > 0, full * np.log(np.where(full > 0, full, 1.0)), 0.0)
    return -0.5 * terms.sum(axis=1)


def grid_points(n, M):
    return np.asarray(lattice_points(n, M), dtype=float) / M


@pytest.mark.parametrize("n", [1, 2, 3])
def test_canonical_transform_vanishes(n):
    vals, flags = transform_points(canonical(n).potential, grid_points(n, 8))
    assert np.abs(vals).max() == 0.0
    assert set(flags) <= {FLAG_OK, FLAG_BOUNDARY}


@pytest.mark.parametrize("n", [1, 2])
def test_fs_transform_is_entropy(n):
    x = grid_points(n, 12)
    vals, _ = transform_points(fubini_study(n).potential, x)
    assert np.abs(vals - entropy(x)).max() < 1e-12


def test_fs_integrals():
    assert integrate_transform(fubini_study(1).potential, 2)[0] == pytest.approx(0.25, abs=1e-12)
    # int over Delta_2 of the entropy form: 3 * (1/2) * (5/36) = 5/24
    assert integrate_transform(fubini_study(2).potential, 2)[0] == pytest.approx(5 / 24, abs=1e-8)


def test_scaling_shifts_transform():
    h = random_admissible(3, 2)
    x = grid_points(2, 6)
    a, _ = transform_points(h.potential, x)
    b, _ = transform_points(scale(h, 5.0).potential, x)
    assert np.abs(b - a + 0.5 * np.log(5.0)).max() < 1e-14


def test_mixed_sum_matches_generic_solver():
    h = random_admissible(1, 1)
    mix = SumPotential([(0.5, h.potential), (0.5, canonical(1).potential)])
    generic = CallablePotential(lambda u: mix(u), 1)
    x = np.linspace(0.0, 1.0, 11)[:, None]
    a, _ = transform_points(mix, x)
    b, _ = transform_points(generic, x)
    assert np.abs(a - b).max() < 1e-8


def test_piecewise_linear_transform_is_upper_hull():
    spec = {"kind": "piecewise_linear", "n": 1,
            "pieces": [{"a": ["0"], "c": 0.0}, {"a": ["1/2"], "c": -0.25}, {"a": ["1"], "c": 0.0}]}
    h = metric_from_spec(spec)
    vals, _ = transform_points(h.potential, np.array([[0.0], [0.25], [0.5], [1.0]]))
    # hull of (0, 0), (1/2, 1/4), (1, 0)
    assert np.allclose(vals, [0.0, 0.125, 0.25, 0.0], atol=1e-15)
    assert integrate_transform(h.potential, 1)[0] == pytest.approx(0.125, abs=1e-15)


def test_transform_concave_and_biconjugate_recovers_potential():
    h = random_admissible(4, 1)
    grid = transform_grid(h, 32, degree=2)
    assert grid.concavity_defect() <= 1e-12
    for u in (-2.0, 0.3, 1.5):
        assert biconjugate(h, [u]) == pytest.approx(float(h.f(np.array([[u]]))[0]), abs=1e-7)


def test_grid_json_round_trip():
    grid = transform_grid(random_admissible(2, 2), 4, degree=1)
    back = FenchelGrid.from_json(grid.to_json())
    assert back.to_json() == grid.to_json()
    assert back.value((1, 1)) == grid.value((1, 1))


def test_grid_integral_without_potential_uses_interpolant():
    grid = transform_grid(fubini_study(1), 64, integrate=False)
    value, err = integrate_over_simplex(grid)
    assert value == pytest.approx(0.25, abs=1e-4)
    assert abs(value - 0.25) <= err < 1e-3
    assert grid.interpolate([[0.5]])[0] == pytest.approx(0.5 * np.log(2), abs=1e-15)


def test_single_point_transform():
    assert transform(fubini_study(1), [0.5]) == pytest.approx(0.5 * np.log(2), abs=1e-14)


def test_outside_simplex_rejected():
    with pytest.raises(DomainError):
        transform_points(canonical(1).potential, np.array([[1.5]]))


def test_newton_converges_next_to_a_vertex():
    # two coordinates within 1e-9 of a vertex: the Hessian has eigenvalues near 1e-12
    h = random_admissible(97, 2)
    x = np.array([[3.6714334152501243e-10, 9.9999999962952923e-01]])
    vals, flags = transform_points(h.potential, x)
    assert flags[0] == FLAG_OK
    assert vals[0] == pytest.approx(0.50224036, abs=1e-8)


def test_generic_solver_follows_far_minimisers():
    from toricfun.metrics import random_nonconcave

    h = random_nonconcave(5)
    x = np.array([[1e-15], [0.0], [0.5], [1.0 - 1e-14], [1.0]])
    vals, flags = transform_points(h.potential, x)
    assert (flags != 2).all()
    assert np.isfinite(vals).all()

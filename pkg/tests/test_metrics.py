"""Metric specs, constructors, scaling, domination, generators and projection."""
import json

import numpy as np
import pytest

from toricfun.errors import DomainError, SpecError
from toricfun.metrics import (
    MetricSpec,
    canonical,
    fubini_study,
    is_dominated,
    make_rng,
    metric_from_spec,
    project,
    random_admissible,
    random_nonconcave,
    scale,
)

U1 = np.linspace(-10, 10, 401)[:, None]


def test_canonical_and_fs_potentials():
    u = np.array([[-1.0], [0.5], [3.0]])
    assert np.allclose(canonical(1).f(u), [-1.0, 0.0, 0.0])
    assert np.allclose(fubini_study(1).f(u), -0.5 * np.log1p(np.exp(-2 * u[:, 0])))
    u2 = np.array([[0.3, -0.2]])
    assert canonical(2).f(u2)[0] == -0.2


def test_spec_round_trip_and_digest():
    h = random_admissible(7, 2)
    text = h.spec.to_json()
    again = MetricSpec.from_json(text)
    assert again.to_json() == text
    assert metric_from_spec(json.loads(text)).digest() == h.digest()
    assert np.allclose(metric_from_spec(again).f(np.zeros((1, 2))), h.f(np.zeros((1, 2))))


def test_generator_digests_are_frozen():
    assert random_admissible(0, 1).digest() == "2cae2e9e97796734"
    assert random_admissible(5, 2).digest() == "39d4d592f523c327"
    assert random_admissible(3, 1, below="fubini_study").digest() == "e140e36e5fd0a249"


def test_rng_is_philox_and_reproducible():
    a = make_rng(11).uniform(size=4)
    b = np.random.Generator(np.random.Philox(key=11)).uniform(size=4)
    assert np.array_equal(a, b)
    with pytest.raises(DomainError):
        make_rng(1, "pcg64")


def test_spec_validation():
    with pytest.raises(SpecError):  # slope outside the simplex
        metric_from_spec({"kind": "piecewise_linear", "n": 1, "pieces": [{"a": ["2"], "c": 0}]})
    with pytest.raises(SpecError):  # missing vertex slope 1
        metric_from_spec({"kind": "piecewise_linear", "n": 1, "pieces": [{"a": ["0"], "c": 0}]})
    with pytest.raises(SpecError):
        metric_from_spec({"kind": "log_sum_exp", "n": 1, "p": -1.0,
                          "pieces": [{"a": ["0"], "c": 0}, {"a": ["1"], "c": 0}]})
    with pytest.raises(SpecError):
        metric_from_spec({"kind": "custom", "n": 1})


def test_scale_shifts_potential_by_half_log():
    h = random_admissible(2, 1)
    th = scale(scale(h, 2.0), 3.0)
    assert np.allclose(th.f(U1) - h.f(U1), 0.5 * np.log(6.0), atol=1e-14)
    assert th.spec.kind == "scaled"
    with pytest.raises(DomainError):
        scale(h, 0.0)


def test_bound_constant():
    assert canonical(2).bound_constant() == 0.0
    assert fubini_study(1).bound_constant() == pytest.approx(0.5 * np.log(2))


@pytest.mark.parametrize("seed", range(6))
def test_generated_metrics_are_dominated(seed):
    n = 1 + seed % 2
    assert is_dominated(random_admissible(seed, n), canonical(n))[0]
    h = random_admissible(seed, n, below="fubini_study")
    assert is_dominated(h, fubini_study(n))[0]


def test_domination_witness():
    ok, witness = is_dominated(scale(canonical(1), 2.0), canonical(1))
    assert not ok and witness is not None


def test_nonconcave_start_is_dominated_but_not_concave():
    h = random_nonconcave(4)
    assert is_dominated(h, canonical(1))[0]
    second = np.diff(h.f(U1), 2)
    assert second.max() > 1e-4
    assert h.digest() == random_nonconcave(4).digest()


def test_projection_dominates_and_is_idempotent():
    h = random_nonconcave(1)
    P = project(h)
    assert (P.f(U1) - h.f(U1)).min() >= -1e-10
    assert np.abs(project(P).f(U1) - P.f(U1)).max() <= 1e-6
    # a concave potential is (up to the lattice) its own envelope
    g = random_admissible(1, 1)
    assert np.abs(project(g).f(U1) - g.f(U1)).max() < 2e-3

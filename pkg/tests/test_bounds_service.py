import math

import numpy as np
import pytest

from services.bounds_service import (
    arbitrary_bound, binary_entropy, clean_to_noisy, consistency_prob_exact, curve_grid, curve_point,
    eps_tr_exact, eps_tr_mc, high_quantization_bound, inconsistency_bound,
    inconsistency_prob_exact, inconsistency_prob_mc, independent_curve, minsize_bound_family, noisy_to_clean,
    phi, phi_tangent_bound, posterior_bound_family, tempered_curves,
)
from services.learning_service import DataDistribution
from services.network_service import random_network
from utils.errors import ShapeError, SupportTooLargeError
from utils.helpers import derive_rng

GRID = np.linspace(0.0, 0.5, 101)


def test_entropy_and_phi_examples():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0 == binary_entropy(1.0)
    assert phi(0.25, 2) == pytest.approx(0.1)
    assert phi(0.25, 1) == pytest.approx(0.25)
    with pytest.raises(ShapeError):
        phi(0.5, 1)
    with pytest.raises(ShapeError):
        phi(0.2, 0)
    with pytest.raises(ShapeError):
        binary_entropy(1.5)


def test_arbitrary_bound_entropy_identity():
    for eps in GRID:
        power = 1.0 if eps == 0 else eps ** eps * (1 - eps) ** (1 - eps)
        assert abs(arbitrary_bound(eps) - (1 - power)) <= 1e-12


def test_noisy_clean_round_trip():
    for eps in GRID[:-1]:
        for risk in np.linspace(0, 1, 11):
            assert abs(noisy_to_clean(clean_to_noisy(risk, eps), eps).value - risk) <= 1e-12
    clamped = noisy_to_clean(0.05, 0.1)
    assert clamped.clamped and clamped.value == 0.0
    with pytest.raises(ShapeError):
        noisy_to_clean(0.3, 0.5)


@pytest.mark.parametrize('eps', [0.05, 0.1, 0.25, 0.4, 0.49])
def test_phi_decreasing_convex_and_above_tangent(eps):
    ts = np.linspace(0.01, 10.0, 500)
    values = np.array([phi(eps, t) for t in ts])
    assert np.all(np.diff(values) < 0)
    assert np.all(np.diff(values, 2) >= -1e-12)
    tangent = np.array([phi_tangent_bound(eps, t) for t in ts])
    assert np.all(tangent <= values + 1e-12)
    assert phi_tangent_bound(eps, 1.0) == pytest.approx(eps)


def test_curve_points():
    start, end = curve_point(0.0), curve_point(0.5)
    assert (start.bayes, start.independent_curve, start.arbitrary_bound) == (0.0, 0.0, 0.0)
    assert end.independent_curve == pytest.approx(0.5) and end.arbitrary_bound == pytest.approx(0.5)
    assert 'high_quantization' not in start.to_dict()
    point = curve_point(0.2, q=2)
    assert point.high_quantization == pytest.approx(point.arbitrary_bound)
    assert high_quantization_bound(0.2, 16) > arbitrary_bound(0.2)
    with pytest.raises(ShapeError):
        high_quantization_bound(0.2, 1.5)
    with pytest.raises(ShapeError):
        curve_point(0.7)


def test_curve_ordering_over_grid():
    grid = curve_grid()
    assert len(grid) == 101 and grid[0] == 0.0 and grid[-1] == 0.5
    for point in tempered_curves(grid):
        assert point.bayes <= point.independent_curve + 1e-15
        assert point.independent_curve <= point.arbitrary_bound + 1e-15
        assert point.arbitrary_bound <= point.trivial + 1e-15


def test_bound_families_and_simple_bounds():
    assert minsize_bound_family(0.1, 0.05)['independent'] == pytest.approx(independent_curve(0.1) + 0.05)
    assert posterior_bound_family(0.1, 0.2)['arbitrary'] == pytest.approx(arbitrary_bound(0.1) + 0.2)
    assert inconsistency_bound(4, 0.25) == 2.0


def _distributions():
    for d0 in (1, 2, 3, 5):
        rng = derive_rng(31, d0)
        teacher = random_network([d0, 1], rng)
        pmf = rng.dirichlet(np.ones(1 << d0))
        for eps in (0.0, 0.1, 0.25, 0.4):
            yield DataDistribution(d0=d0, teacher=teacher, eps=eps)
            yield DataDistribution(d0=d0, teacher=teacher, eps=eps, pmf=pmf)
            yield DataDistribution(d0=d0, teacher=teacher, eps=eps, noise='arbitrary', pmf=pmf)


def test_exact_probabilities_obey_their_bounds():
    for dist in _distributions():
        for n in (1, 2, 5, 12):
            eps_tr = eps_tr_exact(dist, n)
            assert eps_tr <= dist.eps + 1e-12
            p_bad = inconsistency_prob_exact(dist, n)
            assert 0.0 <= p_bad <= inconsistency_bound(n, dist.d_max()) + 1e-12
            if dist.eps == 0 or n == 1:
                assert p_bad == pytest.approx(0.0, abs=1e-12)
            if n == 1:
                assert eps_tr == pytest.approx(dist.eps)


def test_exact_consistency_single_point_closed_form(threshold_teacher):
    # one-point support: consistent iff all N labels agree
    pmf = np.zeros(8)
    pmf[3] = 1.0
    eps, n = 0.3, 6
    dist = DataDistribution(d0=3, teacher=threshold_teacher, eps=eps, pmf=pmf)
    agree = eps ** n + (1 - eps) ** n
    assert consistency_prob_exact(dist, n) == pytest.approx(agree)
    assert eps_tr_exact(dist, n) == pytest.approx(eps ** n / agree)


def test_monte_carlo_matches_exact(tiny_distribution):
    n = 6
    dist = tiny_distribution.with_eps(0.3)
    p_exact = inconsistency_prob_exact(dist, n)
    p_mc, p_err = inconsistency_prob_mc(dist, n, samples=4000, seed=5)
    assert abs(p_mc - p_exact) <= 4 * p_err
    e_exact = eps_tr_exact(dist, n)
    e_mc, e_err = eps_tr_mc(dist, n, samples=4000, seed=6)
    assert abs(e_mc - e_exact) <= 4 * e_err


def test_exact_computation_caps(threshold_teacher):
    big = DataDistribution(d0=7, teacher=random_network([7, 1], derive_rng(1)), eps=0.1)
    with pytest.raises(SupportTooLargeError):
        eps_tr_exact(big, 4)
    small = DataDistribution(d0=3, teacher=threshold_teacher, eps=0.1)
    with pytest.raises(SupportTooLargeError):
        consistency_prob_exact(small, 21)
    assert math.isfinite(eps_tr_exact(small, 20))

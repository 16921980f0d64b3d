import math

import numpy as np
import pytest

from config.settings import MEMORIZER_CONFIG
from services.bounds_service import binary_entropy
from services.learning_service import Dataset, empirical_risk
from services.memorizer_service import (
    MemorizerService, PartialFunction, build_dataset_interpolator, build_memorizer, staircase_parity,
)
from services.network_service import evaluate_batch
from utils.errors import InconsistentDatasetError, ShapeError
from utils.helpers import all_inputs, derive_rng


def _random_partial(rng, d0, n, n1=None):
    idx = np.sort(rng.choice(1 << d0, size=n, replace=False))
    values = np.zeros(n, dtype=np.uint8)
    n1 = int(rng.integers(0, n + 1)) if n1 is None else n1
    values[rng.choice(n, size=n1, replace=False)] = 1
    return PartialFunction(domain=all_inputs(d0)[idx], values=values)


def test_partial_function_validation():
    with pytest.raises(ShapeError):
        PartialFunction(domain=np.array([[0, 1], [0, 1]]), values=[0, 1])
    with pytest.raises(ShapeError):
        PartialFunction(domain=np.zeros((0, 3)), values=[])
    with pytest.raises(ShapeError):
        PartialFunction(domain=np.array([[0, 2]]), values=[1])


def test_constant_labels_take_the_shortcut(rng):
    for value in (0, 1):
        f = _random_partial(rng, 5, 9, n1=9 * value)
        report = build_memorizer(f, seed=1)
        assert report.shortcut and report.depth == 1 and report.consistent
        assert set(evaluate_batch(report.network, all_inputs(5))[:, 0].tolist()) == {value}


def test_small_memorizer_is_consistent(rng):
    f = _random_partial(rng, 6, 12, n1=5)
    report = MemorizerService(seed=5).build(f)
    assert report.consistent and not report.shortcut
    assert np.array_equal(evaluate_batch(report.network, f.domain)[:, 0], f.values)
    assert report.lookup is not None and report.lookup.network.depth == 6
    assert report.w == report.network.stats().w
    data = report.to_dict()
    assert data['N'] == 12 and data['N1'] == 5 and data['hsg']['T'] >= 1
    assert 'seed:' in report.to_text() and 'breakpoints ' in data['seed']


def test_sign_matrix_front_end(rng):
    f = _random_partial(rng, 7, 10, n1=4)
    report = MemorizerService(seed=2, ternary_first=True).build(f)
    assert report.network.ternary_first
    assert np.array_equal(evaluate_batch(report.network, f.domain)[:, 0], f.values)


def test_staircase_parity_lower_bound_fixture():
    f = staircase_parity(8)
    assert f.N == 9 and f.values.tolist() == [0, 1, 0, 1, 0, 1, 0, 1, 0]
    report = build_memorizer(f, seed=0)
    assert report.consistent
    assert report.w >= 64


def test_interpolator_fits_noisy_labels(threshold_teacher):
    xs = all_inputs(3)
    ys = evaluate_batch(threshold_teacher, xs)[:, 0].copy()
    ys[[1, 6]] ^= 1
    dataset = Dataset(xs=np.vstack([xs, xs[:2]]), ys=np.concatenate([ys, ys[:2]]))
    report = MemorizerService(seed=4).interpolate(threshold_teacher, dataset)
    assert report.flips == 2 and report.train_risk == 0.0
    assert empirical_risk(report.network, dataset) == 0
    assert report.to_dict()['N_H_eps_hat'] == pytest.approx(8 * binary_entropy(0.25))
    assert build_dataset_interpolator(threshold_teacher, dataset, seed=4).dims == report.network.dims


def test_interpolator_rejects_bad_input(threshold_teacher):
    clash = Dataset(xs=np.array([[0, 0, 1], [0, 0, 1]]), ys=[0, 1])
    with pytest.raises(InconsistentDatasetError):
        MemorizerService(seed=0).interpolate(threshold_teacher, clash)
    with pytest.raises(ShapeError):
        MemorizerService(seed=0).interpolate(threshold_teacher, Dataset(xs=np.zeros((1, 4)), ys=[0]))


@pytest.mark.slow
def test_random_partial_functions_end_to_end():
    for trial in range(100):
        rng = derive_rng(777, trial)
        d0 = int(rng.integers(1, 11))
        n = int(rng.integers(1, min(32, 1 << d0) + 1))
        f = _random_partial(rng, d0, n)
        report = MemorizerService(seed=trial, max_retries=64).build(f)
        assert report.consistent
        assert report.retries <= 2 * MEMORIZER_CONFIG['MAX_RETRIES']


@pytest.mark.slow
def test_weight_count_leading_order_trend():
    d0, alpha = 10, 0.25
    ratios = []
    for n in (64, 128, 256, 512):
        f = _random_partial(derive_rng(99, n), d0, n, n1=int(alpha * n))
        report = build_memorizer(f, seed=n)
        ratios.append(report.w / (n * binary_entropy(alpha)))
    assert all(math.isfinite(r) for r in ratios)
    assert ratios[-1] <= ratios[-2]

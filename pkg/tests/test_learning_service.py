import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from services.learning_service import (
    STAR, DataDistribution, Dataset, FunctionHistogram, LearnedHypothesis, arbitrary_flip_mask, constant_learner,
    distinct_points, empirical_risk, is_consistent, min_size_interpolator, parameter_count, population_risk_exact,
    population_risk_mc, posterior_enumerate, posterior_sample, read_dataset, risk_of_tables, sample_dataset,
    write_dataset,
)
from services.network_service import make_network
from utils.errors import EnumerationCapError, NoInterpolatorError, SamplingBudgetError, ShapeError
from utils.helpers import all_inputs, derive_rng


@pytest.fixture
def and_teacher():
    return make_network([np.array([[1, 1]])], [[-1]], [[1]])


def test_dataset_text_round_trip(tmp_path):
    text = '# comment\n101 1\n\n001 0  # trailing\n101 1\n'
    dataset = Dataset.from_text(text)
    assert dataset.N == 3 and dataset.d0 == 3
    assert dataset.indices().tolist() == [5, 1, 5]
    path = tmp_path / 'data.ds'
    write_dataset(dataset, path)
    back = read_dataset(path, d0=3)
    assert np.array_equal(back.xs, dataset.xs) and np.array_equal(back.ys, dataset.ys)
    assert Dataset.from_text('', d0=4).xs.shape == (0, 4)


@pytest.mark.parametrize('text', ['101 2\n', '101\n', '1a1 0\n', '101 1\n10 0\n', ''])
def test_dataset_parse_errors(text):
    with pytest.raises(ShapeError):
        Dataset.from_text(text)


def test_consistency_and_distinct_points():
    ok = Dataset(xs=np.array([[0, 1], [0, 1], [1, 1]]), ys=[1, 1, 0])
    clash = Dataset(xs=np.array([[0, 1], [1, 1], [0, 1]]), ys=[1, 0, 0])
    assert is_consistent(ok) and not is_consistent(clash)
    points, labels = distinct_points(ok)
    assert points.tolist() == [[0, 1], [1, 1]] and labels.tolist() == [1, 0]


def test_distribution_validation(threshold_teacher):
    with pytest.raises(ShapeError):
        DataDistribution(d0=3, teacher=threshold_teacher, eps=0.6)
    with pytest.raises(ShapeError):
        DataDistribution(d0=4, teacher=threshold_teacher, eps=0.1)
    with pytest.raises(ShapeError):
        DataDistribution(d0=3, teacher=threshold_teacher, eps=0.1, pmf=np.ones(4) / 4)
    with pytest.raises(ShapeError):
        DataDistribution(d0=3, teacher=threshold_teacher, eps=0.1, noise='adversarial')


def test_arbitrary_flip_mask_has_requested_rate():
    pmf = np.array([0.4, 0.3, 0.2, 0.1])
    for eps in (0.0, 0.1, 0.25, 0.5):
        mask = arbitrary_flip_mask(pmf, eps)
        assert np.all((0 <= mask) & (mask <= 1))
        assert float(mask @ pmf) == pytest.approx(eps)
    assert arbitrary_flip_mask(pmf, 0.35).tolist() == pytest.approx([0.875, 0, 0, 0])


def test_risks_of_teacher_and_complement(tiny_distribution, threshold_teacher):
    assert population_risk_exact(threshold_teacher, tiny_distribution) == pytest.approx(0.2)
    flipped = make_network([np.array([[1, 1, 1]])], [[2]], [[-1]])
    assert population_risk_exact(flipped, tiny_distribution) == pytest.approx(0.8)
    tables = np.vstack([tiny_distribution.teacher_table(), 1 - tiny_distribution.teacher_table()])
    assert risk_of_tables(tables, tiny_distribution).tolist() == pytest.approx([0.2, 0.8])
    estimate, stderr = population_risk_mc(threshold_teacher, tiny_distribution, samples=40000, seed=3)
    assert abs(estimate - 0.2) <= 4 * stderr


def test_empirical_risk_and_star(threshold_teacher):
    dataset = Dataset(xs=all_inputs(3), ys=[0, 0, 0, 1, 0, 1, 1, 0])
    assert empirical_risk(threshold_teacher, dataset) == Fraction(1, 8)
    assert STAR.is_star and STAR.predict(all_inputs(2)).tolist() == [0, 0, 0, 0]
    assert empirical_risk(STAR, dataset) == Fraction(3, 8)


def test_sampling_is_seeded(tiny_distribution):
    a = sample_dataset(tiny_distribution, 50, seed=9)
    b = sample_dataset(tiny_distribution, 50, seed=9)
    assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
    with pytest.raises(ShapeError):
        sample_dataset(tiny_distribution, 0, seed=9)


def test_parameter_count():
    assert parameter_count([2, 2, 1]) == 48 ** 3
    assert parameter_count([3, 1]) == 8 * 6 * 3


def _neuron_table_counts(d0):
    """Tables (int, bit x = output on input x) of one neuron on d0 inputs over all its parameters"""
    xs = all_inputs(d0).astype(np.int64)
    tables = []
    for w in itertools.product((0, 1), repeat=d0):
        sums = xs @ np.array(w)
        for b in range(-d0 + 1, d0 + 1):
            for g in (-1, 0, 1):
                out = (g * sums + b > 0).astype(np.int64)
                tables.append(int(out @ (1 << np.arange(len(xs)))))
    return tables


def _brute_force_histogram():
    """Truth-table counts of every parameter vector of the (2, 2, 1) architecture"""
    hidden = _neuron_table_counts(2)
    counts = Counter()
    for t1, t2 in itertools.product(hidden, repeat=2):
        h = np.array([[(t1 >> x) & 1, (t2 >> x) & 1] for x in range(4)], dtype=np.int64)
        for w in itertools.product((0, 1), repeat=2):
            sums = h @ np.array(w)
            for b in range(-1, 3):
                for g in (-1, 0, 1):
                    out = (g * sums + b > 0).astype(np.int64)
                    counts[int(out @ np.array([1, 2, 4, 8]))] += 1
    return counts


def test_function_histogram_matches_brute_force():
    hist = FunctionHistogram([2, 2, 1])
    assert hist.total == 48 ** 3 == int(hist.counts.sum())
    assert dict(zip(hist.tables.tolist(), hist.counts.tolist())) == dict(_brute_force_histogram())
    assert hist.truth_tables().shape == (len(hist.tables), 4)


def test_histogram_cap_and_dims():
    with pytest.raises(EnumerationCapError):
        FunctionHistogram([3, 3, 1], cap=1000)
    with pytest.raises(ShapeError):
        FunctionHistogram([6, 1])
    with pytest.raises(ShapeError):
        FunctionHistogram([2, 2, 2])


def test_posterior_enumerate_counts(and_teacher):
    dataset = Dataset(xs=np.array([[0, 0], [1, 1], [0, 1]]), ys=[0, 1, 0])
    dist = DataDistribution(d0=2, teacher=and_teacher, eps=0.1)
    summary = posterior_enumerate(dataset, [2, 2, 1], distribution=dist)
    brute = _brute_force_histogram()
    want = sum(c for t, c in brute.items() if (t & 1) == 0 and (t >> 3) & 1 == 1 and (t >> 1) & 1 == 0)
    assert summary.interpolating == want and summary.total == 48 ** 3
    assert 0 < summary.p_s < 1 and not summary.zero
    assert 0.0 <= summary.mean_risk <= 1.0


def test_posterior_sample_agrees_with_enumeration(and_teacher):
    dataset = Dataset(xs=np.array([[0, 0], [1, 1], [0, 1]]), ys=[0, 1, 0])
    dist = DataDistribution(d0=2, teacher=and_teacher, eps=0.1)
    exact = posterior_enumerate(dataset, [2, 2, 1], distribution=dist).mean_risk
    risks = []
    for seed in range(300):
        h = posterior_sample(dataset, [2, 2, 1], seed=seed)
        assert empirical_risk(h, dataset) == 0
        risks.append(population_risk_exact(h, dist))
    risks = np.array(risks)
    sigma = risks.std(ddof=1) / np.sqrt(len(risks))
    assert abs(risks.mean() - exact) <= 4 * sigma + 1e-9


def test_posterior_sample_edge_cases(and_teacher):
    clash = Dataset(xs=np.array([[0, 1], [0, 1]]), ys=[0, 1])
    assert posterior_sample(clash, [2, 1], seed=0) is STAR
    xor = Dataset(xs=all_inputs(2), ys=[0, 1, 1, 0])
    with pytest.raises(SamplingBudgetError) as info:
        posterior_sample(xor, [2, 1], seed=0, max_draws=2000)
    assert info.value.draws == 2000
    assert info.value.acceptance_estimate == pytest.approx(1 / 2002)
    with pytest.raises(SamplingBudgetError) as info:
        posterior_sample(xor, [2, 1], seed=0, max_draws=98)
    assert info.value.acceptance_estimate == pytest.approx(0.01)


def _oracle_neuron_patterns(points):
    """Every output pattern a single {0,1}-weight neuron can produce on the points"""
    d = points.shape[1]
    patterns = set()
    for w in itertools.product((0, 1), repeat=d):
        sums = points.astype(np.int64) @ np.array(w, dtype=np.int64)
        for b in range(-d + 1, d + 1):
            for g in (-1, 0, 1):
                patterns.add(tuple(int(v) for v in (g * sums + b > 0)))
    return patterns


def _oracle_interpolates(points, ys, width):
    """Does some depth-two network with hidden width `width` fit the labels?"""
    patterns = [np.array(p, dtype=np.int64) for p in _oracle_neuron_patterns(points)]
    reachable = {tuple([0] * len(ys))}
    sums_by_size = [set(reachable)]
    for _ in range(width):
        reachable = {tuple(np.array(s) + p) for s in reachable for p in patterns}
        sums_by_size.append(reachable)
    targets = tuple(int(y) for y in ys)
    for sums in set().union(*sums_by_size):
        s = np.array(sums)
        for b in range(-width + 1, width + 1):
            for g in (-1, 0, 1):
                if tuple(int(v) for v in (g * s + b > 0)) == targets:
                    return True
    return False


def test_min_size_interpolator_is_minimal():
    for trial in range(20):
        rng = derive_rng(4242, trial)
        n = int(rng.integers(1, 9))
        xs = all_inputs(3)[rng.integers(0, 8, size=n)]
        ys = rng.integers(0, 2, size=n)
        dataset = Dataset(xs=xs, ys=ys)
        result = min_size_interpolator(dataset, depth=2)
        if not is_consistent(dataset):
            assert result is STAR
            continue
        net = result.network
        assert net.depth == 2 and empirical_risk(net, dataset) == 0
        points, labels = distinct_points(dataset)
        d1 = net.dims[1]
        if d1 > 1:
            assert not _oracle_interpolates(points, labels, d1 - 1)


def test_min_size_other_depths():
    dataset = Dataset(xs=all_inputs(2), ys=[0, 1, 1, 0])
    single = min_size_interpolator(Dataset(xs=all_inputs(2), ys=[0, 0, 0, 1]), depth=1)
    assert single.network.dims == (2, 1)
    deep = min_size_interpolator(dataset, depth=3)
    assert deep.network.depth == 3 and empirical_risk(deep, dataset) == 0
    with pytest.raises(ShapeError):
        min_size_interpolator(dataset, depth=0)
    with pytest.raises(NoInterpolatorError) as info:
        min_size_interpolator(dataset, depth=1)
    assert info.value.exit_code == 4


def test_min_size_weight_count_ignores_row_order():
    for trial in range(10):
        rng = derive_rng(777, trial)
        n = int(rng.integers(2, 9))
        idx = rng.permutation(8)[:n]
        xs = all_inputs(3)[idx]
        ys = rng.integers(0, 2, size=n)
        base = min_size_interpolator(Dataset(xs=xs, ys=ys), depth=2).network
        for _ in range(3):
            order = rng.permutation(n)
            shuffled = min_size_interpolator(Dataset(xs=xs[order], ys=ys[order]), depth=2).network
            assert shuffled.stats().w == base.stats().w
            assert shuffled.dims == base.dims


def test_constant_learner():
    dataset = Dataset(xs=all_inputs(2), ys=[0, 1, 1, 0])
    h = constant_learner(dataset)
    assert isinstance(h, LearnedHypothesis) and not h.is_star
    assert h.predict(all_inputs(2)).tolist() == [0, 0, 0, 0]
    assert constant_learner(Dataset(xs=np.array([[1, 1], [1, 1]]), ys=[0, 1])) is STAR

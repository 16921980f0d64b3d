"""
Learning Service

Data model (marginal, teacher, label noise), datasets and their text
format, risks, and the interpolating learning rules: the min-size rule,
exact posterior enumeration over a student architecture, and rejection
sampling from the uniform parameter prior.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import LEARNING_CONFIG
from services.network_service import Network, bias_range, evaluate_batch, make_network
from utils.errors import (
    BudgetExhaustedError, EnumerationCapError, NoInterpolatorError, SamplingBudgetError, ShapeError,
    SupportTooLargeError,
)
from utils.helpers import all_inputs, derive_rng, format_bits, parse_bitstring, rows_to_ints

logger = logging.getLogger(__name__)

NOISE_MODELS = ('independent', 'arbitrary')
PMF_TOLERANCE = 1e-12


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

def arbitrary_flip_mask(pmf: np.ndarray, eps: float) -> np.ndarray:
    """
    Deterministic flip probabilities with marginal flip rate eps

    Heaviest points flip with probability one until less than one point's
    mass of budget is left; that point flips with the fractional remainder.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    mask = np.zeros_like(pmf)
    remaining = eps
    for x in np.lexsort((np.arange(len(pmf)), -pmf)):
        if remaining <= 0 or pmf[x] <= 0:
            break
        if pmf[x] <= remaining:
            mask[x] = 1.0
            remaining -= pmf[x]
        else:
            mask[x] = remaining / pmf[x]
            remaining = 0.0
    return mask


@dataclass(eq=False)
class DataDistribution:
    """
    Joint distribution of (X, Y)

    X follows the marginal (uniform when pmf is None), Y is the teacher's
    output flipped with probability eps (independent noise) or with the
    per-point probabilities of a deterministic mask (arbitrary noise).
    """

    d0: int
    teacher: Network
    eps: float
    noise: str = 'independent'
    pmf: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.teacher.d_in != self.d0 or self.teacher.d_out != 1:
            raise ShapeError(f"teacher must map {self.d0} bits to one bit, has dims {self.teacher.dims}")
        if not 0 <= self.eps <= 0.5:
            raise ShapeError(f"noise rate must lie in [0, 1/2], got {self.eps}")
        if self.noise not in NOISE_MODELS:
            raise ShapeError(f"unknown noise model {self.noise!r}")
        if self.pmf is not None:
            self.pmf = np.asarray(self.pmf, dtype=np.float64)
            if self.pmf.shape != (1 << self.d0,):
                raise ShapeError(f"marginal needs {1 << self.d0} point masses, got {self.pmf.shape}")
            if np.any(self.pmf < 0) or abs(self.pmf.sum() - 1.0) > PMF_TOLERANCE:
                raise ShapeError('marginal must be a probability vector')
        if self.noise == 'arbitrary' and self.support_size > LEARNING_CONFIG['EXACT_SUPPORT_CAP']:
            raise SupportTooLargeError('arbitrary noise needs an enumerable support')
        self._teacher_table: Optional[np.ndarray] = None

    @property
    def support_size(self) -> int:
        return 1 << self.d0

    def marginal(self) -> np.ndarray:
        """Point masses over {0,1}^d0 in integer order"""
        self._check_enumerable()
        if self.pmf is None:
            return np.full(self.support_size, 1.0 / self.support_size)
        return self.pmf

    def flip_probs(self) -> np.ndarray:
        """P(Y != teacher(x) | X = x) for every x"""
        if self.noise == 'independent':
            return np.full(self.support_size, self.eps)
        return arbitrary_flip_mask(self.marginal(), self.eps)

    def teacher_table(self) -> np.ndarray:
        if self._teacher_table is None:
            self._check_enumerable()
            self._teacher_table = evaluate_batch(self.teacher, all_inputs(self.d0))[:, 0]
        return self._teacher_table

    def d_max(self) -> float:
        """Peak marginal probability"""
        if self.pmf is None:
            return 2.0 ** -self.d0
        return float(self.pmf.max())

    def with_eps(self, eps: float) -> 'DataDistribution':
        return DataDistribution(d0=self.d0, teacher=self.teacher, eps=eps, noise=self.noise, pmf=self.pmf)

    def _check_enumerable(self):
        if self.support_size > LEARNING_CONFIG['EXACT_SUPPORT_CAP']:
            raise SupportTooLargeError(f"support of size 2^{self.d0} is above the exact cap; "
                                       f"use the Monte-Carlo variant")

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.pmf is None:
            if self.d0 > 62:
                raise ShapeError('sampling supports d0 <= 62')
            return rng.integers(0, 1 << self.d0, size=n, dtype=np.int64)
        return rng.choice(self.support_size, size=n, p=self.pmf)

    def sample(self, n: int, rng: np.random.Generator) -> 'Dataset':
        idx = self.sample_indices(n, rng)
        shifts = np.arange(self.d0 - 1, -1, -1, dtype=np.int64)
        xs = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
        clean = evaluate_batch(self.teacher, xs)[:, 0] if n else np.zeros(0, dtype=np.uint8)
        if self.noise == 'independent':
            q = np.full(n, self.eps)
        else:
            q = self.flip_probs()[idx]
        flips = (rng.random(n) < q).astype(np.uint8)
        return Dataset(xs=xs.reshape(n, self.d0), ys=clean ^ flips)


def d_max(distribution: DataDistribution) -> float:
    return distribution.d_max()


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Dataset:
    """N samples (x, y) with x in {0,1}^d0 and y a bit"""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.uint8)
        self.ys = np.asarray(self.ys, dtype=np.uint8).reshape(-1)
        if self.xs.ndim != 2 or self.xs.shape[0] != self.ys.shape[0]:
            raise ShapeError('dataset needs an (N x d0) input array and N labels')
        if np.any(self.xs > 1) or np.any(self.ys > 1):
            raise ShapeError('dataset entries must be bits')

    @property
    def N(self) -> int:
        return self.xs.shape[0]

    @property
    def d0(self) -> int:
        return self.xs.shape[1]

    def indices(self) -> np.ndarray:
        """Inputs as integers (MSB first)"""
        return rows_to_ints(self.xs)

    def to_text(self) -> str:
        return ''.join(f"{format_bits(x)} {int(y)}\n" for x, y in zip(self.xs, self.ys))

    @classmethod
    def from_text(cls, text: str, d0: Optional[int] = None) -> 'Dataset':
        """
        Parse the .ds format: one '<bitstring> <label>' per line, '#' comments

        Raises:
            ShapeError: Malformed line or inputs of unequal length
        """
        xs, ys = [], []
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ('0', '1'):
                raise ShapeError(f"dataset line {line_no}: expected '<bits> <label>'")
            try:
                x = parse_bitstring(parts[0])
            except ShapeError as e:
                raise ShapeError(f"dataset line {line_no}: {e}")
            if xs and len(x) != len(xs[0]):
                raise ShapeError(f"dataset line {line_no}: input has {len(x)} bits, expected {len(xs[0])}")
            xs.append(x)
            ys.append(int(parts[1]))
        if not xs:
            if d0 is None:
                raise ShapeError('empty dataset needs an explicit input width')
            return cls(xs=np.zeros((0, d0), dtype=np.uint8), ys=np.zeros(0, dtype=np.uint8))
        if d0 is not None and len(xs[0]) != d0:
            raise ShapeError(f"dataset inputs have {len(xs[0])} bits, expected {d0}")
        return cls(xs=np.vstack(xs), ys=np.array(ys, dtype=np.uint8))


def read_dataset(path: Union[str, Path], d0: Optional[int] = None) -> Dataset:
    with open(path, 'r') as f:
        return Dataset.from_text(f.read(), d0)


def write_dataset(dataset: Dataset, path: Union[str, Path]):
    with open(path, 'w', newline='\n') as f:
        f.write(dataset.to_text())


def sample_dataset(distribution: DataDistribution, n: int, seed: int) -> Dataset:
    """N i.i.d. samples from the distribution with a seeded RNG"""
    if n < 1:
        raise ShapeError('dataset size must be at least 1')
    return distribution.sample(n, derive_rng(seed))


def is_consistent(dataset: Dataset) -> bool:
    """No two samples share an input with different labels"""
    if dataset.N < 2:
        return True
    _, inverse = np.unique(dataset.xs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    groups = inverse.max() + 1
    lo = np.full(groups, 2, dtype=np.int64)
    hi = np.full(groups, -1, dtype=np.int64)
    np.minimum.at(lo, inverse, dataset.ys)
    np.maximum.at(hi, inverse, dataset.ys)
    return bool(np.all(lo == hi))


def distinct_points(dataset: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted distinct inputs of a consistent dataset with their labels"""
    domain, first = np.unique(dataset.xs, axis=0, return_index=True)
    return domain, dataset.ys[first]


# ---------------------------------------------------------------------------
# Hypotheses and risks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearnedHypothesis:
    """A network, or the star marker returned on inconsistent data"""

    network: Optional[Network] = None

    @property
    def is_star(self) -> bool:
        return self.network is None

    def predict(self, xs: np.ndarray) -> np.ndarray:
        """Outputs on a batch; star predicts the constant 0"""
        xs = np.asarray(xs, dtype=np.uint8)
        if self.network is None:
            return np.zeros(xs.shape[0], dtype=np.uint8)
        return evaluate_batch(self.network, xs)[:, 0]


STAR = LearnedHypothesis()

Hypothesis = Union[Network, LearnedHypothesis]


def _predict(h: Hypothesis, xs: np.ndarray) -> np.ndarray:
    if isinstance(h, LearnedHypothesis):
        return h.predict(xs)
    if h.d_out != 1:
        raise ShapeError('risk needs a single-output network')
    return evaluate_batch(h, xs)[:, 0]


def empirical_risk(h: Hypothesis, dataset: Dataset) -> Fraction:
    """Exact fraction of training samples h gets wrong"""
    if dataset.N == 0:
        return Fraction(0)
    wrong = int(np.count_nonzero(_predict(h, dataset.xs) != dataset.ys))
    return Fraction(wrong, dataset.N)


def risk_of_tables(tables: np.ndarray, distribution: DataDistribution) -> np.ndarray:
    """
    Population risk of every truth table in a (F x 2^d0) bit array

    Points where the table agrees with the teacher cost their flip
    probability, the others one minus it.
    """
    p = distribution.marginal()
    q = distribution.flip_probs()
    t = distribution.teacher_table()
    agree = np.asarray(tables, dtype=np.uint8) == t[None, :]
    return np.where(agree, q[None, :], 1.0 - q[None, :]) @ p


def population_risk_exact(h: Hypothesis, distribution: DataDistribution) -> float:
    """P(h(X) != Y) summed over the whole support"""
    if distribution.support_size > LEARNING_CONFIG['EXACT_SUPPORT_CAP']:
        raise SupportTooLargeError(f"support of size 2^{distribution.d0} is above the exact cap; "
                                   f"use population_risk_mc")
    table = _predict(h, all_inputs(distribution.d0))
    return float(risk_of_tables(table[None, :], distribution)[0])


def population_risk_mc(h: Hypothesis, distribution: DataDistribution, samples: Optional[int] = None,
                       seed: int = 0) -> Tuple[float, float]:
    """
    Monte-Carlo estimate of P(h(X) != Y)

    Returns:
        (estimate, standard error)
    """
    samples = samples or LEARNING_CONFIG['MC_SAMPLES']
    rng = derive_rng(seed, 7)
    batch = LEARNING_CONFIG['SAMPLE_BATCH'] * 16
    wrong = 0
    for start in range(0, samples, batch):
        data = distribution.sample(min(batch, samples - start), rng)
        wrong += int(np.count_nonzero(_predict(h, data.xs) != data.ys))
    mean = wrong / samples
    return mean, math.sqrt(mean * (1 - mean) / samples)


# ---------------------------------------------------------------------------
# Parameter space
# ---------------------------------------------------------------------------

def parameter_count(dims: Sequence[int]) -> int:
    """|Theta(d)|: {0,1} weights, biases in range, scalars in {-1, 0, 1}"""
    total = 1
    for l in range(1, len(dims)):
        d_prev, d = int(dims[l - 1]), int(dims[l])
        lo, hi = bias_range(d_prev)
        total *= 2 ** (d_prev * d) * (hi - lo + 1) ** d * 3 ** d
    return total


def _validate_student(dims: Sequence[int], d0: int):
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ShapeError(f"invalid student dims {dims}")
    if dims[0] != d0:
        raise ShapeError(f"student reads {dims[0]} bits, data has {d0}")
    if dims[-1] != 1:
        raise ShapeError('student must have a single output')


def _neuron_outputs(sums: np.ndarray, d_prev: int) -> Iterator[Tuple[int, int, np.ndarray]]:
    """(bias, scalar, outputs) for every bias in range (ascending) and scalar in (-1, 0, 1)"""
    lo, hi = bias_range(d_prev)
    for b in range(lo, hi + 1):
        for g in (-1, 0, 1):
            yield b, g, (g * sums + b > 0)


def _table_ints(bits: np.ndarray) -> np.ndarray:
    """Rows of a (K x P) bit array as integers, bit x = column x (P <= 62)"""
    weights = np.left_shift(np.int64(1), np.arange(bits.shape[1], dtype=np.int64))
    return bits.astype(np.int64) @ weights


def _int_bits(values: np.ndarray, width: int) -> np.ndarray:
    return ((np.asarray(values, dtype=np.int64)[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(np.uint8)


@lru_cache(maxsize=None)
def _multisets(k: int, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nondecreasing index tuples of length d over range(k) and their orderings count"""
    combos = np.array(list(itertools.combinations_with_replacement(range(k), d)), dtype=np.int64)
    orders = np.empty(len(combos), dtype=np.int64)
    for i, combo in enumerate(combos):
        _, mult = np.unique(combo, return_counts=True)
        orders[i] = math.factorial(d) // math.prod(math.factorial(int(m)) for m in mult)
    return combos.reshape(-1, d), orders


def _aggregate(rows: List[np.ndarray], counts: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Sum counts of identical rows exactly (int64)"""
    keys = np.vstack(rows)
    weights = np.concatenate(counts)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind='stable')
    starts = np.flatnonzero(np.r_[True, np.diff(inverse[order]) != 0])
    return uniq, np.add.reduceat(weights[order], starts)


class FunctionHistogram:
    """
    Exact multiset of the functions computed by every parameter vector

    Layer states are multisets of neuron truth tables over all 2^d0
    inputs; a neuron's distribution of tables depends only on the multiset
    feeding it, so the enumeration walks distinct states, never single
    parameter vectors.
    """

    FLUSH_ROWS = 1 << 20

    def __init__(self, dims: Sequence[int], cap: Optional[float] = None):
        """
        Args:
            dims: Student architecture (d0, ..., 1), d0 <= 5
            cap: |Theta| limit (default LEARNING_CONFIG ENUMERATION_CAP)

        Raises:
            EnumerationCapError: |Theta| above the cap
        """
        self.dims = tuple(int(d) for d in dims)
        _validate_student(self.dims, self.dims[0])
        if self.dims[0] > 5:
            raise ShapeError('exact enumeration supports d0 <= 5')
        self.total = parameter_count(self.dims)
        cap = LEARNING_CONFIG['ENUMERATION_CAP'] if cap is None else cap
        if self.total > cap or self.total >= 2 ** 62:
            raise EnumerationCapError(f"|Theta| = {self.total:.3e} exceeds the cap {cap:.3e}; "
                                      f"use posterior_sample")
        self.n_inputs = 1 << self.dims[0]
        self.tables, self.counts = self._build()
        logger.info(f"Function histogram for {self.dims}: {len(self.tables)} functions, "
                    f"|Theta| = {self.total}")

    def _neuron_histogram(self, patterns: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Tables (as ints) and multiplicities of one neuron fed by the given patterns"""
        bits = _int_bits(patterns, self.n_inputs)
        d_prev = len(patterns)
        sums = all_inputs(d_prev).astype(np.int64) @ bits.astype(np.int64)
        outs = np.vstack([out for _, _, out in _neuron_outputs(sums, d_prev)])
        return np.unique(_table_ints(outs), return_counts=True)

    def _build(self) -> Tuple[np.ndarray, np.ndarray]:
        identity = _table_ints(all_inputs(self.dims[0]).T)
        states: Tuple[np.ndarray, np.ndarray] = (identity[None, :], np.ones(1, dtype=np.int64))
        depth = len(self.dims) - 1
        for l in range(1, depth + 1):
            width = self.dims[l]
            rows, counts, buffered = [], [], 0
            merged_rows, merged_counts = [], []
            for patterns, count in zip(*states):
                tables, mult = self._neuron_histogram(patterns)
                if l == depth:
                    rows.append(tables[:, None])
                    counts.append(int(count) * mult)
                    buffered += len(tables)
                else:
                    idx, orders = _multisets(len(tables), width)
                    rows.append(tables[idx])
                    counts.append(int(count) * orders * np.prod(mult[idx], axis=1))
                    buffered += len(idx)
                if buffered >= self.FLUSH_ROWS:
                    r, c = _aggregate(rows, counts)
                    merged_rows.append(r)
                    merged_counts.append(c)
                    rows, counts, buffered = [], [], 0
            states = _aggregate(merged_rows + rows, merged_counts + counts)
            logger.debug(f"layer {l}: {len(states[0])} distinct states")
        tables, counts = states
        return tables[:, 0], counts

    def truth_tables(self) -> np.ndarray:
        """(F x 2^d0) bit array of the distinct functions"""
        return _int_bits(self.tables, self.n_inputs)

    def consistent_mask(self, dataset: Dataset) -> np.ndarray:
        if dataset.N == 0:
            return np.ones(len(self.tables), dtype=bool)
        idx = dataset.indices()
        bits = (self.tables[:, None] >> idx[None, :]) & 1
        return np.all(bits == dataset.ys[None, :], axis=1)


@dataclass
class PosteriorSummary:
    """Exact posterior over interpolating parameter vectors"""

    interpolating: int
    total: int
    mean_risk: Optional[float]

    @property
    def p_s(self) -> float:
        return self.interpolating / self.total

    @property
    def zero(self) -> bool:
        return self.interpolating == 0

    def to_dict(self) -> Dict[str, Any]:
        return {'interpolating': self.interpolating, 'total': self.total, 'p_S': self.p_s,
                'zero': self.zero, 'mean_risk': self.mean_risk}


def posterior_enumerate(dataset: Dataset, dims: Sequence[int], distribution: Optional[DataDistribution] = None,
                        cap: Optional[float] = None, histogram: Optional[FunctionHistogram] = None,
                        risks: Optional[np.ndarray] = None) -> PosteriorSummary:
    """
    Exact posterior of the uniform prior conditioned on zero training error

    Args:
        dataset: Training set
        dims: Student architecture
        distribution: When given, the posterior mean population risk is computed
        cap: |Theta| limit
        histogram: Precomputed FunctionHistogram for dims
        risks: Precomputed risk of every histogram table under distribution

    Returns:
        PosteriorSummary; zero is set when no parameter vector interpolates
    """
    _validate_student(dims, dataset.d0)
    hist = histogram or FunctionHistogram(dims, cap)
    mask = hist.consistent_mask(dataset)
    weight = hist.counts[mask]
    interpolating = int(weight.sum())
    mean = None
    if distribution is not None and interpolating:
        if risks is None:
            risks = risk_of_tables(hist.truth_tables(), distribution)
        mean = float((weight.astype(np.float64) @ risks[mask]) / interpolating)
    return PosteriorSummary(interpolating=interpolating, total=hist.total, mean_risk=mean)


# ---------------------------------------------------------------------------
# Rejection sampling from the prior
# ---------------------------------------------------------------------------

def _draw_parameters(dims: Sequence[int], rng: np.random.Generator, batch: int):
    params = []
    for l in range(1, len(dims)):
        d_prev, d = dims[l - 1], dims[l]
        lo, hi = bias_range(d_prev)
        params.append((
            rng.integers(0, 2, size=(batch, d, d_prev), dtype=np.int64),
            rng.integers(lo, hi + 1, size=(batch, d), dtype=np.int64),
            rng.integers(-1, 2, size=(batch, d), dtype=np.int64),
        ))
    return params


def posterior_sample(dataset: Dataset, dims: Sequence[int], seed: int,
                     max_draws: Optional[int] = None) -> LearnedHypothesis:
    """
    Uniform prior draws until one interpolates the dataset

    Raises:
        SamplingBudgetError: No accepted draw within max_draws
            with the add-one acceptance estimate 1 / (draws + 2)
    """
    if not is_consistent(dataset):
        return STAR
    dims = [int(d) for d in dims]
    _validate_student(dims, dataset.d0)
    max_draws = max_draws or LEARNING_CONFIG['MAX_DRAWS']
    batch = LEARNING_CONFIG['SAMPLE_BATCH']
    rng = derive_rng(seed, 11)
    xs = dataset.xs.astype(np.int64)
    draws = 0
    while draws < max_draws:
        size = min(batch, max_draws - draws)
        params = _draw_parameters(dims, rng, size)
        h = np.broadcast_to(xs, (size,) + xs.shape)
        for w, b, g in params:
            sums = np.einsum('bnd,bkd->bnk', h, w)
            h = (g[:, None, :] * sums + b[:, None, :] > 0).astype(np.int64)
        ok = np.flatnonzero(np.all(h[:, :, 0] == dataset.ys[None, :], axis=1))
        if ok.size:
            i = int(ok[0])
            net = make_network([w[i] for w, _, _ in params], [b[i] for _, b, _ in params],
                               [g[i] for _, _, g in params])
            logger.debug(f"posterior sample accepted after {draws + i + 1} draws")
            return LearnedHypothesis(net)
        draws += size
    # zero accepts in draws tries
    estimate = 1 / (draws + 2)
    raise SamplingBudgetError(f"no interpolating draw in {draws} draws (acceptance ~ {estimate:.2e})",
                              acceptance_estimate=estimate, draws=draws)


# ---------------------------------------------------------------------------
# Min-size interpolation
# ---------------------------------------------------------------------------

def _first_witnesses(points: np.ndarray) -> Tuple[np.ndarray, List[Tuple[np.ndarray, int, int]]]:
    """
    Distinct single-neuron output patterns on the given inputs

    Parameters are visited in canonical order (weight rows in integer
    order, biases ascending, scalars -1, 0, 1); the first parameters
    producing each pattern are its witness.

    Returns:
        (K x M) pattern array and one (weights, bias, scalar) per pattern
    """
    d_prev = points.shape[1]
    rows = all_inputs(d_prev)
    sums = rows.astype(np.int64) @ points.T.astype(np.int64)
    seen: Dict[bytes, int] = {}
    patterns, witnesses = [], []
    for r, row in enumerate(rows):
        for b, g, out in _neuron_outputs(sums[r], d_prev):
            key = out.astype(np.uint8).tobytes()
            if key not in seen:
                seen[key] = len(patterns)
                patterns.append(out.astype(np.uint8))
                witnesses.append((row, b, g))
    return np.array(patterns, dtype=np.uint8).reshape(len(patterns), points.shape[0]), witnesses


def _output_bias(sums: np.ndarray, ys: np.ndarray, d_prev: int) -> Optional[Tuple[int, int, int]]:
    """
    First row of input sums an output neuron can separate

    Row r works with scalar g when some bias b in range gives
    1[g * s + b > 0] == y on every point.

    Args:
        sums: (K x M) input sums of the output neuron per candidate
        ys: (M,) labels

    Returns:
        (row, bias, scalar) with the smallest row, scalar order -1, 0, 1 and
        the smallest bias, or None
    """
    sums = np.atleast_2d(np.asarray(sums, dtype=np.int64))
    lo, hi = bias_range(d_prev)
    ones, zeros = ys == 1, ys == 0
    best = None
    for g in (-1, 0, 1):
        gs = g * sums
        b_min = np.full(len(sums), lo, dtype=np.int64)
        b_max = np.full(len(sums), hi, dtype=np.int64)
        if ones.any():
            b_min = np.maximum(b_min, -gs[:, ones].min(axis=1) + 1)
        if zeros.any():
            b_max = np.minimum(b_max, -gs[:, zeros].max(axis=1))
        ok = np.flatnonzero(b_min <= b_max)
        if ok.size and (best is None or ok[0] < best[0]):
            best = (int(ok[0]), int(b_min[ok[0]]), g)
    return best


def _architectures(d0: int, depth: int) -> Iterator[Tuple[int, ...]]:
    """Hidden widths (d_1, ..., d_(L-1)) in ascending w(d), ties in lexicographic order"""
    if depth == 1:
        yield ()
        return

    def widths(prev: int, left: int, budget: int) -> Iterator[Tuple[Tuple[int, ...], int]]:
        if left == 0:
            if prev <= budget:
                yield (), prev
            return
        d = 1
        while prev * d + d <= budget:
            for rest, cost in widths(d, left - 1, budget - prev * d):
                yield (d,) + rest, prev * d + cost
            d += 1

    target = sum([d0] + [1] * (depth - 1))
    while True:
        for hidden, cost in widths(d0, depth - 1, target):
            if cost == target:
                yield hidden
        target += 1


class MinSizeSearch:
    """
    Smallest-w(d) interpolator at a fixed depth

    Architectures are tried in ascending w(d). Depth two uses a dynamic
    program over the vectors of output-neuron input sums; deeper
    architectures walk multisets of hidden-layer patterns. Exhaustion of
    every smaller architecture certifies minimality.
    """

    def __init__(self, budget: Optional[int] = None):
        self.budget = budget or LEARNING_CONFIG['MINSIZE_STATE_BUDGET']
        self.states = 0

    def _charge(self, n: int):
        self.states += n
        if self.states > self.budget:
            raise BudgetExhaustedError(f"min-size search exceeded {self.budget} states")

    def search(self, dataset: Dataset, depth: int) -> LearnedHypothesis:
        if depth < 1:
            raise ShapeError('depth must be at least 1')
        if not is_consistent(dataset):
            return STAR
        points, ys = distinct_points(dataset)
        d0 = dataset.d0
        if depth == 1:
            net = self._single_neuron(points, ys, d0)
        elif depth == 2:
            net = self._depth_two(points, ys, d0)
        else:
            net = self._deep(points, ys, d0, depth)
        logger.info(f"Min-size interpolator: dims={net.dims}, w={net.stats().w}, states={self.states}")
        return LearnedHypothesis(net)

    def _single_neuron(self, points: np.ndarray, ys: np.ndarray, d0: int) -> Network:
        rows = all_inputs(d0)
        found = _output_bias(rows.astype(np.int64) @ points.T.astype(np.int64), ys, d0)
        if found is None:
            raise NoInterpolatorError('no depth-1 network interpolates the dataset; use depth >= 2')
        r, b, g = found
        return make_network([rows[r][None, :]], [[b]], [[g]])

    def _depth_two(self, points: np.ndarray, ys: np.ndarray, d0: int) -> Network:
        if len(points) == 0:
            return make_network([np.zeros((1, d0), dtype=np.int64), np.zeros((1, 1), dtype=np.int64)],
                                [[0], [0]], [[0], [0]])
        patterns, witnesses = _first_witnesses(points)
        m = points.shape[0]
        # layers[u]: distinct sum vectors of u neurons read by the output, with back-pointers
        layers = [np.zeros((1, m), dtype=np.int64)]
        backs: List[Tuple[np.ndarray, np.ndarray]] = [(np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))]
        for d1 in itertools.count(1):
            grown = (layers[-1][:, None, :] + patterns[None, :, :].astype(np.int64)).reshape(-1, m)
            uniq, first = np.unique(grown, axis=0, return_index=True)
            self._charge(len(uniq))
            layers.append(uniq)
            backs.append((first // len(patterns), first % len(patterns)))
            for used in range(d1 + 1):
                found = _output_bias(layers[used], ys, d1)
                if found:
                    return self._assemble_two(d0, d1, used, backs, witnesses, found)

    @staticmethod
    def _assemble_two(d0: int, d1: int, used: int, backs, witnesses, found) -> Network:
        idx, b, g = found
        chosen = []
        for u in range(used, 0, -1):
            parent, pattern = backs[u]
            chosen.append(int(pattern[idx]))
            idx = int(parent[idx])
        hidden = [witnesses[p] for p in chosen] + [witnesses[0]] * (d1 - used)
        w1 = np.array([row for row, _, _ in hidden], dtype=np.int64).reshape(d1, d0)
        w2 = np.array([[1] * used + [0] * (d1 - used)], dtype=np.int64)
        return make_network([w1, w2], [[hb for _, hb, _ in hidden], [b]],
                            [[hg for _, _, hg in hidden], [g]])

    def _deep(self, points: np.ndarray, ys: np.ndarray, d0: int, depth: int) -> Network:
        cache: Dict[Tuple[int, ...], list] = {}
        for hidden in _architectures(d0, depth):
            for state, params in self._states(points, hidden, cache):
                net = self._close(state, params, ys)
                if net is not None:
                    return net
        raise BudgetExhaustedError('architecture enumeration ended')

    def _states(self, points: np.ndarray, hidden: Tuple[int, ...], cache):
        """Distinct (pattern multiset, witness layers) after the hidden layers"""
        if hidden in cache:
            return cache[hidden]
        if len(hidden) == 1:
            feeds = [(points, [])]
        else:
            feeds = [(state.T, params) for state, params in self._states(points, hidden[:-1], cache)]
        width = hidden[-1]
        out, seen = [], set()
        for inputs, params in feeds:
            patterns, witnesses = _first_witnesses(inputs)
            idx, _ = _multisets(len(patterns), width)
            self._charge(len(idx))
            for combo in idx:
                state = patterns[combo]
                key = state.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                out.append((state, params + [[witnesses[int(c)] for c in combo]]))
        cache[hidden] = out
        return out

    @staticmethod
    def _close(state: np.ndarray, params, ys: np.ndarray) -> Optional[Network]:
        width = state.shape[0]
        subsets = all_inputs(width)
        found = _output_bias(subsets.astype(np.int64) @ state.astype(np.int64), ys, width)
        if found is None:
            return None
        r, b, g = found
        weights, biases, scalars = [], [], []
        for layer in params:
            weights.append(np.array([row for row, _, _ in layer], dtype=np.int64))
            biases.append([lb for _, lb, _ in layer])
            scalars.append([lg for _, _, lg in layer])
        weights.append(subsets[r][None, :].astype(np.int64))
        biases.append([b])
        scalars.append([g])
        return make_network(weights, biases, scalars)


def min_size_interpolator(dataset: Dataset, depth: int, budget: Optional[int] = None) -> LearnedHypothesis:
    """
    Interpolator of least total weight count at the given depth

    Returns:
        STAR on an inconsistent dataset, otherwise a verified interpolator

    Raises:
        BudgetExhaustedError: State budget ran out before an interpolator was found
        NoInterpolatorError: depth == 1 and no single neuron fits the dataset
    """
    result = MinSizeSearch(budget).search(dataset, depth)
    if not result.is_star and empirical_risk(result, dataset) != 0:
        raise BudgetExhaustedError('min-size witness failed to interpolate')
    return result


def constant_learner(dataset: Dataset) -> LearnedHypothesis:
    """Trivial reference rule: the constant-0 network (star on inconsistent data)"""
    if not is_consistent(dataset):
        return STAR
    return LearnedHypothesis(make_network([np.zeros((1, dataset.d0), dtype=np.int64)], [[0]], [[0]]))

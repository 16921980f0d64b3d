"""
Memorizer Service

Builds a threshold network consistent with a partial Boolean function:
an injective preprocessing map sends the N domain points to coordinates
of [0, R), the labels become a conjunction over the outputs of the
error-reduced generator, a seed satisfying it is searched for, and the
seed is hard-wired into a lookup network that feeds the compiled
generator. Datasets are interpolated by XOR-ing the teacher with a
memorizer of its label flips.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Any, Optional

import numpy as np

from config.settings import MEMORIZER_CONFIG
from services.bounds_service import binary_entropy
from services.gadget_service import (
    LookupReport, constant_network, find_injective_linear, find_sign_matrix,
    interval_lookup_network, xor_compose,
)
from services.hsg_service import Conjunction, HsgSeed, SeedSearch, kwise_compile
from services.learning_service import Dataset, empirical_risk, is_consistent
from services.network_service import Network, compose, evaluate_batch
from utils.errors import ConstructionError, InconsistentDatasetError, ShapeError
from utils.helpers import log2_binom, rows_to_ints

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PartialFunction:
    """f: {0,1}^d0 -> {0,1, *} given by its defined points"""

    domain: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.domain = np.asarray(self.domain, dtype=np.uint8)
        self.values = np.asarray(self.values, dtype=np.uint8).reshape(-1)
        if self.domain.ndim != 2 or self.domain.shape[0] != self.values.shape[0]:
            raise ShapeError('domain must be an (N x d0) array with one value per point')
        if self.domain.shape[0] == 0:
            raise ShapeError('partial function has an empty domain')
        if np.any(self.domain > 1) or np.any(self.values > 1):
            raise ShapeError('points and values must be bits')
        if len(np.unique(self.domain, axis=0)) != self.domain.shape[0]:
            raise ShapeError('domain points must be distinct')

    @property
    def d0(self) -> int:
        return self.domain.shape[1]

    @property
    def N(self) -> int:
        return self.domain.shape[0]

    @property
    def N1(self) -> int:
        return int(self.values.sum())

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> 'PartialFunction':
        """Distinct points of a consistent dataset with their labels"""
        if not is_consistent(dataset):
            raise InconsistentDatasetError('dataset assigns two labels to the same input')
        domain, first = np.unique(dataset.xs, axis=0, return_index=True)
        return cls(domain=domain, values=dataset.ys[first])


def staircase_parity(d0: int) -> PartialFunction:
    """
    Points 0^i 1^(d0-i), i = 0..d0, labelled by their parity

    Any network memorizing this instance has w(d) >= d0^2.
    """
    if d0 < 1:
        raise ShapeError('staircase needs d0 >= 1')
    domain = np.array([[0] * i + [1] * (d0 - i) for i in range(d0 + 1)], dtype=np.uint8)
    return PartialFunction(domain=domain, values=domain.sum(axis=1) % 2)


@dataclass
class BoundTerms:
    """Terms of the memorizer weight bound with the measured excess constant"""

    log2_binom: float
    hsg_term: float
    preprocessing_term: float
    entropy_term: float
    c_excess: Optional[float]

    @classmethod
    def measure(cls, w: int, N: int, N1: int, d0: int) -> 'BoundTerms':
        log_c = log2_binom(N, N1)
        log_n = math.log2(N) if N > 1 else 0.0
        hsg = (log_c ** 0.75) * log_n ** 2
        pre = d0 ** 2 * log_n
        denom = hsg + pre
        return cls(
            log2_binom=log_c,
            hsg_term=hsg,
            preprocessing_term=pre,
            entropy_term=N * binary_entropy(N1 / N),
            c_excess=(w - log_c) / denom if denom > 0 else None,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'log2_binom': self.log2_binom,
            'hsg_term': self.hsg_term,
            'preprocessing_term': self.preprocessing_term,
            'N_H_alpha': self.entropy_term,
            'c_excess': self.c_excess,
        }


@dataclass(eq=False)
class MemorizerReport:
    """Built network, its size and the construction record"""

    network: Network
    N: int
    N1: int
    d0: int
    consistent: bool
    bounds: BoundTerms
    shortcut: bool = False
    retries: int = 0
    params: Dict[str, Any] = field(default_factory=dict)
    lookup: Optional[LookupReport] = None
    seed: Optional[HsgSeed] = None

    @property
    def depth(self) -> int:
        return self.network.depth

    @property
    def dims(self):
        return self.network.dims

    @property
    def w(self) -> int:
        return self.network.stats().w

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'N': self.N,
            'N1': self.N1,
            'd0': self.d0,
            'depth': self.depth,
            'dims': list(self.dims),
            'w': self.w,
            'consistent': self.consistent,
            'constant_shortcut': self.shortcut,
            'retries': self.retries,
            'bound': self.bounds.to_dict(),
            'hsg': self.params,
        }
        if self.lookup is not None:
            data['lookup'] = self.lookup.to_dict()
        if self.seed is not None:
            data['seed'] = self.seed.to_text()
        return data

    def to_text(self) -> str:
        lines = [f"{key}: {value}" for key, value in self.to_dict().items() if key != 'seed']
        if self.seed is not None:
            lines.append('seed:')
            lines += ['  ' + line for line in self.seed.to_text().splitlines()]
        return '\n'.join(lines)


@dataclass(eq=False)
class InterpolatorReport:
    """XOR of a teacher and the memorizer of its label flips"""

    network: Network
    teacher_w: int
    memorizer: MemorizerReport
    flips: int
    train_risk: float

    def to_dict(self) -> Dict[str, Any]:
        N = self.memorizer.N
        eps_hat = self.flips / N
        return {
            'w_teacher': self.teacher_w,
            'w_memorizer': self.memorizer.w,
            'w_interpolator': self.network.stats().w,
            'dims': list(self.network.dims),
            'flips': self.flips,
            'N_H_eps_hat': N * binary_entropy(eps_hat),
            'train_risk': self.train_risk,
            'memorizer': self.memorizer.to_dict(),
        }


class MemorizerService:
    """
    Memorizer construction with a fixed configuration and master seed
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None,
                 ternary_first: Optional[bool] = None, max_retries: Optional[int] = None):
        """
        Initialize the memorizer service

        Args:
            config: MEMORIZER_CONFIG-style dict (defaults used when None)
            seed: Master seed (defaults to config SEED)
            ternary_first: Use the sign-matrix front end
            max_retries: Hash resamples per k in the seed search
        """
        self.config = dict(MEMORIZER_CONFIG if config is None else config)
        self.seed = self.config['SEED'] if seed is None else seed
        self.ternary_first = self.config['TERNARY_FIRST_LAYER'] if ternary_first is None else ternary_first
        self.max_retries = max_retries or self.config['MAX_RETRIES']
        self.search = SeedSearch(self.config)

    def build(self, f: PartialFunction) -> MemorizerReport:
        """
        Build and verify a network consistent with f

        Raises:
            SearchBudgetError: Seed search ran out of budget
            ConstructionError: The built network disagrees with f somewhere
        """
        N, N1, d0 = f.N, f.N1, f.d0
        if N1 in (0, N):
            net = constant_network(d0, 1 if N1 else 0)
            report = MemorizerReport(network=net, N=N, N1=N1, d0=d0, consistent=True, shortcut=True,
                                     bounds=BoundTerms.measure(net.stats().w, N, N1, d0))
            logger.info(f"Memorizer: constant {1 if N1 else 0} on N={N} points")
            return self._verify(report, f)

        front: Optional[Network] = None
        points = f.domain
        if self.ternary_first:
            front = find_sign_matrix(points, self.seed)
            points = evaluate_batch(front, points)
        inj = find_injective_linear(points, self.seed)
        R = 1 << inj.d_out

        v = Conjunction(rows_to_ints(inj.apply(points)), f.values, R)
        seed = self.search.search(v, N, self.seed, self.max_retries)
        params = seed.params

        lookup = interval_lookup_network(seed.breakpoints, seed.blocks, inj)
        generator = kwise_compile(seed.gen, seed.hash, threshold=params.threshold, block_bits=params.s)
        net = compose(lookup.network, generator)
        if front is not None:
            net = compose(front, net)

        report = MemorizerReport(
            network=net, N=N, N1=N1, d0=d0, consistent=True, retries=seed.retries,
            bounds=BoundTerms.measure(net.stats().w, N, N1, d0),
            params={**params.to_dict(), 'hash_bits': seed.hash.description_bits()},
            lookup=lookup, seed=seed,
        )
        logger.info(f"Memorizer: N={N}, N1={N1}, dims={net.dims}, w={report.w}, T={params.T}, "
                    f"a={params.a}, k={params.k}, retries={seed.retries}")
        return self._verify(report, f)

    @staticmethod
    def _verify(report: MemorizerReport, f: PartialFunction) -> MemorizerReport:
        out = evaluate_batch(report.network, f.domain)[:, 0]
        wrong = np.flatnonzero(out != f.values)
        if wrong.size:
            report.consistent = False
            raise ConstructionError(f"memorizer disagrees with f on {wrong.size} of {f.N} points")
        return report

    def interpolate(self, teacher: Network, dataset: Dataset) -> InterpolatorReport:
        """
        Interpolator teacher XOR memorizer(flips)

        Raises:
            InconsistentDatasetError: Two samples share an input with different labels
            ShapeError: Teacher is not a single-output network on d0 bits
        """
        if teacher.d_out != 1:
            raise ShapeError('teacher must have a single output')
        if teacher.d_in != dataset.d0:
            raise ShapeError(f"teacher reads {teacher.d_in} bits, dataset has {dataset.d0}")
        labels = PartialFunction.from_dataset(dataset)
        flips = labels.values ^ evaluate_batch(teacher, labels.domain)[:, 0]
        memo = self.build(PartialFunction(domain=labels.domain, values=flips))
        net = xor_compose(teacher, memo.network)
        risk = empirical_risk(net, dataset)
        if risk != 0:
            raise ConstructionError(f"interpolator has training risk {risk}")
        logger.info(f"Interpolator: {int(flips.sum())} flips, teacher w={teacher.stats().w}, "
                    f"dims={net.dims}")
        return InterpolatorReport(network=net, teacher_w=teacher.stats().w, memorizer=memo,
                                  flips=int(flips.sum()), train_risk=float(risk))


def build_memorizer(f: PartialFunction, config: Optional[Dict[str, Any]] = None,
                    seed: Optional[int] = None, ternary_first: Optional[bool] = None,
                    max_retries: Optional[int] = None) -> MemorizerReport:
    return MemorizerService(config, seed, ternary_first, max_retries).build(f)


def build_dataset_interpolator(teacher: Network, dataset: Dataset, config: Optional[Dict[str, Any]] = None,
                               seed: Optional[int] = None) -> Network:
    """Network with zero training error on a consistent dataset"""
    return MemorizerService(config, seed).interpolate(teacher, dataset).network

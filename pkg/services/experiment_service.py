"""
Experiment Service

Teacher/student runs over a grid of noise levels and sample sizes: each
trial draws a dataset conditioned on consistency, trains one of the
interpolating rules and records its population risk. Rows carry the
effective training flip rate and the closed-form reference curves.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Any, List, Optional, Tuple, Union

import numpy as np

from config.settings import EXPERIMENT_CONFIG, LEARNING_CONFIG, load_config
from services.bounds_service import curve_point, eps_tr_exact, eps_tr_mc, inconsistency_prob_exact
from services.learning_service import (
    NOISE_MODELS, DataDistribution, Dataset, FunctionHistogram, LearnedHypothesis, constant_learner,
    is_consistent, min_size_interpolator, population_risk_exact, population_risk_mc, posterior_enumerate,
    posterior_sample, risk_of_tables,
)
from services.network_service import Network, random_network, read_btn
from utils.errors import BtnError, EnumerationCapError, SamplingBudgetError, ShapeError, SupportTooLargeError
from utils.helpers import derive_rng

logger = logging.getLogger(__name__)

LEARNERS = ('posterior', 'minsize', 'constant')

CSV_COLUMNS = ('eps_star', 'n', 'trials', 'mean_risk', 'stderr', 'eps_tr', 'bayes',
               'independent_curve', 'arbitrary_bound', 'trivial', 'inconsistent_frac')


@dataclass
class ExperimentConfig:
    """Declarative description of one teacher/noise/learner experiment"""

    learner: str = 'posterior'
    teacher_file: str = ''
    teacher_dims: List[int] = field(default_factory=lambda: [3, 1])
    teacher_seed: int = 1
    d0: int = 3
    marginal: str = 'uniform'
    noise: str = 'independent'
    eps_grid: List[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4])
    n_grid: List[int] = field(default_factory=lambda: [10])
    trials: int = 200
    seed: int = 0
    student_dims: List[int] = field(default_factory=lambda: [3, 3, 2, 1])
    minsize_depth: int = 2
    enumeration_cap: float = 10 ** 13
    max_resamples: int = 1000
    max_workers: int = 4

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise ShapeError(f"unknown learner {self.learner!r}, expected one of {LEARNERS}")
        if self.noise not in NOISE_MODELS:
            raise ShapeError(f"unknown noise model {self.noise!r}")
        if not self.eps_grid or not self.n_grid:
            raise ShapeError('noise and sample-size grids must be nonempty')
        if any(not 0 <= e <= 0.5 for e in self.eps_grid):
            raise ShapeError('noise levels must lie in [0, 1/2]')
        if any(n < 1 for n in self.n_grid):
            raise ShapeError('sample sizes must be positive')
        if self.trials < 1:
            raise ShapeError('need at least one trial')
        if self.learner == 'posterior' and self.student_dims[0] != self.d0:
            raise ShapeError(f"student reads {self.student_dims[0]} bits, inputs have {self.d0}")

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> 'ExperimentConfig':
        """Build from an EXPERIMENT_CONFIG-style dict"""
        return cls(
            learner=config['LEARNER'],
            teacher_file=config['TEACHER_FILE'],
            teacher_dims=[int(d) for d in config['TEACHER_DIMS']],
            teacher_seed=int(config['TEACHER_SEED']),
            d0=int(config['D0']),
            marginal=str(config['MARGINAL']),
            noise=config['NOISE'],
            eps_grid=[float(e) for e in config['EPS_GRID']],
            n_grid=[int(n) for n in config['N_GRID']],
            trials=int(config['TRIALS']),
            seed=int(config['SEED']),
            student_dims=[int(d) for d in config['STUDENT_DIMS']],
            minsize_depth=int(config['MINSIZE_DEPTH']),
            enumeration_cap=float(config['ENUMERATION_CAP']),
            max_resamples=int(config['MAX_RESAMPLES']),
            max_workers=int(config['MAX_WORKERS']),
        )


def experiment_config_from_file(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_config(Path(path), EXPERIMENT_CONFIG))


def parse_marginal(text: str, d0: int) -> Optional[np.ndarray]:
    """'uniform' or 2^d0 comma separated point masses in integer order"""
    if text.strip().lower() == 'uniform':
        return None
    try:
        pmf = np.array([float(tok) for tok in text.replace(';', ',').split(',') if tok.strip()])
    except ValueError:
        raise ShapeError(f"bad marginal {text!r}")
    if pmf.shape != (1 << d0,):
        raise ShapeError(f"marginal needs {1 << d0} point masses, got {pmf.size}")
    return pmf


def load_teacher(config: ExperimentConfig) -> Network:
    if config.teacher_file:
        teacher = read_btn(config.teacher_file)
    else:
        if config.teacher_dims[0] != config.d0:
            raise ShapeError(f"teacher dims {config.teacher_dims} do not start with d0 = {config.d0}")
        teacher = random_network(config.teacher_dims, derive_rng(config.teacher_seed))
    if teacher.d_in != config.d0 or teacher.d_out != 1:
        raise ShapeError(f"teacher must map {config.d0} bits to one bit, has dims {teacher.dims}")
    return teacher


@dataclass
class TrialOutcome:
    risk: Optional[float]
    draws: int
    inconsistent: int
    error: Optional[str] = None


@dataclass
class ExperimentRow:
    """One (eps_star, N) cell of the result table"""

    eps_star: float
    n: int
    trials: int
    mean_risk: float
    stderr: float
    eps_tr: float
    bayes: float
    independent_curve: float
    arbitrary_bound: float
    trivial: float
    inconsistent_frac: float
    failures: int = 0

    def values(self) -> Tuple:
        return tuple(getattr(self, column) for column in CSV_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        data = dict(zip(CSV_COLUMNS, self.values()))
        data['failures'] = self.failures
        return data


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"


def format_csv(rows: List[ExperimentRow]) -> str:
    lines = [','.join(CSV_COLUMNS)]
    lines += [','.join(_fmt(v) for v in row.values()) for row in rows]
    return '\n'.join(lines) + '\n'


def write_csv(rows: List[ExperimentRow], path: Union[str, Path]):
    with open(path, 'w', newline='\n') as f:
        f.write(format_csv(rows))
    logger.info(f"Wrote {len(rows)} experiment rows to {path}")


class ExperimentService:
    """
    Runs the trial grid of one ExperimentConfig
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.teacher = load_teacher(config)
        self.pmf = parse_marginal(config.marginal, config.d0)
        self.histogram: Optional[FunctionHistogram] = None
        if config.learner == 'posterior':
            try:
                self.histogram = FunctionHistogram(config.student_dims, config.enumeration_cap)
            except (EnumerationCapError, ShapeError) as e:
                logger.info(f"Posterior by rejection sampling: {e}")

    def distribution(self, eps: float) -> DataDistribution:
        return DataDistribution(d0=self.config.d0, teacher=self.teacher, eps=eps,
                                noise=self.config.noise, pmf=self.pmf)

    def _population_risk(self, h: LearnedHypothesis, dist: DataDistribution, seed: int) -> float:
        try:
            return population_risk_exact(h, dist)
        except SupportTooLargeError:
            return population_risk_mc(h, dist, seed=seed)[0]

    def _learn(self, data: Dataset, dist: DataDistribution, risks: Optional[np.ndarray], seed: int) -> float:
        """Population risk of the configured rule trained on data"""
        cfg = self.config
        if cfg.learner == 'constant':
            return self._population_risk(constant_learner(data), dist, seed)
        if cfg.learner == 'minsize':
            h = min_size_interpolator(data, cfg.minsize_depth, LEARNING_CONFIG['MINSIZE_STATE_BUDGET'])
            return self._population_risk(h, dist, seed)
        if self.histogram is not None:
            summary = posterior_enumerate(data, cfg.student_dims, dist, histogram=self.histogram, risks=risks)
            if summary.zero:
                raise SamplingBudgetError('no student parameter vector interpolates the dataset')
            return summary.mean_risk
        h = posterior_sample(data, cfg.student_dims, seed, LEARNING_CONFIG['MAX_DRAWS'])
        return self._population_risk(h, dist, seed)

    def run_trial(self, eps_idx: int, n_idx: int, trial: int, dist: DataDistribution,
                  risks: Optional[np.ndarray]) -> TrialOutcome:
        n = self.config.n_grid[n_idx]
        rng = derive_rng(self.config.seed, eps_idx, n_idx, trial)
        inconsistent = 0
        for draw in range(1, self.config.max_resamples + 1):
            data = dist.sample(n, rng)
            if not is_consistent(data):
                inconsistent += 1
                continue
            learner_seed = int(rng.integers(0, 2 ** 31))
            try:
                risk = self._learn(data, dist, risks, learner_seed)
            except BtnError as e:
                logger.warning(f"trial {trial} (eps={dist.eps}, N={n}) failed: {e}")
                return TrialOutcome(None, draw, inconsistent, str(e))
            return TrialOutcome(risk, draw, inconsistent)
        logger.warning(f"trial {trial} (eps={dist.eps}, N={n}): no consistent dataset "
                       f"in {self.config.max_resamples} draws")
        return TrialOutcome(None, self.config.max_resamples, inconsistent, 'no consistent dataset')

    def _eps_tr(self, dist: DataDistribution, n: int, eps_idx: int, n_idx: int) -> Tuple[float, float]:
        """(effective flip rate, inconsistency probability)"""
        try:
            return eps_tr_exact(dist, n), inconsistency_prob_exact(dist, n)
        except SupportTooLargeError:
            rate, _ = eps_tr_mc(dist, n, seed=self.config.seed + 7919 * (eps_idx + 1) + n_idx)
            return rate, float('nan')

    def run(self) -> List[ExperimentRow]:
        cfg = self.config
        rows = []
        for eps_idx, eps in enumerate(cfg.eps_grid):
            dist = self.distribution(eps)
            risks = None
            if self.histogram is not None:
                risks = risk_of_tables(self.histogram.truth_tables(), dist)
            for n_idx, n in enumerate(cfg.n_grid):
                outcomes: List[Optional[TrialOutcome]] = [None] * cfg.trials
                with ThreadPoolExecutor(max_workers=cfg.max_workers) as executor:
                    future_to_trial = {
                        executor.submit(self.run_trial, eps_idx, n_idx, trial, dist, risks): trial
                        for trial in range(cfg.trials)
                    }
                    for future in as_completed(future_to_trial):
                        outcomes[future_to_trial[future]] = future.result()
                rows.append(self._summarize(eps, n, eps_idx, n_idx, dist, outcomes))
        return rows

    def _summarize(self, eps: float, n: int, eps_idx: int, n_idx: int, dist: DataDistribution,
                   outcomes: List[TrialOutcome]) -> ExperimentRow:
        risks = np.array([o.risk for o in outcomes if o.risk is not None], dtype=np.float64)
        failures = len(outcomes) - len(risks)
        draws = sum(o.draws for o in outcomes)
        inconsistent = sum(o.inconsistent for o in outcomes)
        mean = float(risks.mean()) if len(risks) else float('nan')
        stderr = float(risks.std(ddof=1) / math.sqrt(len(risks))) if len(risks) > 1 else 0.0
        eps_tr, _ = self._eps_tr(dist, n, eps_idx, n_idx)
        curves = curve_point(eps)
        row = ExperimentRow(
            eps_star=eps, n=n, trials=len(risks), mean_risk=mean, stderr=stderr, eps_tr=eps_tr,
            bayes=curves.bayes, independent_curve=curves.independent_curve,
            arbitrary_bound=curves.arbitrary_bound, trivial=curves.trivial,
            inconsistent_frac=inconsistent / draws if draws else 0.0, failures=failures,
        )
        logger.info(f"eps={eps:g} N={n}: mean risk {mean:.4f} +- {stderr:.4f} over {len(risks)} trials, "
                    f"eps_tr={eps_tr:.4f}, failures={failures}")
        return row


def run_experiment(config: ExperimentConfig) -> List[ExperimentRow]:
    """Result table of the configured experiment, deterministic in the master seed"""
    return ExperimentService(config).run()

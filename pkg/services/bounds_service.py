"""
Bounds Service

Closed-form curves (Bayes, independent-noise, arbitrary-noise, trivial),
the phi family and its tangent bound, noisy/clean risk conversion, and the
exact and Monte-Carlo probabilities of inconsistent datasets and of the
effective training flip rate.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Any, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config.settings import CURVE_CONFIG, LEARNING_CONFIG
from utils.errors import ShapeError, SupportTooLargeError
from utils.helpers import derive_rng

logger = logging.getLogger(__name__)


def binary_entropy(eps: float) -> float:
    """H(eps) in bits, H(0) = H(1) = 0"""
    if not 0 <= eps <= 1:
        raise ShapeError(f"entropy argument must lie in [0, 1], got {eps}")
    if eps in (0, 1):
        return 0.0
    return -eps * math.log2(eps) - (1 - eps) * math.log2(1 - eps)


def _check_phi_args(eps: float, t: float):
    if not 0 < eps < 0.5:
        raise ShapeError(f"phi needs 0 < eps < 1/2, got {eps}")
    if t <= 0:
        raise ShapeError(f"phi needs t > 0, got {t}")


def phi(eps: float, t: float) -> float:
    """eps^t / (eps^t + (1 - eps)^t): flip posterior of a point seen t times"""
    _check_phi_args(eps, t)
    ratio = ((1 - eps) / eps) ** t
    return 1.0 / (1.0 + ratio)


def phi_tangent_bound(eps: float, t: float) -> float:
    """Tangent of phi at t = 1, a lower bound for every t > 0"""
    _check_phi_args(eps, t)
    slope = eps * (1 - eps) * math.log(eps / (1 - eps))
    return eps + slope * (t - 1)


@dataclass(frozen=True)
class CurvePoint:
    """Reference risks at one noise level"""

    eps_star: float
    bayes: float
    independent_curve: float
    arbitrary_bound: float
    trivial: float = 0.5
    high_quantization: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'eps_star': self.eps_star,
            'bayes': self.bayes,
            'independent_curve': self.independent_curve,
            'arbitrary_bound': self.arbitrary_bound,
            'trivial': self.trivial,
        }
        if self.high_quantization is not None:
            data['high_quantization'] = self.high_quantization
        return data


def independent_curve(eps: float) -> float:
    return 2 * eps * (1 - eps)


def arbitrary_bound(eps: float) -> float:
    return 1 - 2 ** -binary_entropy(eps)


def high_quantization_bound(eps: float, q: float) -> float:
    """1 - Q^(-H(eps)) for weights quantized to Q levels"""
    if q < 2:
        raise ShapeError(f"quantization level must be at least 2, got {q}")
    return 1 - q ** -binary_entropy(eps)


def curve_point(eps: float, q: Optional[float] = None) -> CurvePoint:
    if not 0 <= eps <= 0.5:
        raise ShapeError(f"noise level must lie in [0, 1/2], got {eps}")
    return CurvePoint(
        eps_star=eps,
        bayes=eps,
        independent_curve=independent_curve(eps),
        arbitrary_bound=arbitrary_bound(eps),
        high_quantization=None if q is None else high_quantization_bound(eps, q),
    )


def tempered_curves(grid: Sequence[float], q: Optional[float] = None) -> List[CurvePoint]:
    return [curve_point(float(eps), q) for eps in grid]


def curve_grid(points: Optional[int] = None) -> np.ndarray:
    """Evenly spaced noise levels over [0, 1/2]"""
    return np.linspace(0.0, 0.5, points or CURVE_CONFIG['POINTS'])


class CleanRisk(NamedTuple):
    value: float
    clamped: bool


def noisy_to_clean(noisy_risk: float, eps: float) -> CleanRisk:
    """
    Risk against the clean teacher from risk against noisy labels

    Values outside [0, 1] are clamped and flagged.
    """
    if not 0 <= eps < 0.5:
        raise ShapeError(f"conversion needs 0 <= eps < 1/2, got {eps}")
    value = (noisy_risk - eps) / (1 - 2 * eps)
    if value < 0 or value > 1:
        logger.warning(f"clean risk {value:.6f} outside [0, 1], clamped")
        return CleanRisk(min(max(value, 0.0), 1.0), True)
    return CleanRisk(value, False)


def clean_to_noisy(clean_risk: float, eps: float) -> float:
    return eps + (1 - 2 * eps) * clean_risk


# ---------------------------------------------------------------------------
# Bound families with user constants
# ---------------------------------------------------------------------------

def minsize_bound_family(eps: float, delta: float) -> Dict[str, float]:
    """Min-size rule: reference curves shifted by a user-supplied slack delta"""
    return {
        'label': 'bound family',
        'independent': independent_curve(eps) + delta,
        'arbitrary': arbitrary_bound(eps) + delta,
    }


def posterior_bound_family(eps: float, c_rand: float) -> Dict[str, float]:
    """Posterior sampling: reference curves shifted by a user-supplied C_rand"""
    return {
        'label': 'bound family',
        'independent': independent_curve(eps) + c_rand,
        'arbitrary': arbitrary_bound(eps) + c_rand,
    }


def inconsistency_bound(n: int, d_max: float) -> float:
    """N^2 D_max / 2"""
    return 0.5 * n * n * d_max


# ---------------------------------------------------------------------------
# Exact probabilities over small supports
# ---------------------------------------------------------------------------

def _exponential_series(mass: float, q: float, n: int, shift: int = 0) -> np.ndarray:
    """
    sum_k (mass t)^k / k! * w_k, truncated at degree n

    w_k = q^(k+shift) with a shift, otherwise the all-flipped or all-clean
    probability q^k + (1-q)^k, which is 1 for an absent point (k = 0).
    """
    k = np.arange(n + 1, dtype=np.float64)
    base = np.array([mass ** int(j) / math.factorial(int(j)) for j in k])
    if shift:
        return base * q ** (k + shift)
    agree = q ** k + (1 - q) ** k
    agree[0] = 1.0
    return base * agree


def _truncated_product(series: Sequence[np.ndarray], n: int) -> np.ndarray:
    out = np.zeros(n + 1)
    out[0] = 1.0
    for s in series:
        out = np.convolve(out, s)[:n + 1]
    return out


def _exact_inputs(distribution, n: int) -> Tuple[np.ndarray, np.ndarray]:
    cap = LEARNING_CONFIG['EPS_TR_SUPPORT_CAP']
    if distribution.support_size > max(cap, 1) and distribution.pmf is None:
        raise SupportTooLargeError(f"support 2^{distribution.d0} above {cap}; use the Monte-Carlo variant")
    p = distribution.marginal()
    keep = p > 0
    if keep.sum() > cap or n > LEARNING_CONFIG['EPS_TR_N_CAP']:
        raise SupportTooLargeError(f"exact computation capped at support {cap} and "
                                   f"N = {LEARNING_CONFIG['EPS_TR_N_CAP']}; use the Monte-Carlo variant")
    return p[keep], distribution.flip_probs()[keep]


def consistency_prob_exact(distribution, n: int) -> float:
    """P(S consistent) for N i.i.d. samples"""
    p, q = _exact_inputs(distribution, n)
    poly = _truncated_product([_exponential_series(m, f, n) for m, f in zip(p, q)], n)
    return float(math.factorial(n) * poly[n])


def inconsistency_prob_exact(distribution, n: int) -> float:
    """
    P(two samples share an input with different labels)

    A sample is consistent iff each point's occurrences are all flipped or
    all clean, so P(consistent) = N! [t^N] prod_x sum_k (p_x t)^k/k!
    (q_x^k + (1 - q_x)^k).
    """
    return max(0.0, 1.0 - consistency_prob_exact(distribution, n))


def eps_tr_exact(distribution, n: int) -> float:
    """
    P(Y_1 flipped | S consistent)

    Conditioning on consistency, the first sample's point must have every
    one of its other occurrences flipped too.
    """
    p, q = _exact_inputs(distribution, n)
    full = [_exponential_series(m, f, n) for m, f in zip(p, q)]
    consistent = math.factorial(n) * _truncated_product(full, n)[n]
    joint = 0.0
    for x in range(len(p)):
        rest = full[:x] + full[x + 1:]
        own = _exponential_series(p[x], q[x], n - 1, shift=1)
        joint += p[x] * math.factorial(n - 1) * _truncated_product(rest + [own], n - 1)[n - 1]
    return joint / consistent


def _mc_trials(distribution, n: int, samples: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """(consistent flag, first-sample flip flag) per simulated dataset"""
    from services.learning_service import is_consistent

    rng = derive_rng(seed, 3)
    consistent = np.zeros(samples, dtype=bool)
    first_flip = np.zeros(samples, dtype=bool)
    for i in range(samples):
        data = distribution.sample(n, rng)
        consistent[i] = is_consistent(data)
        first_flip[i] = data.ys[0] != distribution.teacher_table()[int(data.indices()[0])]
    return consistent, first_flip


def inconsistency_prob_mc(distribution, n: int, samples: Optional[int] = None, seed: int = 0) -> Tuple[float, float]:
    """Monte-Carlo P(inconsistent S) with its standard error"""
    samples = samples or LEARNING_CONFIG['MC_SAMPLES']
    consistent, _ = _mc_trials(distribution, n, samples, seed)
    p = 1.0 - consistent.mean()
    return float(p), math.sqrt(p * (1 - p) / samples)


def eps_tr_mc(distribution, n: int, samples: Optional[int] = None, seed: int = 0) -> Tuple[float, float]:
    """Monte-Carlo eps_tr over consistent datasets with its standard error"""
    samples = samples or LEARNING_CONFIG['MC_SAMPLES']
    consistent, first_flip = _mc_trials(distribution, n, samples, seed)
    kept = int(consistent.sum())
    if kept == 0:
        return float('nan'), float('nan')
    rate = first_flip[consistent].mean()
    return float(rate), math.sqrt(rate * (1 - rate) / kept)

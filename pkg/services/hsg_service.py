"""
Hitting-set generator for conjunctions over Ber(alpha)^R

The pipeline:
    KwiseGen    - G_0(u)_zeta = lowest coefficient of sum_t p_t zeta^t in GF(2^n')
    phi         - each output coordinate z reads the logQ-bit word at
                  zeta = (z << s) | i and outputs 1[word <= alpha Q]
    AffineHash  - recycles one short seed w per block into a generator seed
    search_seed - greedy breakpoints, then per-block scans of w under a
                  sampled hash; every accepted seed is re-verified

kwise_compile turns (G_0, hash, phi) into a binary threshold network through
the circuit builder and lt_to_btn.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Any, List, Optional, Sequence, Set, Tuple

import numpy as np

from config.settings import MEMORIZER_CONFIG
from services.circuit_service import CONST0, AffineMap2, CircuitBuilder, LtCircuit, lt_to_btn
from services.field_service import FieldCtx, horner_array, power_arrays
from services.gadget_service import Interval, interval_terms
from services.network_service import Network
from utils.errors import ConstructionError, SearchBudgetError, ShapeError
from utils.helpers import ceil_log2, derive_rng, format_bits

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# k-wise uniform generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KwiseGen:
    """
    k-wise uniform generator with R = 2^n outputs and seed length k*n

    Seed bit t*n + j is the x^j coefficient of p_t.
    """

    ctx: FieldCtx
    k: int

    @classmethod
    def create(cls, n: int, k: int, seed: int = 0) -> 'KwiseGen':
        if k < 1:
            raise ShapeError('k must be at least 1')
        return cls(ctx=FieldCtx.create(n, k=k, seed=seed), k=k)

    @property
    def n(self) -> int:
        return self.ctx.n

    @property
    def R(self) -> int:
        return 1 << self.ctx.n

    @property
    def r(self) -> int:
        return self.k * self.ctx.n

    def coefficients(self, u: Sequence[int]) -> List[int]:
        u = np.asarray(u, dtype=np.uint8)
        if u.shape != (self.r,):
            raise ShapeError(f"seed must have {self.r} bits, got {u.shape}")
        coeffs = []
        for t in range(self.k):
            chunk = u[t * self.n:(t + 1) * self.n]
            coeffs.append(int(sum(int(b) << j for j, b in enumerate(chunk))))
        return coeffs

    def output_bits(self, u: Sequence[int], zetas: np.ndarray) -> np.ndarray:
        """G_0(u) at every index in zetas"""
        values = horner_array(self.ctx, self.coefficients(u), np.asarray(zetas, dtype=np.uint64))
        return (values & np.uint64(1)).astype(np.uint8)

    def seed_matrix(self, zetas: np.ndarray) -> np.ndarray:
        """
        GF(2) matrix V with G_0(u)_zeta = <V[zeta], u>

        Returns:
            (len(zetas) x r) uint8
        """
        zetas = np.asarray(zetas, dtype=np.uint64)
        if zetas.size and int(zetas.max()) >= self.R:
            raise ShapeError('generator index out of range')
        blocks = [self.ctx.lsb_rows(power) for power in power_arrays(self.ctx, zetas, self.k)]
        return np.hstack(blocks) if blocks else np.zeros((0, self.r), dtype=np.uint8)


def kwise_output_bit(g: KwiseGen, u: Sequence[int], z: int) -> int:
    """
    Output coordinate z of the generator on seed u

    Raises:
        ShapeError: z outside [0, R) or u of the wrong length
    """
    if not 0 <= z < g.R:
        raise ShapeError(f"index {z} outside [0, {g.R})")
    return int(g.output_bits(u, np.array([z], dtype=np.uint64))[0])


# ---------------------------------------------------------------------------
# Hash family
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class AffineHash:
    """Fully random GF(2)-affine map from a bits to r bits (pairwise independent family)"""

    map: AffineMap2

    @classmethod
    def sample(cls, a: int, r: int, rng: np.random.Generator) -> 'AffineHash':
        return cls(AffineMap2.random(a, r, rng))

    @property
    def a(self) -> int:
        return self.map.d_in

    @property
    def r(self) -> int:
        return self.map.d_out

    def apply(self, w: Sequence[int]) -> np.ndarray:
        return self.map.apply(np.asarray(w, dtype=np.uint8))

    def description_bits(self) -> int:
        return self.a * self.r + self.r


# ---------------------------------------------------------------------------
# Conjunctions and parameters
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Conjunction:
    """AND of literals y_index == bit over coordinates of [0, R)"""

    indices: np.ndarray
    bits: np.ndarray
    R: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        order = np.argsort(self.indices, kind='stable')
        self.indices, self.bits = self.indices[order], self.bits[order]
        if len(np.unique(self.indices)) != len(self.indices):
            raise ShapeError('conjunction indices must be distinct')
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.R):
            raise ShapeError(f"conjunction index outside [0, {self.R})")

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def ones(self) -> int:
        return int(self.bits.sum())

    def block(self, lower: int, upper: int) -> 'Conjunction':
        keep = (self.indices >= lower) & (self.indices < upper)
        return Conjunction(self.indices[keep], self.bits[keep], self.R)

    def accepts(self, y: np.ndarray) -> bool:
        return bool(np.all(np.asarray(y)[self.indices] == self.bits))


def conjunction_accept_prob(v: Conjunction, alpha: float) -> float:
    """log2 of P_{y ~ Ber(alpha)^R}(V(y) = 1)"""
    if not 0 < alpha < 1:
        raise ShapeError(f"alpha must lie in (0, 1), got {alpha}")
    ones = v.ones
    return ones * math.log2(alpha) + (len(v) - ones) * math.log2(1 - alpha)


def _literal_log_probs(v: Conjunction, alpha: float) -> np.ndarray:
    return np.where(v.bits == 1, math.log2(alpha), math.log2(1 - alpha))


def choose_breakpoints(v: Conjunction, alpha: float, T: int, log2_eps: Optional[float] = None,
                       tolerance: Optional[float] = None) -> List[int]:
    """
    Greedy breakpoints l_0..l_T

    Each block closes right after the literal at which its log-probability
    first drops to (1/T) log2 eps; the last breakpoint is R.

    Args:
        v: Conjunction
        alpha: Bernoulli parameter
        T: Number of blocks (power of two)
        log2_eps: Target; defaults to log2 of half the acceptance probability

    Returns:
        T + 1 breakpoints
    """
    if T < 1 or T & (T - 1):
        raise ShapeError(f"T = {T} is not a power of two")
    tol = MEMORIZER_CONFIG['LOG_TOLERANCE'] if tolerance is None else tolerance
    if log2_eps is None:
        log2_eps = conjunction_accept_prob(v, alpha) - 1
    threshold = log2_eps / T
    logs = _literal_log_probs(v, alpha)
    breaks = [0]
    acc = 0.0
    for idx, lp in zip(v.indices, logs):
        acc += lp
        if acc <= threshold + tol and len(breaks) < T:
            breaks.append(int(idx) + 1)
            acc = 0.0
    while len(breaks) < T + 1:
        breaks.append(v.R)
    breaks[-1] = v.R
    return breaks


def certify_breakpoints(v: Conjunction, alpha: float, breaks: Sequence[int], log2_eps: float) -> List[float]:
    """Per-block log-probabilities, checked against (1/T) log2 eps - log2 R"""
    T = len(breaks) - 1
    floor = log2_eps / T - math.log2(v.R)
    tol = MEMORIZER_CONFIG['LOG_TOLERANCE']
    logs = []
    for j in range(T):
        block = v.block(breaks[j], breaks[j + 1])
        lp = conjunction_accept_prob(block, alpha) if len(block) else 0.0
        if lp <= floor - tol:
            raise ConstructionError(f"block {j} has log-probability {lp:.3f} <= {floor:.3f}")
        logs.append(lp)
    return logs


@dataclass(frozen=True)
class HsgParams:
    """Sizes of the error-reduced generator for one conjunction"""

    R: int
    n: int
    N: int
    N1: int
    log2_eps: float
    T: int
    log2_eps0: float
    a: int
    log_q: int
    k: int

    @property
    def s(self) -> int:
        return ceil_log2(self.log_q)

    @property
    def field_degree(self) -> int:
        return self.n + self.s

    @property
    def threshold(self) -> int:
        """floor(alpha Q) with alpha = N1 / N"""
        return (self.N1 << self.log_q) // self.N

    @property
    def alpha(self) -> float:
        return self.N1 / self.N

    @classmethod
    def for_conjunction(cls, v: Conjunction, N: int, k: int) -> 'HsgParams':
        n = ceil_log2(v.R)
        N1 = v.ones
        alpha = N1 / N
        log2_eps = conjunction_accept_prob(v, alpha) - 1
        T = 1
        while T < (-log2_eps) ** 0.75:
            T *= 2
        log2_eps0 = log2_eps / T - math.log2(2 * v.R)
        a = max(1, math.floor(math.log2(v.R) - log2_eps0) + 1)
        log_q = 1
        while log_q < 2 * n + 2:
            log_q *= 2
        return cls(R=v.R, n=n, N=N, N1=N1, log2_eps=log2_eps, T=T, log2_eps0=log2_eps0,
                   a=a, log_q=log_q, k=k)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'R': self.R, 'N': self.N, 'N1': self.N1, 'log2_eps': self.log2_eps, 'T': self.T,
            'log2_eps0': self.log2_eps0, 'a': self.a, 'logQ': self.log_q, 'k': self.k,
        }


def word_indices(z: np.ndarray, params: HsgParams) -> np.ndarray:
    """Generator indices (z << s) | i for every z and i < logQ, row-major"""
    z = np.asarray(z, dtype=np.uint64)
    i = np.arange(params.log_q, dtype=np.uint64)
    return ((z[:, None] << np.uint64(params.s)) | i[None, :]).reshape(-1)


def _word_values(bits: np.ndarray, log_q: int) -> np.ndarray:
    """(B x L*logQ) bits -> (B x L) words, bit i = 0 most significant"""
    shaped = bits.reshape(bits.shape[0], -1, log_q).astype(np.uint64)
    weights = np.left_shift(np.uint64(1), np.arange(log_q - 1, -1, -1, dtype=np.uint64))
    return (shaped * weights).sum(axis=2, dtype=np.uint64)


def block_accepts(bits: np.ndarray, block: Conjunction, params: HsgParams) -> np.ndarray:
    """Which rows of generator bits satisfy every literal of the block"""
    words = _word_values(bits, params.log_q)
    ones = words <= np.uint64(params.threshold)
    return np.all(ones == block.bits[None, :].astype(bool), axis=1)


def generator_outputs(gen: KwiseGen, params: HsgParams, u: np.ndarray, z: np.ndarray) -> np.ndarray:
    """The Ber(alpha)-style output bits y_z = phi(word_z) on seed u"""
    bits = gen.output_bits(u, word_indices(z, params))
    words = _word_values(bits[None, :], params.log_q)[0]
    return (words <= np.uint64(params.threshold)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Seed search
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class HsgSeed:
    """Hash, one a-bit seed per block, and the breakpoints"""

    hash: AffineHash
    blocks: List[np.ndarray]
    breakpoints: List[int]
    params: HsgParams
    gen: KwiseGen
    retries: int = 0

    def generator_seed(self, j: int) -> np.ndarray:
        return self.hash.apply(self.blocks[j])

    def outputs(self, z: np.ndarray) -> np.ndarray:
        """y_z for the given coordinates, each read through its block's seed"""
        z = np.asarray(z, dtype=np.int64)
        out = np.zeros(len(z), dtype=np.uint8)
        for j in range(len(self.blocks)):
            sel = (z >= self.breakpoints[j]) & (z < self.breakpoints[j + 1])
            if np.any(sel):
                out[sel] = generator_outputs(self.gen, self.params, self.generator_seed(j), z[sel])
        return out

    def to_text(self) -> str:
        lines = [f"hash {self.hash.a} -> {self.hash.r}"]
        lines += [format_bits(row) for row in self.hash.map.matrix]
        lines.append('offset ' + format_bits(self.hash.map.offset))
        lines += [f"w{j} " + format_bits(w) for j, w in enumerate(self.blocks)]
        lines.append('breakpoints ' + ' '.join(str(b) for b in self.breakpoints))
        lines.append(f"field {self.gen.ctx.modulus:#x} k {self.gen.k}")
        return '\n'.join(lines)


class SeedSearch:
    """
    Constructive seed search for one conjunction

    Blocks are checked for feasibility under a uniform generator seed; an
    infeasible block raises k (doubling up to KWISE_K_MAX). For each
    sampled hash every block is scanned over random w in batches, using the
    fact that generator bits are affine in w.
    """

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.log_tolerance = config['LOG_TOLERANCE']

    def _block_rates(self, gen: KwiseGen, params: HsgParams, blocks: List[Conjunction],
                     rng: np.random.Generator) -> List[float]:
        samples = self.config['FEASIBILITY_SAMPLES']
        rates = []
        for block in blocks:
            if not len(block):
                rates.append(1.0)
                continue
            v = gen.seed_matrix(word_indices(block.indices, params)).astype(np.float32)
            hits = 0
            batch = self.config['BLOCK_SCAN_BATCH']
            for start in range(0, samples, batch):
                u = rng.integers(0, 2, size=(min(batch, samples - start), gen.r)).astype(np.float32)
                bits = (u @ v.T).astype(np.int64) & 1
                hits += int(block_accepts(bits, block, params).sum())
            rates.append(hits / samples)
        return rates

    def _scan_block(self, hash_: AffineHash, gen: KwiseGen, params: HsgParams, block: Conjunction,
                    v: np.ndarray, rng: np.random.Generator) -> Tuple[Optional[np.ndarray], int]:
        if not len(block):
            return np.zeros(params.a, dtype=np.uint8), 0
        a_mat = hash_.map.matrix.astype(np.int64)
        f = ((v.astype(np.int64) @ a_mat) & 1).astype(np.float32)
        f0 = (v.astype(np.int64) @ hash_.map.offset.astype(np.int64)) & 1
        batch = self.config['BLOCK_SCAN_BATCH']
        limit = self.config['BLOCK_SCAN_LIMIT']
        scanned = 0
        exhaustive = params.a <= 20 and (1 << params.a) <= limit
        while scanned < limit:
            if exhaustive:
                idx = np.arange(scanned, min(scanned + batch, 1 << params.a), dtype=np.int64)
                if idx.size == 0:
                    break
                shifts = np.arange(params.a - 1, -1, -1, dtype=np.int64)
                w = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
            else:
                w = rng.integers(0, 2, size=(batch, params.a)).astype(np.uint8)
            bits = ((w.astype(np.float32) @ f.T).astype(np.int64) + f0[None, :]) & 1
            ok = np.flatnonzero(block_accepts(bits, block, params))
            scanned += len(w)
            if ok.size:
                return w[ok[0]], scanned
        return None, scanned

    def search(self, v: Conjunction, N: int, seed: int, max_retries: Optional[int] = None) -> HsgSeed:
        """
        Find a seed whose generator output satisfies every literal of v

        Args:
            v: Conjunction over [0, R)
            N: Number of domain points (alpha = ones / N)
            seed: Master RNG seed
            max_retries: Hash resamples per k

        Returns:
            Verified HsgSeed

        Raises:
            SearchBudgetError: Every k up to KWISE_K_MAX failed
        """
        max_retries = max_retries or self.config['MAX_RETRIES']
        k = self.config['KWISE_K']
        diagnostics: Dict[str, Any] = {'attempts': []}
        total_retries = 0
        while k <= self.config['KWISE_K_MAX']:
            params = HsgParams.for_conjunction(v, N, k)
            breaks = choose_breakpoints(v, params.alpha, params.T, params.log2_eps, self.log_tolerance)
            certify_breakpoints(v, params.alpha, breaks, params.log2_eps)
            gen = KwiseGen.create(params.field_degree, k, seed=0)
            blocks = [v.block(breaks[j], breaks[j + 1]) for j in range(params.T)]
            rng = derive_rng(seed, k)

            rates = self._block_rates(gen, params, blocks, rng)
            logger.debug(f"k={k}: block feasibility rates {[round(r, 4) for r in rates]}")
            if min(rates) == 0.0:
                logger.info(f"Seed search: a block is unreachable at k={k}, raising k")
                diagnostics['attempts'].append({'k': k, 'feasibility': rates})
                k *= 2
                continue

            matrices = [gen.seed_matrix(word_indices(b.indices, params)) if len(b) else None for b in blocks]
            hit_rates: List[float] = []
            for retry in range(1, max_retries + 1):
                total_retries += 1
                hash_ = AffineHash.sample(params.a, gen.r, rng)
                found, hit_rates = [], []
                for block, mat in zip(blocks, matrices):
                    w, scanned = self._scan_block(hash_, gen, params, block, mat, rng)
                    hit_rates.append(0.0 if w is None else 1.0 / max(scanned, 1))
                    if w is None:
                        break
                    found.append(w)
                if len(found) < len(blocks):
                    logger.debug(f"hash {retry} failed at block {len(found)}")
                    continue
                result = HsgSeed(hash=hash_, blocks=found, breakpoints=breaks, params=params,
                                 gen=gen, retries=total_retries)
                if not v.accepts(self._expand(result, v)):
                    raise ConstructionError('accepted seed failed direct generator verification')
                logger.info(f"Seed search: T={params.T}, a={params.a}, k={k}, "
                            f"logQ={params.log_q}, hashes tried={retry}")
                return result
            diagnostics['attempts'].append({'k': k, 'feasibility': rates, 'last_hit_rates': hit_rates,
                                            'hashes': max_retries})
            logger.info(f"Seed search: {max_retries} hashes failed at k={k}, raising k")
            k *= 2
        raise SearchBudgetError('seed search exhausted its budget', diagnostics)

    @staticmethod
    def _expand(result: HsgSeed, v: Conjunction) -> np.ndarray:
        y = np.zeros(v.R, dtype=np.uint8)
        y[v.indices] = result.outputs(v.indices)
        return y


def search_seed(v: Conjunction, N: int, seed: int, config: Optional[Dict[str, Any]] = None,
                max_retries: Optional[int] = None) -> HsgSeed:
    """Functional wrapper over SeedSearch with MEMORIZER_CONFIG defaults"""
    return SeedSearch(config or MEMORIZER_CONFIG).search(v, N, seed, max_retries)


# ---------------------------------------------------------------------------
# Compilation to a threshold network
# ---------------------------------------------------------------------------

def _mask(row: np.ndarray, start: int = 0) -> int:
    mask = 0
    for j in np.flatnonzero(row):
        mask |= 1 << (start + int(j))
    return mask


def kwise_circuit(gen: KwiseGen, hash_: AffineHash, threshold: Optional[int] = None,
                  block_bits: int = 0) -> Tuple[AffineMap2, LtCircuit]:
    """
    Circuit for (w, z) -> G_0(hash(w)) read at z, optionally through phi

    Without a threshold the single output is G_0(hash(w))_z for a full
    n-bit index z. With one, z has n - block_bits bits and the output is
    1[word <= threshold] where word bit i (most significant first) is
    G_0(hash(w))_((z << block_bits) | i).

    Writing zeta = Z + I_i with Z = z << block_bits, every power splits as
    zeta^t = sum over t' contained in t of Z^t' I_i^(t - t'). Terms with
    |t'| <= 1 are linear in z; higher ones multiply Frobenius powers of Z,
    which the builder shares across all i.
    """
    ctx, k, n = gen.ctx, gen.k, gen.n
    a = hash_.a
    nz = n - block_bits
    if nz < 1:
        raise ShapeError('index part of zeta must have at least one bit')
    builder = CircuitBuilder(a + nz)

    # z_q (bit q of the integer z) sits at input a + nz - 1 - q
    def z_input(q: int) -> int:
        return a + nz - 1 - q

    A = hash_.map.matrix.astype(np.int64)
    c = hash_.map.offset.astype(np.int64)
    P = [A[t * n:(t + 1) * n] for t in range(k)]
    p0 = [c[t * n:(t + 1) * n] for t in range(k)]

    def frobenius_signals(m: int) -> List[int]:
        """Bits of (z << block_bits)^(2^m) as affine signals over z"""
        sigs = []
        for j in range(n):
            mask = 0
            for q in range(nz):
                if (ctx.frobenius(1 << (q + block_bits), m) >> j) & 1:
                    mask |= 1 << z_input(q)
            sigs.append(builder.affine(mask))
        return sigs

    # x^i * x^j mod E, and LSB(x^j * x^q) indexed [q][j]
    reduced = [[ctx.mul(1 << i, 1 << j) for j in range(n)] for i in range(n)]
    lsb_table = ctx.lsb_rows(np.array([1 << q for q in range(n)], dtype=np.uint64))

    def product_sets(x_sigs: List[int], y_sigs: List[int]) -> List[Set[int]]:
        """Bits of x*y mod E as XOR-sets of AND gates"""
        out: List[Set[int]] = [set() for _ in range(n)]
        for i in range(n):
            for j in range(n):
                g = builder.AND([x_sigs[i], y_sigs[j]])
                if g == CONST0:
                    continue
                for q in range(n):
                    if (reduced[i][j] >> q) & 1:
                        out[q] ^= {g}
        return out

    def lsb_projection(sets: List[Set[int]]) -> List[int]:
        """Signals for (LSB(x^j * y))_j given the bits of y as XOR-sets"""
        out = []
        for j in range(n):
            acc: Set[int] = set()
            for q in range(n):
                if lsb_table[q][j]:
                    acc ^= sets[q]
            out.append(builder.parity(sorted(acc)))
        return out

    y_cache: Dict[int, List[int]] = {}

    def y_signals(tp: int) -> List[int]:
        """Signals of M * Z^tp for |tp| >= 2"""
        if tp in y_cache:
            return y_cache[tp]
        factors = [frobenius_signals(m) for m in range(tp.bit_length()) if (tp >> m) & 1]
        while len(factors) > 2:
            paired = []
            for idx in range(0, len(factors) - 1, 2):
                sets = product_sets(factors[idx], factors[idx + 1])
                paired.append([builder.parity(list(s)) for s in sets])
            if len(factors) % 2:
                paired.append(factors[-1])
            factors = paired
        sets = product_sets(factors[0], factors[1])
        y_cache[tp] = lsb_projection(sets)
        return y_cache[tp]

    def q_affine(i_elem: int, tp: int) -> Tuple[np.ndarray, np.ndarray]:
        """q_{i,tp}(w) = sum over t containing tp of p_t * I^(t - tp), as (n x a) matrix and offset"""
        mat = np.zeros((n, a), dtype=np.int64)
        off = np.zeros(n, dtype=np.int64)
        for t in range(tp, k):
            if t & tp != tp:
                continue
            power = ctx.pow(i_elem, t - tp) if (t - tp) else 1
            if power == 0:
                continue
            mul = ctx.mul_matrix(power).astype(np.int64)
            mat = (mat + mul @ P[t]) & 1
            off = (off + mul @ p0[t]) & 1
        return mat, off

    word_len = (1 << block_bits) if threshold is not None else 1
    bits = []
    for i in range(word_len):
        terms: List[int] = []
        for tp in range(k):
            mat, off = q_affine(i, tp)
            if not mat.any() and not off.any():
                continue
            weight = bin(tp).count('1')
            if weight == 0:
                terms.append(builder.affine(_mask(mat[0]), int(off[0])))
            elif weight == 1:
                m = tp.bit_length() - 1
                for q in range(nz):
                    ell = ctx.lsb_rows(np.array([ctx.frobenius(1 << (q + block_bits), m)], dtype=np.uint64))[0]
                    coef_row = (ell.astype(np.int64) @ mat) & 1
                    coef_off = int(ell.astype(np.int64) @ off) & 1
                    coef = builder.affine(_mask(coef_row), coef_off)
                    terms.append(builder.AND([builder.input_bit(z_input(q)), coef]))
            else:
                ys = y_signals(tp)
                for j in range(n):
                    coef = builder.affine(_mask(mat[j]), int(off[j]))
                    terms.append(builder.AND([coef, ys[j]]))
        bits.append(builder.parity(terms))

    if threshold is None:
        out = bits[0]
    else:
        Q = 1 << word_len
        upper = min(threshold + 1, Q)
        literals = [builder.literal_and([(bits[p], v) for p, v in term])
                    for term in interval_terms(Interval(0, upper), Q)]
        out = builder.OR(literals)
    return builder.compile([out])


def kwise_compile(gen: KwiseGen, hash_: AffineHash, threshold: Optional[int] = None,
                  block_bits: int = 0) -> Network:
    """
    Network computing (w, z) -> G_0(hash(w))_z (or phi of the word at z)

    See kwise_circuit for the input layout.
    """
    c0, c1 = kwise_circuit(gen, hash_, threshold, block_bits)
    net = lt_to_btn(c0, c1)
    logger.debug(f"kwise_compile: k={gen.k}, n={gen.n}, depth {net.depth}, dims {net.dims}")
    return net

"""
Explicit threshold-network constructions

Parity and GF(2)-affine layers, the two-input XOR network, identity
elongation, XOR composition of two networks, interval comparison DNFs, the
depth-six constant-on-intervals lookup network, and the randomized injective
preprocessing maps (linear over GF(2), or a single sign-weight layer).
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import GADGET_CONFIG
from services.circuit_service import AffineMap2, LtCircuit, LtLayer, parity_block
from services.network_service import Layer, Network, compose, evaluate_batch, make_network
from utils.errors import SearchBudgetError, ShapeError
from utils.helpers import ceil_log2, derive_rng

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ParityFragment:
    """
    One hidden layer plus a summation offset

    1^T layer(x) + offset equals the parity of x (or its negation).
    """

    layer: Network
    offset: int

    def value(self, xs: np.ndarray) -> np.ndarray:
        return evaluate_batch(self.layer, xs).sum(axis=1).astype(np.int64) + self.offset


def parity_network(d: int, negate: bool = False) -> ParityFragment:
    """
    Parity layer of width d + 2

    Args:
        d: Input width (>= 1)
        negate: Build the (x, 1)-padded block, whose sum encodes NOT parity

    Returns:
        ParityFragment with offset -ceil(m / 2), m = d (+1 when negated)
    """
    if d < 1:
        raise ShapeError('parity needs at least one input')
    rows, biases, scalars, kappa = parity_block(range(d), 1 if negate else 0, pad_to=d + 2)
    layer = Layer.from_index_rows(d, rows, biases, scalars)
    return ParityFragment(layer=Network((layer,)), offset=-kappa)


def affine_network(m: AffineMap2) -> Network:
    """
    Depth-two network computing x -> A x + c mod 2

    Every output row gets its own parity block of d + 2 neurons; the output
    neuron subtracts the block's constant kappa.
    """
    d = m.d_in
    rows, biases, scalars = [], [], []
    out_rows, out_bias = [], []
    for support, off in m.rows():
        r, b, g, kappa = parity_block(support, off, pad_to=d + 2)
        start = len(rows)
        rows += r
        biases += b
        scalars += g
        out_rows.append(list(range(start, start + len(r))))
        out_bias.append(-kappa)
    hidden = Layer.from_index_rows(d, rows, biases, scalars)
    output = Layer.from_index_rows(len(rows), out_rows, out_bias, [1] * m.d_out)
    return Network((hidden, output))


def xor_gadget() -> Network:
    """Two-input XOR: OR and NAND hidden neurons feeding an AND"""
    return make_network(
        weights=[np.array([[1, 1], [1, 1]]), np.array([[1, 1]])],
        biases=[[0, 2], [-1]],
        scalars=[[1, -1], [1]],
    )


def identity_chain(depth: int) -> Network:
    """Width-one network of the given depth computing the identity on one bit"""
    if depth < 1:
        raise ShapeError('identity chain needs depth >= 1')
    return make_network([np.array([[1]])] * depth, [[0]] * depth, [[1]] * depth)


def constant_network(d0: int, value: int) -> Network:
    """Single neuron with zero scalar: outputs value on every input"""
    return make_network([np.zeros((1, d0), dtype=np.int64)], [[1 if value else 0]], [[0]])


def elongate(net: Network, depth: int) -> Network:
    """Append identity layers until the network has the given depth"""
    if net.depth > depth:
        raise ShapeError(f"cannot shorten a depth-{net.depth} network to {depth}")
    if net.depth == depth:
        return net
    if net.d_out != 1:
        raise ShapeError('only single-output networks can be elongated')
    return compose(net, identity_chain(depth - net.depth))


def _block_diagonal(a: Layer, b: Layer) -> Layer:
    wa, wb = a.dense(), b.dense()
    w = np.zeros((wa.shape[0] + wb.shape[0], wa.shape[1] + wb.shape[1]), dtype=np.int64)
    w[:wa.shape[0], :wa.shape[1]] = wa
    w[wa.shape[0]:, wa.shape[1]:] = wb
    return Layer.from_dense(w, np.concatenate([a.bias, b.bias]), np.concatenate([a.scalars, b.scalars]))


def xor_compose(h1: Network, h2: Network) -> Network:
    """
    Network computing h1(x) XOR h2(x)

    The shallower network is elongated with identity layers; both first
    layers read x side by side, later layers are block diagonal, and the
    XOR gadget sits on top (widths 2 then 1).

    Raises:
        ShapeError: Input widths differ or an output is not a single bit
    """
    if h1.d_in != h2.d_in:
        raise ShapeError(f"input widths differ: {h1.d_in} vs {h2.d_in}")
    if h1.d_out != 1 or h2.d_out != 1:
        raise ShapeError('xor_compose needs single-output networks')
    depth = max(h1.depth, h2.depth)
    h1, h2 = elongate(h1, depth), elongate(h2, depth)

    first_a, first_b = h1.layers[0], h2.layers[0]
    w = np.vstack([first_a.dense(), first_b.dense()])
    layers = [Layer.from_dense(w, np.concatenate([first_a.bias, first_b.bias]),
                               np.concatenate([first_a.scalars, first_b.scalars]))]
    for la, lb in zip(h1.layers[1:], h2.layers[1:]):
        layers.append(_block_diagonal(la, lb))
    layers.extend(xor_gadget().layers)
    net = Network(tuple(layers), ternary_first=h1.ternary_first or h2.ternary_first,
                  wide_bias=h1.wide_bias or h2.wide_bias)
    logger.debug(f"xor_compose: {h1.dims} (+) {h2.dims} -> {net.dims}")
    return net


# ---------------------------------------------------------------------------
# Interval comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """[lower, upper) inside [0, R)"""

    lower: int
    upper: int

    def validate(self, R: int):
        if R < 1 or R & (R - 1):
            raise ShapeError(f"R = {R} is not a power of two")
        if not 0 <= self.lower <= self.upper <= R:
            raise ShapeError(f"invalid interval [{self.lower}, {self.upper}) for R = {R}")

    def contains(self, z: int) -> bool:
        return self.lower <= z < self.upper


Term = Tuple[Tuple[int, int], ...]  # ((bit position, required value), ...), position 0 = MSB


def _below_terms(r: int, nbits: int) -> List[Term]:
    """z < r: agree with r above a 1-bit of r and hold 0 there"""
    terms = []
    for p in range(nbits):
        if (r >> (nbits - 1 - p)) & 1:
            prefix = tuple((q, (r >> (nbits - 1 - q)) & 1) for q in range(p))
            terms.append(prefix + ((p, 0),))
    return terms


def _above_terms(m: int, nbits: int) -> List[Term]:
    """z > m: agree with m above a 0-bit of m and hold 1 there"""
    terms = []
    for p in range(nbits):
        if not (m >> (nbits - 1 - p)) & 1:
            prefix = tuple((q, (m >> (nbits - 1 - q)) & 1) for q in range(p))
            terms.append(prefix + ((p, 1),))
    return terms


def interval_terms(interval: Interval, R: int) -> List[Term]:
    """
    DNF terms of the indicator of an interval over log R bits (MSB first)

    An empty list is the constant 0; a single empty term is the constant 1.
    """
    interval.validate(R)
    nbits = ceil_log2(R)
    lo, hi = interval.lower, interval.upper
    if lo >= hi:
        return []
    if lo == 0 and hi == R:
        return [()]
    if lo == 0:
        return _below_terms(hi, nbits)
    if hi == R:
        return _above_terms(lo - 1, nbits)
    terms, seen = [], set()
    for a in _below_terms(hi, nbits):
        for b in _above_terms(lo - 1, nbits):
            merged: Dict[int, int] = dict(a)
            clash = False
            for pos, val in b:
                if merged.get(pos, val) != val:
                    clash = True
                    break
                merged[pos] = val
            if clash:
                continue
            term = tuple(sorted(merged.items()))
            if term not in seen:
                seen.add(term)
                terms.append(term)
    return terms


def comparison_dnf(interval: Interval, R: int) -> LtCircuit:
    """
    Depth-two AND/OR circuit for the indicator of an interval

    Args:
        interval: [lower, upper)
        R: Power of two; inputs are log R bits, most significant first

    Returns:
        LtCircuit over log R inputs
    """
    nbits = max(1, ceil_log2(R))
    terms = interval_terms(interval, R)
    rows, biases = [], []
    for term in terms:
        idx = np.array([p for p, _ in term], dtype=np.int64)
        w = np.array([1 if v else -1 for _, v in term], dtype=np.int64)
        rows.append((idx, w))
        biases.append(1 - sum(1 for _, v in term if v))
    if not rows:
        rows, biases = [(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))], [0]
    or_row = (np.arange(len(rows), dtype=np.int64), np.ones(len(rows), dtype=np.int64))
    circuit = LtCircuit(d_in=nbits, layers=[
        LtLayer(rows=rows, bias=np.array(biases, dtype=np.int64)),
        LtLayer(rows=[or_row], bias=np.array([0], dtype=np.int64)),
    ])
    return circuit


# ---------------------------------------------------------------------------
# Constant-on-intervals lookup
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LookupReport:
    network: Network
    weight_count: int
    leading_term: int
    slack: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dims': list(self.network.dims),
            'w': self.weight_count,
            'aT': self.leading_term,
            'slack': self.slack,
        }


def negation_layer(rows: Sequence[Sequence[int]]) -> Tuple[List[List[int]], List[int], List[int]]:
    """
    NOR neurons (gamma = -1, b = 1) over index rows

    A neuron reading one input is its negation. Returns (rows, biases,
    scalars) ready to extend the arguments of Layer.from_index_rows.
    """
    return [list(r) for r in rows], [1] * len(rows), [-1] * len(rows)


def _affine_with_negations(m: AffineMap2) -> Tuple[Layer, Layer]:
    """Layers 1-2: z = m(x) followed by NOT z, each through its own parity block"""
    rows, biases, scalars = [], [], []
    out_rows, out_bias = [], []
    for negate in (0, 1):
        for support, off in m.rows():
            r, b, g, kappa = parity_block(support, off ^ negate)
            start = len(rows)
            rows += r
            biases += b
            scalars += g
            out_rows.append(list(range(start, start + len(r))))
            out_bias.append(-kappa)
    if not rows:
        rows, biases, scalars = [[]], [0], [0]
    hidden = Layer.from_index_rows(m.d_in, rows, biases, scalars)
    return hidden, Layer.from_index_rows(len(rows), out_rows, out_bias, [1] * len(out_rows))


def interval_lookup_network(breakpoints: Sequence[int], table: Sequence[Sequence[int]],
                            m: AffineMap2) -> LookupReport:
    """
    Depth-six network computing x -> (g(z), z) with z = m(x)

    g(z) = table[j] for the unique j with breakpoints[j] <= z < breakpoints[j+1].
    Layers: (1-2) z and NOT z; (3) interval DNF terms and a z relay;
    (4) the bits of j and their negations, z relay; (5) one AND per block
    index j, z relay; (6) the a output bits as ORs of the selected blocks
    (weight matrix = table), z relay.

    Args:
        breakpoints: 0 = l_0 <= ... <= l_T = R, T and R powers of two
        table: T words of a bits each
        m: Affine map to log R bits (most significant first)

    Returns:
        LookupReport with the network and its weight accounting
    """
    T = len(breakpoints) - 1
    nbits = m.d_out
    R = 1 << nbits
    if T < 1 or T & (T - 1):
        raise ShapeError(f"number of blocks T = {T} is not a power of two")
    if breakpoints[0] != 0 or breakpoints[-1] != R or any(
            breakpoints[i] > breakpoints[i + 1] for i in range(T)):
        raise ShapeError(f"breakpoints must rise from 0 to R = {R}")
    if len(table) != T:
        raise ShapeError(f"table has {len(table)} words for {T} blocks")
    a = len(table[0]) if T else 0
    if a < 1 or any(len(word) != a for word in table):
        raise ShapeError('table words must share a positive width')
    log_t = ceil_log2(T)

    hidden, zlayer = _affine_with_negations(m)
    # layer 2 outputs: z_0..z_(n-1), then NOT z_0..NOT z_(n-1)

    def literal(pos: int, value: int) -> int:
        return pos if value else nbits + pos

    # layer 3: unique DNF terms of every interval, then z relay
    term_index: Dict[Term, int] = {}
    interval_term_ids: List[List[int]] = []
    rows3, bias3 = [], []
    for j in range(T):
        ids = []
        for term in interval_terms(Interval(breakpoints[j], breakpoints[j + 1]), R):
            if term not in term_index:
                term_index[term] = len(rows3)
                rows3.append([literal(p, v) for p, v in term])
                bias3.append(1 - len(term))
            ids.append(term_index[term])
        interval_term_ids.append(ids)
    n_terms = len(rows3)
    rows3 += [[q] for q in range(nbits)]
    bias3 += [0] * nbits
    layer3 = Layer.from_index_rows(2 * nbits, rows3, bias3, [1] * len(rows3))

    # layer 4: bits of j and their negations, then z relay
    rows4, bias4, scal4 = [], [], []
    for i in range(log_t):
        members = sorted({t for j in range(T) if (j >> (log_t - 1 - i)) & 1 for t in interval_term_ids[j]})
        rows4.append(members)
        bias4.append(0)
        scal4.append(1)
    neg_rows, neg_bias, neg_scal = negation_layer(rows4[:log_t])
    rows4 += neg_rows
    bias4 += neg_bias
    scal4 += neg_scal
    rows4 += [[n_terms + q] for q in range(nbits)]
    bias4 += [0] * nbits
    scal4 += [1] * nbits
    layer4 = Layer.from_index_rows(len(rows3), rows4, bias4, scal4)

    # layer 5: one AND per block index, then z relay
    rows5, bias5, scal5 = [], [], []
    for j in range(T):
        lits = [i if (j >> (log_t - 1 - i)) & 1 else log_t + i for i in range(log_t)]
        if lits:
            rows5.append(lits)
            bias5.append(1 - log_t)
            scal5.append(1)
        else:
            rows5.append([])
            bias5.append(1)
            scal5.append(0)
    rows5 += [[2 * log_t + q] for q in range(nbits)]
    bias5 += [0] * nbits
    scal5 += [1] * nbits
    layer5 = Layer.from_index_rows(len(rows4), rows5, bias5, scal5)

    # layer 6: output word bits as ORs over the table, then z
    rows6 = [[j for j in range(T) if table[j][b]] for b in range(a)]
    rows6 += [[T + q] for q in range(nbits)]
    layer6 = Layer.from_index_rows(len(rows5), rows6, [0] * len(rows6), [1] * len(rows6))

    net = Network((hidden, zlayer, layer3, layer4, layer5, layer6))
    w = net.stats().w
    report = LookupReport(network=net, weight_count=w, leading_term=a * T, slack=w - a * T)
    logger.debug(f"interval lookup: T={T}, R={R}, a={a}, dims={net.dims}, w={w}")
    return report


def direct_lookup(breakpoints: Sequence[int], table: Sequence[Sequence[int]], z: int) -> Sequence[int]:
    for j in range(len(breakpoints) - 1):
        if breakpoints[j] <= z < breakpoints[j + 1]:
            return table[j]
    raise ShapeError(f"index {z} outside the breakpoints")


# ---------------------------------------------------------------------------
# Injective preprocessing
# ---------------------------------------------------------------------------

def _is_injective(images: np.ndarray) -> bool:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    return len({row.tobytes() for row in images}) == images.shape[0]


def injective_width(n_points: int) -> int:
    """2 * ceil(log2 N) output bits (at least 1)"""
    return max(1, 2 * ceil_log2(n_points))


def find_injective_linear(domain: np.ndarray, seed: int, budget: Optional[int] = None) -> AffineMap2:
    """
    Random GF(2)-linear map injective on the domain

    Args:
        domain: (N x d0) distinct points
        seed: RNG seed
        budget: Resampling budget (default from GADGET_CONFIG)

    Returns:
        AffineMap2 with zero offset and 2 ceil(log N) rows
    """
    domain = np.asarray(domain, dtype=np.uint8)
    budget = budget or GADGET_CONFIG['RETRY_BUDGET']
    n_points, d0 = domain.shape
    width = injective_width(n_points)
    rng = derive_rng(seed, 1)
    for attempt in range(1, budget + 1):
        m = AffineMap2.linear(rng.integers(0, 2, size=(width, d0)))
        if n_points == 1 or _is_injective(m.apply(domain)):
            logger.debug(f"injective map to {width} bits after {attempt} draws")
            return m
    raise SearchBudgetError(f"no injective linear map after {budget} draws",
                            {'draws': budget, 'width': width})


def sign_matrix_width(d0: int, n_points: int, c: Optional[float] = None) -> int:
    c = GADGET_CONFIG['SIGN_MATRIX_C'] if c is None else c
    return max(1, math.ceil(c * math.sqrt(d0) * max(1.0, math.log2(max(n_points, 2)))))


def find_sign_matrix(domain: np.ndarray, seed: int, c: Optional[float] = None,
                     budget: Optional[int] = None) -> Network:
    """
    Single ternary layer x -> 1[W x > 0], W in {-1, +1}, injective on the domain

    Returns:
        Depth-one Network with ternary_first set
    """
    domain = np.asarray(domain, dtype=np.uint8)
    budget = budget or GADGET_CONFIG['RETRY_BUDGET']
    n_points, d0 = domain.shape
    width = sign_matrix_width(d0, n_points, c)
    rng = derive_rng(seed, 2)
    for attempt in range(1, budget + 1):
        w = rng.choice(np.array([-1, 1]), size=(width, d0))
        net = make_network([w], [np.zeros(width, dtype=np.int64)], [np.ones(width, dtype=np.int64)])
        if n_points == 1 or _is_injective(evaluate_batch(net, domain)):
            logger.debug(f"sign matrix of width {width} after {attempt} draws")
            return net
    raise SearchBudgetError(f"no injective sign matrix after {budget} draws",
                            {'draws': budget, 'width': width})

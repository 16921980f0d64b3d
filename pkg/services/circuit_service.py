"""
Integer-weight threshold circuits and their simulation by binary networks

Circuits here read the outputs of a GF(2)-affine stage C0 and compute with
gates 1[sum w_i y_i + b > 0] whose weights are arbitrary integers. The
builder hash-conses gates, folds constants and levelizes with relay gates;
lt_to_btn turns (C0, C1) into a binary threshold network one layer deeper
than C1, duplicating wires for |w| > 1 and realizing every C0 output as a
block of parity helper neurons.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from services.network_service import Layer, Network
from utils.errors import ConstructionError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class AffineMap2:
    """x -> A x + c over GF(2)"""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=np.uint8) & 1
        self.matrix = np.asarray(self.matrix, dtype=np.uint8) & 1
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.offset.shape[0]:
            raise ShapeError('affine map matrix and offset disagree')

    @property
    def d_in(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def d_out(self) -> int:
        return int(self.matrix.shape[0])

    def apply(self, xs: np.ndarray) -> np.ndarray:
        """Apply to a bit vector or an (B x d) batch"""
        xs = np.asarray(xs, dtype=np.int64)
        out = (xs @ self.matrix.T.astype(np.int64) + self.offset.astype(np.int64)) & 1
        return out.astype(np.uint8)

    @classmethod
    def random(cls, d_in: int, d_out: int, rng: np.random.Generator) -> 'AffineMap2':
        return cls(rng.integers(0, 2, size=(d_out, d_in)), rng.integers(0, 2, size=d_out))

    @classmethod
    def linear(cls, matrix: np.ndarray) -> 'AffineMap2':
        matrix = np.asarray(matrix, dtype=np.uint8)
        return cls(matrix, np.zeros(matrix.shape[0], dtype=np.uint8))

    def rows(self) -> List[Tuple[np.ndarray, int]]:
        return [(np.flatnonzero(self.matrix[r]), int(self.offset[r])) for r in range(self.d_out)]

    def to_dict(self) -> Dict[str, object]:
        return {
            'rows': [''.join(str(int(v)) for v in row) for row in self.matrix],
            'offset': ''.join(str(int(v)) for v in self.offset),
        }


@dataclass(eq=False)
class LtLayer:
    """Gates as sparse rows: (source indices, integer weights) plus integer biases"""

    rows: List[Tuple[np.ndarray, np.ndarray]]
    bias: np.ndarray

    @property
    def width(self) -> int:
        return len(self.rows)


@dataclass(eq=False)
class LtCircuit:
    """
    Layered threshold circuit with unbounded integer weights

    Gate j of layer t computes 1[sum_i w_i y_i + b_j > 0] over the outputs y
    of layer t-1 (layer 0 being the circuit's d_in inputs). Size is the sum
    of absolute weights.
    """

    d_in: int
    layers: List[LtLayer]

    def __post_init__(self):
        width = self.d_in
        for t, layer in enumerate(self.layers, start=1):
            if layer.width == 0:
                raise ShapeError(f"circuit layer {t} is empty")
            if len(layer.bias) != layer.width:
                raise ShapeError(f"circuit layer {t} bias length mismatch")
            for idx, w in layer.rows:
                if len(idx) != len(w) or (len(idx) and (min(idx) < 0 or max(idx) >= width)):
                    raise ShapeError(f"circuit layer {t} reads outside its {width} inputs")
            width = layer.width

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def d_out(self) -> int:
        return self.layers[-1].width

    @property
    def size(self) -> int:
        return int(sum(np.abs(w).sum() for layer in self.layers for _, w in layer.rows))

    @classmethod
    def from_dense(cls, d_in: int, weights: Sequence[np.ndarray], biases: Sequence[Sequence[int]]) -> 'LtCircuit':
        layers = []
        for w, b in zip(weights, biases):
            w = np.asarray(w, dtype=np.int64)
            rows = [(np.flatnonzero(row), row[np.flatnonzero(row)]) for row in w]
            layers.append(LtLayer(rows=rows, bias=np.asarray(b, dtype=np.int64)))
        return cls(d_in=d_in, layers=layers)

    def evaluate_batch(self, ys: np.ndarray) -> np.ndarray:
        h = np.asarray(ys, dtype=np.int64)
        if h.ndim == 1:
            h = h[None, :]
        if h.shape[1] != self.d_in:
            raise ShapeError(f"circuit expects {self.d_in} inputs")
        for layer in self.layers:
            out = np.empty((h.shape[0], layer.width), dtype=np.int64)
            for j, (idx, w) in enumerate(layer.rows):
                out[:, j] = (h[:, idx] @ w + layer.bias[j]) > 0
            h = out
        return h.astype(np.uint8)


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------

CONST0 = -1
CONST1 = -2


@dataclass
class _Gate:
    terms: Tuple[Tuple[int, int], ...]
    bias: int
    depth: int


class CircuitBuilder:
    """
    Incremental construction of (C0, C1) pairs

    Signals are ints: affine signals and gates share one id space, CONST0
    and CONST1 are the constants. Identical gates and affine rows are
    shared; gates whose inputs are constant are folded.
    """

    def __init__(self, d_in: int):
        self.d_in = d_in
        self._affine: Dict[Tuple[int, int], int] = {}
        self._affine_rows: Dict[int, Tuple[int, int]] = {}
        self._gates: Dict[int, _Gate] = {}
        self._gate_keys: Dict[Tuple, int] = {}
        self._next = 0

    def _new_id(self) -> int:
        self._next += 1
        return self._next - 1

    def depth(self, sig: int) -> int:
        if sig in self._gates:
            return self._gates[sig].depth
        return 0

    def is_affine(self, sig: int) -> bool:
        return sig in self._affine_rows

    def affine(self, mask: int, offset: int = 0) -> int:
        """Signal for the parity of the masked inputs XOR offset"""
        offset &= 1
        if mask == 0:
            return CONST1 if offset else CONST0
        if mask >> self.d_in:
            raise ShapeError('affine mask references a missing input')
        key = (mask, offset)
        if key not in self._affine:
            sig = self._new_id()
            self._affine[key] = sig
            self._affine_rows[sig] = key
        return self._affine[key]

    def input_bit(self, j: int) -> int:
        return self.affine(1 << j)

    def gate(self, terms: Sequence[Tuple[int, int]], bias: int) -> int:
        """Signal 1[sum w * sig + bias > 0], constants folded"""
        acc: Dict[int, int] = {}
        for sig, w in terms:
            if w == 0 or sig == CONST0:
                continue
            if sig == CONST1:
                bias += w
                continue
            acc[sig] = acc.get(sig, 0) + w
        items = tuple(sorted((s, w) for s, w in acc.items() if w != 0))
        pos = sum(w for _, w in items if w > 0)
        neg = sum(w for _, w in items if w < 0)
        if bias + pos <= 0:
            return CONST0
        if bias + neg > 0:
            return CONST1
        if len(items) == 1 and items[0][1] == 1 and bias == 0:
            return items[0][0]  # identity gate
        key = (items, bias)
        if key not in self._gate_keys:
            sig = self._new_id()
            depth = 1 + max(self.depth(s) for s, _ in items)
            self._gates[sig] = _Gate(terms=items, bias=bias, depth=depth)
            self._gate_keys[key] = sig
        return self._gate_keys[key]

    def NOT(self, sig: int) -> int:
        if sig == CONST0:
            return CONST1
        if sig == CONST1:
            return CONST0
        if self.is_affine(sig):
            mask, offset = self._affine_rows[sig]
            return self.affine(mask, offset ^ 1)
        return self.gate([(sig, -1)], 1)

    def AND(self, sigs: Sequence[int]) -> int:
        if any(s == CONST0 for s in sigs):
            return CONST0
        sigs = sorted(set(s for s in sigs if s != CONST1))
        if not sigs:
            return CONST1
        return self.gate([(s, 1) for s in sigs], 1 - len(sigs))

    def literal_and(self, literals: Sequence[Tuple[int, int]]) -> int:
        """AND of signals required to equal given values, negations as -1 weights"""
        terms, required = [], 0
        for sig, value in literals:
            if sig in (CONST0, CONST1):
                if (sig == CONST1) != bool(value):
                    return CONST0
                continue
            if value:
                terms.append((sig, 1))
                required += 1
            else:
                terms.append((sig, -1))
        if not terms:
            return CONST1
        return self.gate(terms, 1 - required)

    def OR(self, sigs: Sequence[int]) -> int:
        if any(s == CONST1 for s in sigs):
            return CONST1
        sigs = sorted(set(s for s in sigs if s != CONST0))
        if not sigs:
            return CONST0
        if len(sigs) == 1:
            return sigs[0]
        return self.gate([(s, 1) for s in sigs], 0)

    def parity(self, sigs: Sequence[int]) -> int:
        """
        XOR of signals

        Affine signals are merged into a single affine row; the rest are
        combined by threshold counters 1[sum >= h] and an alternating sum.
        """
        mask, offset = 0, 0
        rest: Dict[int, int] = {}
        for s in sigs:
            if s == CONST0:
                continue
            if s == CONST1:
                offset ^= 1
            elif self.is_affine(s):
                m, o = self._affine_rows[s]
                mask ^= m
                offset ^= o
            else:
                rest[s] = rest.get(s, 0) ^ 1
        gates = sorted(s for s, odd in rest.items() if odd)
        merged = self.affine(mask, offset)
        if merged != CONST0:
            gates.append(merged)
        if not gates:
            return CONST0
        if len(gates) == 1:
            return gates[0]
        m = len(gates)
        counters = [self.gate([(s, 1) for s in gates], 1 - h) for h in range(1, m + 1)]
        return self.gate([(c, 1 if h % 2 == 0 else -1) for h, c in enumerate(counters)], 0)

    def compile(self, outputs: Sequence[int]) -> Tuple[AffineMap2, LtCircuit]:
        """
        Levelize the gates reachable from outputs

        Returns:
            (C0, C1): C0 lists the affine rows used, C1 has every output at
            its last layer, in order
        """
        reach = set()
        stack = [s for s in outputs if s >= 0]
        while stack:
            s = stack.pop()
            if s in reach:
                continue
            reach.add(s)
            if s in self._gates:
                stack.extend(src for src, _ in self._gates[s].terms)
        depth = max([1] + [self.depth(s) for s in outputs if s >= 0])

        affine_ids = sorted(s for s in reach if s in self._affine_rows)
        affine_pos = {s: i for i, s in enumerate(affine_ids)}
        matrix = np.zeros((max(1, len(affine_ids)), self.d_in), dtype=np.uint8)
        offset = np.zeros(max(1, len(affine_ids)), dtype=np.uint8)
        for i, s in enumerate(affine_ids):
            mask, off = self._affine_rows[s]
            for j in range(self.d_in):
                matrix[i, j] = (mask >> j) & 1
            offset[i] = off

        # signals present at each level: level -> {sig: column}
        levels: List[Dict[int, int]] = [dict(affine_pos)] + [dict() for _ in range(depth)]
        rows: List[List[Tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(depth + 1)]
        biases: List[List[int]] = [[] for _ in range(depth + 1)]

        def place(level: int, key, terms: Sequence[Tuple[int, int]], bias: int) -> int:
            col = len(rows[level])
            idx = np.array([c for c, _ in terms], dtype=np.int64)
            w = np.array([wt for _, wt in terms], dtype=np.int64)
            rows[level].append((idx, w))
            biases[level].append(bias)
            if key is not None:
                levels[level][key] = col
            return col

        def at(sig: int, level: int) -> int:
            """Column of sig at level, adding relays as needed"""
            if sig in levels[level]:
                return levels[level][sig]
            src_level = self.depth(sig)
            if src_level >= level:
                raise ConstructionError(f"signal {sig} needed at level {level} but lives at {src_level}")
            prev = at(sig, level - 1)
            return place(level, sig, [(prev, 1)], 0)

        gate_ids = sorted((s for s in reach if s in self._gates), key=lambda s: (self._gates[s].depth, s))
        for s in gate_ids:
            g = self._gates[s]
            if g.depth == depth:
                continue  # only outputs live at the last level
            terms = [(at(src, g.depth - 1), w) for src, w in g.terms]
            place(g.depth, s, terms, g.bias)

        out_rows, out_bias = [], []
        for s in outputs:
            if s == CONST0 or s == CONST1:
                terms, bias = [], 1 if s == CONST1 else 0
            elif s in self._gates and self._gates[s].depth == depth:
                g = self._gates[s]
                terms, bias = [(at(src, depth - 1), w) for src, w in g.terms], g.bias
            else:
                terms, bias = [(at(s, depth - 1), 1)], 0
            out_rows.append((np.array([c for c, _ in terms], dtype=np.int64),
                             np.array([w for _, w in terms], dtype=np.int64)))
            out_bias.append(bias)

        layers = []
        for level in range(1, depth):
            if not rows[level]:
                place(level, None, [], 0)
            layers.append(LtLayer(rows=rows[level], bias=np.array(biases[level], dtype=np.int64)))
        layers.append(LtLayer(rows=out_rows, bias=np.array(out_bias, dtype=np.int64)))
        circuit = LtCircuit(d_in=matrix.shape[0], layers=layers)
        logger.debug(f"compiled circuit: {len(affine_ids)} affine rows, depth {circuit.depth}, "
                     f"widths {[l.width for l in layers]}, size {circuit.size}")
        return AffineMap2(matrix, offset), circuit


# ---------------------------------------------------------------------------
# Simulation by a binary threshold network
# ---------------------------------------------------------------------------

def parity_block(support: Sequence[int], offset: int, pad_to: int = 0) -> Tuple[List[Sequence[int]], List[int], List[int], int]:
    """
    Helper neurons whose outputs sum to kappa + (parity of x_S XOR offset)

    For s = sum_S x + offset and every odd i <= m = |S| + offset the block has
    phi_{>=i} = 1[s >= i] and phi_{<=i} = 1[s <= i]; phi_{<=m} is always 1 and
    becomes a constant neuron. kappa = ceil(m / 2).

    Returns:
        (rows, biases, scalars, kappa), padded with inert neurons to pad_to
    """
    support = list(support)
    m = len(support) + offset
    rows, biases, scalars = [], [], []
    for i in range(1, m + 1, 2):
        rows.append(support)
        biases.append(offset - i + 1)
        scalars.append(1)
        if i == m:
            rows.append([])
            biases.append(1)
            scalars.append(0)
        else:
            rows.append(support)
            biases.append(i - offset + 1)
            scalars.append(-1)
    while len(rows) < pad_to:
        rows.append([])
        biases.append(0)
        scalars.append(0)
    return rows, biases, scalars, (m + 1) // 2


def _orientation(weights: np.ndarray) -> int:
    """+1 if the gate needs no more negated copies with scalar +1 than with -1"""
    neg_needed = int(-weights[weights < 0].sum())
    pos_needed = int(weights[weights > 0].sum())
    return 1 if neg_needed <= pos_needed else -1


def lt_to_btn(c0: AffineMap2, c1: LtCircuit) -> Network:
    """
    Simulate C1 o C0 by a binary threshold network of depth C1.depth + 1

    Every source y feeding a gate with weight w appears as |w| copies: plain
    copies when the gate's orientation agrees with the sign of w, negated
    copies otherwise. Biases absorb the copies' constant offsets.

    Args:
        c0: Affine stage
        c1: Threshold circuit over c0's outputs

    Returns:
        Network with h(x) = C1(C0(x)) for every x
    """
    if c0.d_out != c1.d_in:
        raise ShapeError(f"affine stage has {c0.d_out} outputs, circuit reads {c1.d_in}")

    # fold constant affine rows into the first circuit layer
    affine_rows = c0.rows()
    constant = {j: off for j, (idx, off) in enumerate(affine_rows) if len(idx) == 0}
    first = c1.layers[0]
    first_rows, first_bias = [], []
    for (idx, w), b in zip(first.rows, first.bias):
        keep = np.array([j not in constant for j in idx], dtype=bool)
        folded = int(sum(int(wt) * constant[int(j)] for j, wt in zip(idx, w) if int(j) in constant))
        first_rows.append((idx[keep], w[keep]))
        first_bias.append(int(b) + folded)
    layers = [LtLayer(rows=first_rows, bias=np.array(first_bias, dtype=np.int64))] + list(c1.layers[1:])

    # per-gate orientation and constant detection
    orient: List[np.ndarray] = []
    const_value: List[Dict[int, int]] = []
    for t, layer in enumerate(layers):
        o = np.ones(layer.width, dtype=np.int64)
        consts = {}
        for j, ((idx, w), b) in enumerate(zip(layer.rows, layer.bias)):
            hi = int(b) + int(w[w > 0].sum())
            lo = int(b) + int(w[w < 0].sum())
            if hi <= 0:
                consts[j] = 0
            elif lo > 0:
                consts[j] = 1
            else:
                o[j] = _orientation(w)
        orient.append(o)
        const_value.append(consts)

    # copies each source must provide: (plain, negated)
    def usage(t: int, n_sources: int) -> Tuple[np.ndarray, np.ndarray]:
        plain = np.zeros(n_sources, dtype=np.int64)
        negated = np.zeros(n_sources, dtype=np.int64)
        layer = layers[t]
        for j, (idx, w) in enumerate(layer.rows):
            if j in const_value[t]:
                continue
            for src, wt in zip(idx, w):
                wants_plain = (wt > 0) == (orient[t][j] > 0)
                if wants_plain:
                    plain[src] = max(plain[src], abs(int(wt)))
                else:
                    negated[src] = max(negated[src], abs(int(wt)))
        return plain, negated

    btn_layers: List[Layer] = []

    # layer 1: parity blocks for the affine outputs
    plain, negated = usage(0, c0.d_out)
    rows, biases, scalars = [], [], []
    kappa_plain = np.zeros(c0.d_out, dtype=np.int64)
    kappa_neg = np.zeros(c0.d_out, dtype=np.int64)
    start_plain: Dict[Tuple[int, int], int] = {}
    start_neg: Dict[Tuple[int, int], int] = {}
    block_size_plain = np.zeros(c0.d_out, dtype=np.int64)
    block_size_neg = np.zeros(c0.d_out, dtype=np.int64)
    for j, (support, off) in enumerate(affine_rows):
        if j in constant:
            continue
        for copy in range(plain[j]):
            r, b, g, kappa = parity_block(support, off)
            start_plain[(j, copy)] = len(rows)
            rows += r
            biases += b
            scalars += g
            kappa_plain[j], block_size_plain[j] = kappa, len(r)
        for copy in range(negated[j]):
            r, b, g, kappa = parity_block(support, off ^ 1)
            start_neg[(j, copy)] = len(rows)
            rows += r
            biases += b
            scalars += g
            kappa_neg[j], block_size_neg[j] = kappa, len(r)
    if not rows:
        rows, biases, scalars = [[]], [0], [0]
    btn_layers.append(Layer.from_index_rows(c0.d_in, rows, biases, scalars))
    d_prev = len(rows)

    def select(start: Dict[Tuple[int, int], int], size: np.ndarray, src: int, count: int) -> List[int]:
        cols = []
        for copy in range(count):
            s = start[(src, copy)]
            cols.extend(range(s, s + int(size[src])))
        return cols

    for t, layer in enumerate(layers):
        is_last = t == len(layers) - 1
        if is_last:
            out_plain = np.ones(layer.width, dtype=np.int64)
            out_neg = np.zeros(layer.width, dtype=np.int64)
        else:
            out_plain, out_neg = usage(t + 1, layer.width)

        rows, biases, scalars = [], [], []
        next_start_plain: Dict[Tuple[int, int], int] = {}
        next_start_neg: Dict[Tuple[int, int], int] = {}
        for j, ((idx, w), b) in enumerate(zip(layer.rows, layer.bias)):
            if out_plain[j] == 0 and out_neg[j] == 0:
                continue
            if j in const_value[t]:
                row, gamma, bias = [], 0, const_value[t][j]
            else:
                gamma = int(orient[t][j])
                row = []
                offset = 0
                for src, wt in zip(idx, w):
                    src, wt = int(src), int(wt)
                    use_plain = (wt > 0) == (gamma > 0)
                    if use_plain:
                        row += select(start_plain, block_size_plain, src, abs(wt))
                        offset += abs(wt) * int(kappa_plain[src])
                    else:
                        row += select(start_neg, block_size_neg, src, abs(wt))
                        offset += abs(wt) * (int(kappa_neg[src]) + 1)
                bias = int(b) - offset if gamma > 0 else int(b) + offset
            for copy in range(out_plain[j]):
                next_start_plain[(j, copy)] = len(rows)
                rows.append(row)
                biases.append(bias)
                scalars.append(gamma)
            for copy in range(out_neg[j]):
                next_start_neg[(j, copy)] = len(rows)
                rows.append(row)
                biases.append(1 - bias)
                scalars.append(-gamma)
        if not rows:
            rows, biases, scalars = [[]], [0], [0]
        btn_layers.append(Layer.from_index_rows(d_prev, rows, biases, scalars))
        d_prev = len(rows)
        start_plain, start_neg = next_start_plain, next_start_neg
        kappa_plain = np.zeros(layer.width, dtype=np.int64)
        kappa_neg = np.zeros(layer.width, dtype=np.int64)
        block_size_plain = np.ones(layer.width, dtype=np.int64)
        block_size_neg = np.ones(layer.width, dtype=np.int64)

    net = Network(tuple(btn_layers))
    logger.debug(f"lt_to_btn: circuit depth {c1.depth}, size {c1.size} -> network dims {net.dims}")
    return net

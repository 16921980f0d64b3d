"""
Binary threshold network model

A network maps {0,1}^d0 to {0,1}^dL layer by layer,
h_l = 1[gamma * (W h_(l-1)) + b > 0], with binary weights (the first layer
may be ternary), integer biases in {-d_(l-1)+1, ..., d_(l-1)} and neuron
scalars in {-1, 0, 1}. Weight rows are stored bit-packed, 64 inputs per
uint64 word, and dot products are popcounts.

Also holds the outgoing-scaling variant (scalar applied after the threshold)
and its conversion to an ordinary network with a widened bias range.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import NETWORK_CONFIG
from utils.errors import ShapeError
from utils.helpers import all_inputs

logger = logging.getLogger(__name__)

WORD = 64

if hasattr(np, 'bitwise_count'):
    def popcount64(arr: np.ndarray) -> np.ndarray:
        return np.bitwise_count(arr)
else:
    _M1 = np.uint64(0x5555555555555555)
    _M2 = np.uint64(0x3333333333333333)
    _M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
    _H01 = np.uint64(0x0101010101010101)

    def popcount64(arr: np.ndarray) -> np.ndarray:
        arr = arr - ((arr >> np.uint64(1)) & _M1)
        arr = (arr & _M2) + ((arr >> np.uint64(2)) & _M2)
        arr = (arr + (arr >> np.uint64(4))) & _M4
        return (arr * _H01) >> np.uint64(56)


def n_words(width: int) -> int:
    return (width + WORD - 1) // WORD


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """
    Pack an (R x d) 0/1 array into (R x ceil(d/64)) uint64 words

    Column c lands in word c // 64 at bit c % 64.
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    rows, width = bits.shape
    words = n_words(width)
    packed = np.packbits(bits, axis=1, bitorder='little')
    padded = np.zeros((rows, words * 8), dtype=np.uint8)
    padded[:, :packed.shape[1]] = packed
    return padded.view('<u8').astype(np.uint64)


def pack_index_rows(width: int, rows: Sequence[Sequence[int]]) -> np.ndarray:
    """Pack rows given as lists of set column indices"""
    packed = np.zeros((len(rows), n_words(width)), dtype=np.uint64)
    for i, cols in enumerate(rows):
        if len(cols) == 0:
            continue
        cols = np.asarray(cols, dtype=np.int64)
        if cols.min() < 0 or cols.max() >= width:
            raise ShapeError(f"row {i} references a column outside width {width}")
        np.bitwise_or.at(packed[i], cols >> 6, np.left_shift(np.uint64(1), (cols & 63).astype(np.uint64)))
    return packed


def unpack_rows(packed: np.ndarray, width: int) -> np.ndarray:
    as_bytes = np.ascontiguousarray(packed.astype('<u8')).view(np.uint8)
    return np.unpackbits(as_bytes, axis=1, bitorder='little')[:, :width]


@dataclass(eq=False)
class Layer:
    """One threshold layer with bit-packed weight rows"""

    d_in: int
    pos: np.ndarray
    bias: np.ndarray
    scalars: np.ndarray
    neg: Optional[np.ndarray] = None

    @classmethod
    def from_dense(cls, weights: np.ndarray, bias: Sequence[int], scalars: Sequence[int]) -> 'Layer':
        weights = np.asarray(weights, dtype=np.int64)
        if weights.ndim != 2:
            raise ShapeError('weight matrix must be two-dimensional')
        if np.any((weights < -1) | (weights > 1)):
            raise ShapeError('weights must lie in {-1, 0, 1}')
        neg = pack_rows(weights < 0) if np.any(weights < 0) else None
        return cls(d_in=weights.shape[1], pos=pack_rows(weights > 0),
                   bias=np.asarray(bias, dtype=np.int64), scalars=np.asarray(scalars, dtype=np.int8),
                   neg=neg)

    @classmethod
    def from_index_rows(cls, d_in: int, rows: Sequence[Sequence[int]], bias: Sequence[int],
                        scalars: Sequence[int]) -> 'Layer':
        return cls(d_in=d_in, pos=pack_index_rows(d_in, rows),
                   bias=np.asarray(bias, dtype=np.int64), scalars=np.asarray(scalars, dtype=np.int8))

    @property
    def d_out(self) -> int:
        return int(self.bias.shape[0])

    @property
    def ternary(self) -> bool:
        return self.neg is not None

    def dense(self) -> np.ndarray:
        """Weight matrix as an (d_out x d_in) int8 array"""
        w = unpack_rows(self.pos, self.d_in).astype(np.int8)
        if self.neg is not None:
            w -= unpack_rows(self.neg, self.d_in).astype(np.int8)
        return w

    def weight_count(self) -> int:
        return self.d_in * self.d_out

    def preactivation_sums(self, packed_inputs: np.ndarray) -> np.ndarray:
        """
        W h for a batch of packed binary inputs

        Args:
            packed_inputs: (B x words) uint64

        Returns:
            (B x d_out) int64 sums
        """
        batch = packed_inputs.shape[0]
        words = self.pos.shape[1]
        sums = np.zeros((batch, self.d_out), dtype=np.int64)
        step = max(1, NETWORK_CONFIG['EVAL_CHUNK_WORDS'] // max(1, batch * words))
        for start in range(0, self.d_out, step):
            block = slice(start, start + step)
            hits = popcount64(packed_inputs[:, None, :] & self.pos[None, block, :])
            sums[:, block] = hits.sum(axis=2, dtype=np.int64)
            if self.neg is not None:
                miss = popcount64(packed_inputs[:, None, :] & self.neg[None, block, :])
                sums[:, block] -= miss.sum(axis=2, dtype=np.int64)
        return sums

    def forward(self, bits: np.ndarray) -> np.ndarray:
        sums = self.preactivation_sums(pack_rows(bits))
        pre = self.scalars.astype(np.int64)[None, :] * sums + self.bias[None, :]
        return (pre > 0).astype(np.uint8)


@dataclass(eq=False)
class Network:
    """
    Layered binary threshold network

    Networks are immutable after construction and validated on creation.
    ternary_first allows {-1,0,1} weights in layer 1; wide_bias allows the
    {-2d+1, ..., 2d} range produced by the outgoing-scaling conversion.
    """

    layers: Tuple[Layer, ...]
    ternary_first: bool = False
    wide_bias: bool = False

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if not self.layers:
            raise ShapeError('a network needs at least one layer')
        if any(layer.ternary for layer in self.layers[1:]):
            raise ShapeError('only the first layer may carry -1 weights')
        if self.layers[0].ternary and not self.ternary_first:
            self.ternary_first = True
        for l, layer in enumerate(self.layers, start=1):
            self._check_layer(l, layer)
            if l > 1 and layer.d_in != self.layers[l - 2].d_out:
                raise ShapeError(f"layer {l} expects {layer.d_in} inputs, previous layer has "
                                 f"{self.layers[l - 2].d_out}")

    def _check_layer(self, l: int, layer: Layer):
        if layer.d_in < 1 or layer.d_out < 1:
            raise ShapeError(f"layer {l} has zero width")
        if layer.pos.shape != (layer.d_out, n_words(layer.d_in)):
            raise ShapeError(f"layer {l} weight rows do not match its widths")
        if layer.scalars.shape != (layer.d_out,):
            raise ShapeError(f"layer {l} scalar vector has the wrong length")
        if np.any(np.abs(layer.scalars) > 1):
            raise ShapeError(f"layer {l} scalars must lie in {{-1, 0, 1}}")
        lo, hi = bias_range(layer.d_in, self.wide_bias)
        if layer.bias.size and (layer.bias.min() < lo or layer.bias.max() > hi):
            raise ShapeError(f"layer {l} bias outside [{lo}, {hi}]")
        if layer.neg is not None and np.any(layer.neg & layer.pos):
            raise ShapeError(f"layer {l} has a weight that is both +1 and -1")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.layers[0].d_in,) + tuple(layer.d_out for layer in self.layers)

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def stats(self) -> 'SizeStats':
        return size_stats(self.dims)

    def to_dict(self) -> Dict[str, Any]:
        stats = self.stats()
        return {
            'depth': self.depth,
            'dims': list(self.dims),
            'w': stats.w,
            'n': stats.n,
            'M': stats.M,
            'ternary_first': self.ternary_first,
        }


def bias_range(d_prev: int, wide: bool = False) -> Tuple[int, int]:
    """Closed bias range for a layer fed by d_prev neurons"""
    return (-2 * d_prev + 1, 2 * d_prev) if wide else (-d_prev + 1, d_prev)


def make_network(weights: Sequence[np.ndarray], biases: Sequence[Sequence[int]],
                 scalars: Sequence[Sequence[int]], wide_bias: bool = False) -> Network:
    """Build a network from dense per-layer parameters"""
    if not len(weights) == len(biases) == len(scalars):
        raise ShapeError('weights, biases and scalars must have one entry per layer')
    layers = [Layer.from_dense(w, b, g) for w, b, g in zip(weights, biases, scalars)]
    return Network(tuple(layers), wide_bias=wide_bias)


@dataclass(frozen=True)
class SizeStats:
    w: int
    n: int
    M: int

    def to_dict(self) -> Dict[str, int]:
        return {'w': self.w, 'n': self.n, 'M': self.M}


def size_stats(dims: Sequence[int]) -> SizeStats:
    """
    Weight, neuron and parameter counts of an architecture

    Args:
        dims: (d_0, ..., d_L)

    Returns:
        SizeStats with w = sum d_l d_(l-1), n = sum_(l>=1) d_l, M = w + 2n
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ShapeError(f"invalid dims {dims}")
    w = sum(dims[l] * dims[l - 1] for l in range(1, len(dims)))
    n = sum(dims[1:])
    return SizeStats(w=w, n=n, M=w + 2 * n)


def _as_batch(x: np.ndarray, width: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint8)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"expected inputs of width {width}, got shape {tuple(x.shape)}")
    if np.any(x > 1):
        raise ShapeError('inputs must be bits')
    return x


def evaluate_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """
    Evaluate a network on a batch of inputs

    Args:
        net: Network
        xs: (B x d_0) bit array

    Returns:
        (B x d_L) uint8 outputs
    """
    h = _as_batch(xs, net.d_in)
    for layer in net.layers:
        h = layer.forward(h)
    return h


def evaluate(net: Network, x: Sequence[int]) -> np.ndarray:
    """Evaluate a network on one input bit vector"""
    x = np.asarray(x, dtype=np.uint8)
    if x.ndim != 1:
        raise ShapeError('evaluate takes a single bit vector')
    return evaluate_batch(net, x)[0]


def evaluate_layer(net: Network, l: int, a: Sequence[int]) -> np.ndarray:
    """
    Apply layer l (1-based) to an activation vector

    Raises:
        ShapeError: l outside 1..L or a of the wrong length
    """
    if not 1 <= l <= net.depth:
        raise ShapeError(f"layer index {l} outside 1..{net.depth}")
    layer = net.layers[l - 1]
    return layer.forward(_as_batch(a, layer.d_in))[0]


def truth_table(net: Network, output: int = 0) -> np.ndarray:
    """Output bit `output` on every input of {0,1}^d0, in integer order"""
    if net.d_in > NETWORK_CONFIG['MAX_EVAL_INPUT_BITS']:
        raise ShapeError(f"d_0 = {net.d_in} too large for a full truth table")
    return evaluate_batch(net, all_inputs(net.d_in))[:, output]


def compose(first: Network, second: Network) -> Network:
    """Network computing second(first(x)) by stacking layers"""
    if first.d_out != second.d_in:
        raise ShapeError(f"cannot feed {first.d_out} outputs into {second.d_in} inputs")
    if any(layer.ternary for layer in second.layers):
        raise ShapeError('a ternary layer cannot sit after the first layer')
    return Network(first.layers + second.layers, ternary_first=first.ternary_first,
                   wide_bias=first.wide_bias or second.wide_bias)


def permute_layer(net: Network, l: int, order: Sequence[int]) -> Network:
    """Reorder the neurons of hidden layer l, fixing up layer l+1's columns"""
    if not 1 <= l < net.depth:
        raise ShapeError(f"only hidden layers can be permuted, got {l}")
    order = np.asarray(order, dtype=np.int64)
    layers = list(net.layers)
    cur = layers[l - 1]
    layers[l - 1] = Layer(d_in=cur.d_in, pos=cur.pos[order], bias=cur.bias[order],
                          scalars=cur.scalars[order], neg=None if cur.neg is None else cur.neg[order])
    nxt = layers[l]
    w = nxt.dense()[:, order]
    layers[l] = Layer.from_dense(w, nxt.bias, nxt.scalars)
    return Network(tuple(layers), ternary_first=net.ternary_first, wide_bias=net.wide_bias)


def same_parameters(a: Network, b: Network) -> bool:
    if a.dims != b.dims or a.ternary_first != b.ternary_first:
        return False
    for la, lb in zip(a.layers, b.layers):
        if not (np.array_equal(la.dense(), lb.dense()) and np.array_equal(la.bias, lb.bias)
                and np.array_equal(la.scalars, lb.scalars)):
            return False
    return True


def random_network(dims: Sequence[int], rng: np.random.Generator, ternary_first: bool = False,
                   wide_bias: bool = False) -> Network:
    """Uniformly random parameters for an architecture"""
    weights, biases, scalars = [], [], []
    for l in range(1, len(dims)):
        d_prev, d = dims[l - 1], dims[l]
        if l == 1 and ternary_first:
            weights.append(rng.integers(-1, 2, size=(d, d_prev)))
        else:
            weights.append(rng.integers(0, 2, size=(d, d_prev)))
        lo, hi = bias_range(d_prev, wide_bias)
        biases.append(rng.integers(lo, hi + 1, size=d))
        scalars.append(rng.integers(-1, 2, size=d))
    return make_network(weights, biases, scalars, wide_bias=wide_bias)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def format_btn(net: Network) -> str:
    """Render a network in the .btn text format"""
    lines = ['BTN v1', f"depth {net.depth}", 'dims ' + ' '.join(str(d) for d in net.dims)]
    for l, layer in enumerate(net.layers, start=1):
        lines.append(f"layer {l}")
        for row in layer.dense():
            lines.append(''.join('-' if v < 0 else str(int(v)) for v in row))
        lines.append('b: ' + ' '.join(str(int(v)) for v in layer.bias))
        lines.append('g: ' + ' '.join(str(int(v)) for v in layer.scalars))
    return '\n'.join(lines) + '\n'


def parse_btn(text: str) -> Network:
    """
    Parse the .btn text format

    Raises:
        ShapeError: Any structural or alphabet violation
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith('#')]
    pos = 0

    def take(prefix: str) -> str:
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix):
            found = lines[pos] if pos < len(lines) else 'end of file'
            raise ShapeError(f"expected '{prefix}', found {found!r}")
        pos += 1
        return lines[pos - 1][len(prefix):].strip()

    if take('BTN') != 'v1':
        raise ShapeError('unsupported .btn version')
    try:
        depth = int(take('depth'))
        dims = [int(tok) for tok in take('dims').split()]
    except ValueError as e:
        raise ShapeError(f"bad header: {e}")
    if len(dims) != depth + 1:
        raise ShapeError(f"depth {depth} needs {depth + 1} dims, got {len(dims)}")

    weights, biases, scalars = [], [], []
    for l in range(1, depth + 1):
        if int(take('layer')) != l:
            raise ShapeError(f"layers out of order at layer {l}")
        rows = []
        for _ in range(dims[l]):
            row = take('')
            if len(row) != dims[l - 1] or any(ch not in '01-' for ch in row):
                raise ShapeError(f"layer {l}: bad weight row {row!r}")
            if '-' in row and l != 1:
                raise ShapeError(f"layer {l}: -1 weights only allowed in layer 1")
            rows.append([-1 if ch == '-' else int(ch) for ch in row])
        try:
            b = [int(tok) for tok in take('b:').split()]
            g = [int(tok) for tok in take('g:').split()]
        except ValueError as e:
            raise ShapeError(f"layer {l}: {e}")
        if len(b) != dims[l] or len(g) != dims[l]:
            raise ShapeError(f"layer {l}: bias/scalar length mismatch")
        weights.append(np.array(rows, dtype=np.int64).reshape(dims[l], dims[l - 1]))
        biases.append(b)
        scalars.append(g)
    if pos != len(lines):
        raise ShapeError('trailing content after last layer')

    wide = any(
        min(b) < bias_range(dims[l])[0] or max(b) > bias_range(dims[l])[1]
        for l, b in enumerate(biases)
    )
    return make_network(weights, biases, scalars, wide_bias=wide)


def read_btn(path: Union[str, Path]) -> Network:
    with open(path, 'r') as f:
        return parse_btn(f.read())


def write_btn(net: Network, path: Union[str, Path]):
    with open(path, 'w', newline='\n') as f:
        f.write(format_btn(net))
    logger.info(f"Wrote network {net.dims} to {path}")


# ---------------------------------------------------------------------------
# Outgoing-scaling networks
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ObtnNetwork:
    """
    Network whose scalar multiplies the neuron's output

    Layer outputs lie in {-1,0,1}; weights are binary and biases are in the
    standard range. Kept dense since these only appear at small sizes.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    scalars: List[np.ndarray]
    dims: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.int64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.int64) for b in self.biases]
        self.scalars = [np.asarray(g, dtype=np.int64) for g in self.scalars]
        if not self.weights:
            raise ShapeError('an oBTN needs at least one layer')
        dims = [self.weights[0].shape[1]]
        for l, (w, b, g) in enumerate(zip(self.weights, self.biases, self.scalars), start=1):
            if w.shape[1] != dims[-1] or b.shape != (w.shape[0],) or g.shape != (w.shape[0],):
                raise ShapeError(f"oBTN layer {l} has inconsistent shapes")
            if np.any((w < 0) | (w > 1)) or np.any(np.abs(g) > 1):
                raise ShapeError(f"oBTN layer {l} violates its alphabets")
            lo, hi = bias_range(dims[-1])
            if b.min() < lo or b.max() > hi:
                raise ShapeError(f"oBTN layer {l} bias outside [{lo}, {hi}]")
            dims.append(w.shape[0])
        self.dims = tuple(dims)

    @property
    def depth(self) -> int:
        return len(self.weights)

    def evaluate_batch(self, xs: np.ndarray) -> np.ndarray:
        h = _as_batch(xs, self.dims[0]).astype(np.int64)
        for w, b, g in zip(self.weights, self.biases, self.scalars):
            h = g[None, :] * ((h @ w.T + b[None, :]) > 0).astype(np.int64)
        return h


def format_obtn(g: ObtnNetwork) -> str:
    """.btn-style text with an OBTN header; scalars apply to the neuron's output"""
    lines = ['OBTN v1', f"depth {g.depth}", 'dims ' + ' '.join(str(d) for d in g.dims)]
    for l, (w, b, gamma) in enumerate(zip(g.weights, g.biases, g.scalars), start=1):
        lines.append(f"layer {l}")
        lines += [''.join(str(int(v)) for v in row) for row in w]
        lines.append('b: ' + ' '.join(str(int(v)) for v in b))
        lines.append('g: ' + ' '.join(str(int(v)) for v in gamma))
    return '\n'.join(lines) + '\n'


def random_obtn(dims: Sequence[int], rng: np.random.Generator) -> ObtnNetwork:
    weights, biases, scalars = [], [], []
    for l in range(1, len(dims)):
        lo, hi = bias_range(dims[l - 1])
        weights.append(rng.integers(0, 2, size=(dims[l], dims[l - 1])))
        biases.append(rng.integers(lo, hi + 1, size=dims[l]))
        scalars.append(rng.integers(-1, 2, size=dims[l]))
    return ObtnNetwork(weights, biases, scalars)


def obtn_to_btn(g: ObtnNetwork) -> Tuple[Network, np.ndarray]:
    """
    Convert an outgoing-scaling network to an ordinary one

    Each negative-scalar neuron is replaced by its complement, which shifts
    its output by +1; downstream biases absorb the shift.

    Args:
        g: Outgoing-scaling network

    Returns:
        (h, s) with h(x) = g(x) + s for every x, h on the widened bias range
        and s_i = 1 exactly where the last layer's scalar is -1
    """
    weights, biases, scalars = [], [], []
    shift = np.zeros(g.dims[0], dtype=np.int64)
    for w, b, gamma in zip(g.weights, g.biases, g.scalars):
        carried = b - w @ shift
        new_b = np.where(gamma == 1, carried, np.where(gamma == -1, 1 - carried, 0))
        new_g = gamma.copy()
        weights.append(w)
        biases.append(new_b)
        scalars.append(new_g)
        shift = (gamma == -1).astype(np.int64)
    net = make_network(weights, biases, scalars, wide_bias=True)
    logger.debug(f"converted oBTN {g.dims}; {int(shift.sum())} shifted outputs")
    return net, shift

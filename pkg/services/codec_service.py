"""
Codec Service

Description-length encoding of networks. Hidden neurons are put in a
canonical order, weights are written one bit each, and each layer's
(bias, scalar) pairs are written either neuron by neuron or, for layers at
least as wide as their input, as a multiplicity per possible pair.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Any, Optional, Tuple, Union

import numpy as np
from bitarray import bitarray
from bitarray.util import ba2int, int2ba

from config.settings import CODEC_CONFIG
from services.network_service import Network, bias_range, make_network, permute_layer
from utils.errors import MalformedStreamError, ShapeError
from utils.helpers import ceil_log2

logger = logging.getLogger(__name__)

VERSION_BITS = 4
SCALAR_BITS = 2
FOOTER_BITS = 3


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------

def _sort_order(dense: np.ndarray, bias: np.ndarray, scalars: np.ndarray) -> np.ndarray:
    """Neurons sorted by bias, then scalar, then weight row"""
    keys = [dense[:, j] for j in range(dense.shape[1] - 1, -1, -1)]
    return np.lexsort(keys + [scalars.astype(np.int64), bias])


def canonicalize(net: Network) -> Network:
    """Same function with every hidden layer's neurons in sorted order"""
    for l in range(1, net.depth):
        layer = net.layers[l - 1]
        order = _sort_order(layer.dense(), layer.bias, layer.scalars)
        if np.any(order != np.arange(layer.d_out)):
            net = permute_layer(net, l, order)
    return net


def is_canonical(net: Network) -> bool:
    for layer in net.layers[:-1]:
        order = _sort_order(layer.dense(), layer.bias, layer.scalars)
        if np.any(order != np.arange(layer.d_out)):
            return False
    return True


# ---------------------------------------------------------------------------
# Bit streams
# ---------------------------------------------------------------------------

@dataclass
class BitEncoding:
    """Encoded network with its header facts"""

    bits: bitarray
    version: int
    depth_known: bool

    @property
    def length(self) -> int:
        return len(self.bits)

    def to01(self) -> str:
        return self.bits.to01()


def _uint(value: int, width: int) -> bitarray:
    if width == 0:
        return bitarray()
    return int2ba(int(value), length=width, endian='big')


def _universal(value: int) -> bitarray:
    """Unary length prefix followed by the binary digits (value >= 0)"""
    digits = int2ba(int(value), endian='big')
    return bitarray('1' * len(digits) + '0') + digits


class _Reader:
    def __init__(self, bits: bitarray):
        self.bits = bits
        self.pos = 0

    def take(self, width: int, what: str) -> int:
        if self.pos + width > len(self.bits):
            raise MalformedStreamError(f"stream ends inside {what}", self.pos)
        if width == 0:
            return 0
        value = ba2int(self.bits[self.pos:self.pos + width], signed=False)
        self.pos += width
        return value

    def take_bits(self, width: int, what: str) -> bitarray:
        if self.pos + width > len(self.bits):
            raise MalformedStreamError(f"stream ends inside {what}", self.pos)
        chunk = self.bits[self.pos:self.pos + width]
        self.pos += width
        return chunk

    def universal(self, what: str) -> int:
        start = self.pos
        width = 0
        while True:
            if self.pos >= len(self.bits):
                raise MalformedStreamError(f"stream ends inside {what}", self.pos)
            bit = self.bits[self.pos]
            self.pos += 1
            if not bit:
                break
            width += 1
            if width > 64:
                raise MalformedStreamError(f"{what} length prefix too long", start)
        return self.take(width, what)


def _bias_width(d_prev: int, wide: bool) -> Tuple[int, int, int]:
    lo, hi = bias_range(d_prev, wide)
    return lo, hi, ceil_log2(hi - lo + 1)


def _uses_multiplicities(l: int, depth: int, d_prev: int, d: int) -> bool:
    """Pair multiplicities for hidden layers at least as wide as their input"""
    return l < depth and d >= d_prev


# ---------------------------------------------------------------------------
# Encode / decode
# ---------------------------------------------------------------------------

def encode(net: Network, depth_known: bool = False) -> BitEncoding:
    """
    Bit encoding of a canonical network

    Layout: version, depth-known flag, ternary and wide-bias flags, depth
    (unless known), w, dims; then per layer its weight bits and its
    bias/scalar fields.

    Raises:
        ShapeError: Network is not canonical
    """
    if not is_canonical(net):
        raise ShapeError('encode needs a canonical network; call canonicalize first')
    dims = net.dims
    out = _uint(CODEC_CONFIG['VERSION'], VERSION_BITS)
    out += bitarray([depth_known, net.ternary_first, net.wide_bias])
    if not depth_known:
        out += _universal(net.depth)
    out += _universal(net.stats().w)
    for d in dims:
        out += _universal(d)

    for l, layer in enumerate(net.layers, start=1):
        d_prev, d = dims[l - 1], dims[l]
        dense = layer.dense()
        if l == 1 and net.ternary_first:
            out += bitarray((dense != 0).reshape(-1).tolist())
            out += bitarray((dense[dense != 0] < 0).tolist())
        else:
            out += bitarray((dense > 0).reshape(-1).tolist())
        lo, hi, width = _bias_width(d_prev, net.wide_bias)
        if _uses_multiplicities(l, net.depth, d_prev, d):
            count_width = ceil_log2(d + 1)
            pairs = list(zip(layer.bias.tolist(), layer.scalars.tolist()))
            for b in range(lo, hi + 1):
                for g in (-1, 0, 1):
                    out += _uint(pairs.count((b, g)), count_width)
        else:
            for b, g in zip(layer.bias.tolist(), layer.scalars.tolist()):
                out += _uint(b - lo, width)
                out += _uint(g + 1, SCALAR_BITS)
    logger.debug(f"Encoded {dims} (w={net.stats().w}) in {len(out)} bits")
    return BitEncoding(bits=out, version=CODEC_CONFIG['VERSION'], depth_known=depth_known)


def decode(stream: Union[BitEncoding, bitarray], depth: Optional[int] = None) -> Network:
    """
    Network from its bit encoding

    Args:
        stream: Encoded bits
        depth: Depth supplied out of band for depth-known streams

    Raises:
        MalformedStreamError: Truncated stream or out-of-range field, with its bit offset
    """
    bits = stream.bits if isinstance(stream, BitEncoding) else bitarray(stream)
    r = _Reader(bits)
    version = r.take(VERSION_BITS, 'version')
    if version != CODEC_CONFIG['VERSION']:
        raise MalformedStreamError(f"unsupported codec version {version}", 0)
    depth_known, ternary, wide = (bool(r.take(1, 'flags')) for _ in range(3))
    if depth_known:
        if depth is None:
            raise ShapeError('stream omits its depth; pass it explicitly')
    else:
        at = r.pos
        depth = r.universal('depth')
        if depth < 1:
            raise MalformedStreamError('depth must be positive', at)
    at = r.pos
    w = r.universal('weight count')
    dims = []
    for _ in range(depth + 1):
        start = r.pos
        d = r.universal('dims')
        if d < 1:
            raise MalformedStreamError('zero layer width', start)
        dims.append(d)
    if sum(a * b for a, b in zip(dims, dims[1:])) != w:
        raise MalformedStreamError(f"weight count {w} does not match dims {dims}", at)

    weights, biases, scalars = [], [], []
    for l in range(1, depth + 1):
        d_prev, d = dims[l - 1], dims[l]
        mask = np.array(r.take_bits(d * d_prev, f"layer {l} weights").tolist(), dtype=np.int64)
        if l == 1 and ternary:
            signs = np.array(r.take_bits(int(mask.sum()), f"layer {l} signs").tolist(), dtype=np.int64)
            mask[mask == 1] = 1 - 2 * signs
        weights.append(mask.reshape(d, d_prev))
        lo, hi, width = _bias_width(d_prev, wide)
        if _uses_multiplicities(l, depth, d_prev, d):
            count_width = ceil_log2(d + 1)
            b_list, g_list = [], []
            start = r.pos
            for b in range(lo, hi + 1):
                for g in (-1, 0, 1):
                    count = r.take(count_width, f"layer {l} multiplicities")
                    b_list += [b] * count
                    g_list += [g] * count
            if len(b_list) != d:
                raise MalformedStreamError(f"layer {l}: multiplicities sum to {len(b_list)}, expected {d}", start)
        else:
            b_list, g_list = [], []
            for _ in range(d):
                at = r.pos
                b = lo + r.take(width, f"layer {l} bias")
                if b > hi:
                    raise MalformedStreamError(f"layer {l}: bias {b} out of range", at)
                at = r.pos
                g = r.take(SCALAR_BITS, f"layer {l} scalar") - 1
                if g > 1:
                    raise MalformedStreamError(f"layer {l}: bad scalar code", at)
                b_list.append(b)
                g_list.append(g)
        biases.append(b_list)
        scalars.append(g_list)
    if r.pos != len(bits):
        raise MalformedStreamError('trailing bits after last layer', r.pos)

    net = make_network(weights, biases, scalars, wide_bias=wide)
    if not is_canonical(net):
        # branch-1 hidden layers are read in stream order
        raise MalformedStreamError('decoded network is not canonical', 0)
    return net


# ---------------------------------------------------------------------------
# Length accounting and files
# ---------------------------------------------------------------------------

@dataclass
class LengthReport:
    bits: int
    w: int
    bound: float
    c: float
    c0: float

    @property
    def within(self) -> bool:
        return self.bits <= self.bound

    def to_dict(self) -> Dict[str, Any]:
        return {'bits': self.bits, 'w': self.w, 'bound': self.bound, 'c': self.c, 'c0': self.c0,
                'within_bound': self.within}


def length_bound(w: int, c: Optional[float] = None, c0: Optional[float] = None) -> float:
    """w + c sqrt(w) log2(w + 2) + c0"""
    c = CODEC_CONFIG['C'] if c is None else c
    c0 = CODEC_CONFIG['C0'] if c0 is None else c0
    return w + c * math.sqrt(w) * math.log2(w + 2) + c0


def length_bound_check(net: Network, c: Optional[float] = None, c0: Optional[float] = None,
                       depth_known: bool = False) -> LengthReport:
    c = CODEC_CONFIG['C'] if c is None else c
    c0 = CODEC_CONFIG['C0'] if c0 is None else c0
    bits = encode(canonicalize(net), depth_known).length
    w = net.stats().w
    return LengthReport(bits=bits, w=w, bound=length_bound(w, c, c0), c=c, c0=c0)


def to_bytes(bits: bitarray) -> bytes:
    """Stream padded with zeros to whole bytes, last three bits hold the pad length"""
    pad = (-(len(bits) + FOOTER_BITS)) % 8
    framed = bits + bitarray('0' * pad) + _uint(pad, FOOTER_BITS)
    return framed.tobytes()


def from_bytes(data: bytes) -> bitarray:
    framed = bitarray(endian='big')
    framed.frombytes(data)
    if len(framed) < FOOTER_BITS:
        raise MalformedStreamError('file too short for its footer', 0)
    pad = ba2int(framed[-FOOTER_BITS:])
    end = len(framed) - FOOTER_BITS - pad
    if end < 0:
        raise MalformedStreamError(f"pad length {pad} longer than the stream", len(framed) - FOOTER_BITS)
    return framed[:end]


def write_btnbits(encoding: BitEncoding, path: Union[str, Path]):
    with open(path, 'wb') as f:
        f.write(to_bytes(encoding.bits))
    logger.info(f"Wrote {encoding.length} bits to {path}")


def read_btnbits(path: Union[str, Path]) -> bitarray:
    with open(path, 'rb') as f:
        return from_bytes(f.read())


def encode_file(net: Network, path: Union[str, Path], depth_known: bool = False) -> LengthReport:
    canonical = canonicalize(net)
    encoding = encode(canonical, depth_known)
    write_btnbits(encoding, path)
    w = net.stats().w
    return LengthReport(bits=encoding.length, w=w, bound=length_bound(w),
                        c=CODEC_CONFIG['C'], c0=CODEC_CONFIG['C0'])


def decode_file(path: Union[str, Path], depth: Optional[int] = None) -> Network:
    return decode(read_btnbits(path), depth)



"""
Utility functions for bit vectors, seeds and log-space arithmetic

Bit vectors are numpy uint8 arrays with the most significant bit first, so a
vector read as a binary number gives the integer the rest of the code uses
for points of {0,1}^d.
"""
import math
from typing import Sequence

import numpy as np

from utils.errors import ShapeError


def rows_to_ints(rows: np.ndarray) -> np.ndarray:
    """Read each row of an (B x d) bit array as an integer (d <= 63)"""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 2:
        raise ShapeError("expected a two-dimensional bit array")
    weights = np.left_shift(np.int64(1), np.arange(rows.shape[1] - 1, -1, -1, dtype=np.int64))
    return rows @ weights


def all_inputs(d: int) -> np.ndarray:
    """
    Enumerate {0,1}^d in integer order

    Args:
        d: Input width

    Returns:
        (2**d x d) uint8 array whose row i is the bit vector of i
    """
    idx = np.arange(1 << d, dtype=np.int64)
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def parse_bitstring(text: str) -> np.ndarray:
    """Parse a string of 0/1 characters"""
    text = text.strip()
    if not text or any(ch not in '01' for ch in text):
        raise ShapeError(f"not a bitstring: {text!r}")
    return np.frombuffer(text.encode('ascii'), dtype=np.uint8) - ord('0')


def format_bits(bits: Sequence[int]) -> str:
    return ''.join('1' if int(b) else '0' for b in bits)


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """
    Independent RNG stream for (master seed, key path)

    Streams depend only on the integers given, never on call order, so
    concurrent workers reproduce the same draws.
    """
    return np.random.default_rng([int(master_seed) & 0xFFFFFFFF, *[int(k) for k in keys]])


def ceil_log2(n: int) -> int:
    """Smallest c with 2**c >= n (0 for n <= 1)"""
    return 0 if n <= 1 else (n - 1).bit_length()


def log2_binom(n: int, k: int) -> float:
    """log2 of the binomial coefficient C(n, k)"""
    if k < 0 or k > n:
        return float('-inf')
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2)

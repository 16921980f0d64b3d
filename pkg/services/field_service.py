"""
GF(2) polynomial and GF(2^n) field arithmetic

Polynomials are plain Python ints: bit j is the coefficient of x^j. Field
elements of GF(2^n) are ints below 2^n, reduced modulo an irreducible E.
Vectorized helpers work on numpy uint64 arrays for the generator paths.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from utils.errors import ShapeError
from utils.helpers import derive_rng

logger = logging.getLogger(__name__)

MAX_DEGREE = 64


def degree(a: int) -> int:
    """Degree of a polynomial; -1 stands for the zero polynomial"""
    return a.bit_length() - 1


def poly_mul(a: int, b: int) -> int:
    """Carry-less product"""
    if a < b:
        a, b = b, a
    c = 0
    while b:
        if b & 1:
            c ^= a
        a <<= 1
        b >>= 1
    return c


def poly_mod(a: int, modulus: int) -> int:
    """
    Remainder of a modulo a nonzero polynomial

    Raises:
        ZeroDivisionError: modulus is the zero polynomial
    """
    if modulus == 0:
        raise ZeroDivisionError('division by zero polynomial')
    n = degree(modulus)
    m = degree(a)
    while m >= n:
        a ^= modulus << (m - n)
        m = degree(a)
    return a


def poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


def poly_mulmod(a: int, b: int, modulus: int) -> int:
    return poly_mod(poly_mul(a, b), modulus)


def poly_powmod(a: int, e: int, modulus: int) -> int:
    result = 1
    a = poly_mod(a, modulus)
    while e:
        if e & 1:
            result = poly_mulmod(result, a, modulus)
        a = poly_mulmod(a, a, modulus)
        e >>= 1
    return poly_mod(result, modulus)


def _prime_factors(n: int) -> List[int]:
    factors, p = [], 2
    while p * p <= n:
        if n % p == 0:
            factors.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        factors.append(n)
    return factors


def is_irreducible(poly: int) -> bool:
    """
    Rabin's irreducibility test over GF(2)

    E of degree n is irreducible iff x^(2^n) = x mod E and
    gcd(x^(2^(n/p)) - x, E) = 1 for every prime p dividing n.
    """
    n = degree(poly)
    if n < 1:
        return False
    if n == 1:
        return True

    def x_pow_2_pow(i: int) -> int:
        y = 2  # the polynomial x
        for _ in range(i):
            y = poly_mulmod(y, y, poly)
        return y

    if x_pow_2_pow(n) != 2:
        return False
    for p in _prime_factors(n):
        if poly_gcd(poly, x_pow_2_pow(n // p) ^ 2) != 1:
            return False
    return True


def find_irreducible(n: int, seed: int = 0) -> int:
    """
    Find an irreducible polynomial of degree n

    Candidates are x^n + t for tails t scanned upward (cyclically) from a
    seed-derived start; the first one passing the test is returned.

    Args:
        n: Degree, 1 <= n <= 64
        seed: Start-point seed (0 starts at tail 0)

    Returns:
        Irreducible polynomial as an int
    """
    if not 1 <= n <= MAX_DEGREE:
        raise ShapeError(f"field degree must be in [1, {MAX_DEGREE}], got {n}")
    span = 1 << n
    start = 0 if seed == 0 else int(derive_rng(seed, n).integers(0, 1 << min(n, 62))) % span
    for offset in range(span):
        tail = (start + offset) % span
        if n > 1 and not tail & 1:
            continue  # divisible by x
        candidate = (1 << n) | tail
        if is_irreducible(candidate):
            logger.debug(f"irreducible of degree {n}: {candidate:#x}")
            return candidate
    raise ShapeError(f"no irreducible polynomial of degree {n}")


@dataclass(frozen=True)
class FieldCtx:
    """GF(2^n) = GF(2)[x]/(E) with the Frobenius reduction table e[m][j] = x^(j*2^m) mod E"""

    n: int
    modulus: int
    k: int = 1
    e_table: Tuple[Tuple[int, ...], ...] = field(default=(), compare=False)

    @classmethod
    def create(cls, n: int, k: int = 1, seed: int = 0) -> 'FieldCtx':
        modulus = find_irreducible(n, seed)
        return cls.with_modulus(n, modulus, k)

    @classmethod
    def with_modulus(cls, n: int, modulus: int, k: int = 1) -> 'FieldCtx':
        if degree(modulus) != n or not is_irreducible(modulus):
            raise ShapeError(f"{modulus:#x} is not an irreducible polynomial of degree {n}")
        levels = max(k, 1).bit_length()  # m = 0 .. floor(log2 k)
        table = tuple(
            tuple(poly_powmod(1 << j, 1 << m, modulus) for j in range(n))
            for m in range(levels)
        )
        return cls(n=n, modulus=modulus, k=k, e_table=table)

    @property
    def order(self) -> int:
        return 1 << self.n

    def mul(self, a: int, b: int) -> int:
        return poly_mulmod(a, b, self.modulus)

    def pow(self, a: int, e: int) -> int:
        return poly_powmod(a, e, self.modulus)

    def inverse(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError('zero has no inverse')
        return self.pow(a, self.order - 2)

    def frobenius(self, z: int, m: int) -> int:
        """z^(2^m) through the e-table: sum of e[m][j] over the set bits j of z"""
        out = 0
        row = self.e_table[m] if m < len(self.e_table) else tuple(
            poly_powmod(1 << j, 1 << m, self.modulus) for j in range(self.n))
        for j in range(self.n):
            if (z >> j) & 1:
                out ^= row[j]
        return out

    def mul_matrix(self, c: int) -> np.ndarray:
        """n x n GF(2) matrix of y -> c*y; column j holds the bits of c*x^j"""
        mat = np.zeros((self.n, self.n), dtype=np.uint8)
        y = c
        for j in range(self.n):
            for i in range(self.n):
                mat[i, j] = (y >> i) & 1
            y = self.xtime(y)
        return mat

    def xtime(self, y: int) -> int:
        y <<= 1
        if (y >> self.n) & 1:
            y ^= self.modulus
        return y

    def xtime_array(self, ys: np.ndarray) -> np.ndarray:
        """Multiply every element of a uint64 array by x"""
        ys = ys.astype(np.uint64)
        top = (ys >> np.uint64(self.n - 1)) & np.uint64(1)
        low_mask = np.uint64((1 << self.n) - 1) if self.n < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
        shifted = (ys << np.uint64(1)) & low_mask
        tail = np.uint64(self.modulus & ((1 << self.n) - 1))
        return shifted ^ (top * tail)

    def mul_array(self, ys: np.ndarray, c: int) -> np.ndarray:
        """Multiply every element of a uint64 array by the constant c"""
        acc = np.zeros_like(ys, dtype=np.uint64)
        cur = ys.astype(np.uint64)
        for j in range(self.n):
            if (c >> j) & 1:
                acc ^= cur
            cur = self.xtime_array(cur)
        return acc

    def mul_arrays(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise product of two uint64 arrays"""
        acc = np.zeros(np.broadcast(a, b).shape, dtype=np.uint64)
        cur = np.broadcast_to(a.astype(np.uint64), acc.shape).copy()
        b = np.broadcast_to(b.astype(np.uint64), acc.shape)
        for j in range(self.n):
            bit = (b >> np.uint64(j)) & np.uint64(1)
            acc ^= cur * bit
            cur = self.xtime_array(cur)
        return acc

    def lsb_rows(self, ys: np.ndarray) -> np.ndarray:
        """
        Rows of the LSB functional

        For each y returns the vector (LSB(x^j * y))_j, so that the lowest
        coefficient of p*y equals <p, row> over GF(2).

        Returns:
            (len(ys) x n) uint8 array
        """
        cur = np.asarray(ys, dtype=np.uint64)
        out = np.zeros((cur.shape[0], self.n), dtype=np.uint8)
        for j in range(self.n):
            out[:, j] = (cur & np.uint64(1)).astype(np.uint8)
            cur = self.xtime_array(cur)
        return out


def field_horner(ctx: FieldCtx, coeffs: Sequence[int], z: int) -> int:
    """
    Evaluate p_0 + p_1 z + ... + p_(k-1) z^(k-1) in GF(2^n)

    Args:
        ctx: Field context
        coeffs: p_0..p_(k-1), each reduced
        z: Evaluation point

    Returns:
        Field element
    """
    acc = 0
    for p in reversed(list(coeffs)):
        acc = ctx.mul(acc, z) ^ p
    return acc


def horner_array(ctx: FieldCtx, coeffs: Sequence[int], zs: np.ndarray) -> np.ndarray:
    """field_horner over a uint64 array of points"""
    acc = np.zeros(len(zs), dtype=np.uint64)
    zs = np.asarray(zs, dtype=np.uint64)
    for p in reversed(list(coeffs)):
        acc = ctx.mul_arrays(acc, zs) ^ np.uint64(p)
    return acc


def power_arrays(ctx: FieldCtx, zs: np.ndarray, k: int) -> List[np.ndarray]:
    """[z^0, z^1, ..., z^(k-1)] for a uint64 array of points"""
    zs = np.asarray(zs, dtype=np.uint64)
    powers = [np.ones(len(zs), dtype=np.uint64)]
    for _ in range(1, k):
        powers.append(ctx.mul_arrays(powers[-1], zs))
    return powers

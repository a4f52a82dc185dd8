"""Negacyclic NTT over word-sized primes, vectorized with numpy.

Multiplication in Z_p[X]/(X^n + 1) is done as: twist by powers of a
primitive 2n-th root psi, cyclic NTT with omega = psi^2, pointwise
product, inverse transform, untwist.  Primes are < 2^28 so every
intermediate product fits comfortably in uint64.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["NTTContext", "negacyclic_mul", "schoolbook_negacyclic_mul"]


def _find_psi(p: int, n: int) -> int:
    """Smallest primitive 2n-th root of unity mod p (p must be 1 mod 2n)."""
    if (p - 1) % (2 * n) != 0:
        raise ValueError(f"{p} is not 1 mod {2 * n}")
    e = (p - 1) // (2 * n)
    for c in range(2, p):
        psi = pow(c, e, p)
        if pow(psi, n, p) == p - 1:
            return psi
    raise ValueError(f"no primitive 2*{n}-th root mod {p}")


def _bit_reverse_perm(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


class NTTContext:
    """Precomputed transform tables for one (prime, degree) pair."""

    def __init__(self, p: int, n: int):
        if n & (n - 1) or n < 2:
            raise ValueError("degree must be a power of two >= 2")
        self.p = p
        self.n = n
        psi = _find_psi(p, n)
        omega = (psi * psi) % p
        self.psi_pows = self._powers(psi, n)
        self.psi_inv_pows = self._powers(pow(psi, -1, p), n)
        self.n_inv = np.uint64(pow(n, -1, p))
        self.perm = _bit_reverse_perm(n)
        self.stage_tw = self._stage_tables(omega)
        self.stage_tw_inv = self._stage_tables(pow(omega, -1, p))
        self.up = np.uint64(p)

    def _powers(self, base: int, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        acc = 1
        for i in range(count):
            out[i] = acc
            acc = (acc * base) % self.p
        return out

    def _stage_tables(self, omega: int) -> dict:
        tables = {}
        size = 2
        while size <= self.n:
            w = pow(omega, self.n // size, self.p)
            tables[size] = self._powers(w, size // 2)
            size *= 2
        return tables

    def _transform(self, a: np.ndarray, tables: dict) -> np.ndarray:
        p = self.up
        a = a[..., self.perm]
        size = 2
        while size <= self.n:
            half = size // 2
            shaped = a.reshape(a.shape[:-1] + (-1, size))
            even = shaped[..., :half]
            odd = (shaped[..., half:] * tables[size]) % p
            a = np.concatenate(
                [(even + odd) % p, (even + p - odd) % p], axis=-1
            ).reshape(a.shape)
            size *= 2
        return a

    def forward(self, a: np.ndarray) -> np.ndarray:
        """Negacyclic forward transform of coefficients mod p."""
        a = (np.asarray(a, dtype=np.uint64) * self.psi_pows) % self.up
        return self._transform(a, self.stage_tw)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        a = self._transform(np.asarray(a, dtype=np.uint64), self.stage_tw_inv)
        a = (a * self.n_inv) % self.up
        return (a * self.psi_inv_pows) % self.up

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Product of two coefficient vectors in Z_p[X]/(X^n + 1)."""
        return self.inverse((self.forward(a) * self.forward(b)) % self.up)

    def pointwise(self, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
        return (fa * fb) % self.up


@lru_cache(maxsize=64)
def get_context(p: int, n: int) -> NTTContext:
    return NTTContext(p, n)


def negacyclic_mul(a, b, p: int, n: int) -> np.ndarray:
    return get_context(p, n).mul(a, b)


def schoolbook_negacyclic_mul(a, b, modulus: int) -> list:
    """O(n^2) reference product in Z_m[X]/(X^n + 1); the NTT oracle."""
    a = [int(x) for x in a]
    b = [int(x) for x in b]
    n = len(a)
    assert len(b) == n
    out = [0] * n
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            k = i + j
            if k < n:
                out[k] = (out[k] + ai * bj) % modulus
            else:
                out[k - n] = (out[k - n] - ai * bj) % modulus
    return out

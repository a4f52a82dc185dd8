"""Leveled RLWE encryption for the linear layers.

BFV-style scale-up encoding over R_q = Z_q[X]/(X^n + 1) with q held in
RNS form (a few NTT-friendly word-sized primes).  Only the operations
the inference protocol needs are provided: ciphertext addition and
plaintext-ciphertext multiplication at depth 1.  No relinearization,
rotations, or bootstrapping.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .ntt import get_context

__all__ = [
    "HEParams",
    "PublicKey",
    "SecretKey",
    "HECiphertext",
    "PackedPlaintext",
    "keygen",
    "encrypt",
    "decrypt",
    "eval_add",
    "eval_add_plain",
    "eval_plain_mul",
]

# Max log2(q) per ring degree for 128-bit security with ternary secrets,
# following the standard homomorphic-encryption parameter tables.
_SECURITY_TABLE_128 = {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438}

DEFAULT_RNS_PRIMES = (159645697, 159571969, 159563777, 159522817)  # ~2^109

ERR_SIGMA = 3.2
ERR_BOUND = 19  # 6 sigma, tail-clipped


class HEParameterError(ValueError):
    """Parameter set rejected (invalid or insecure)."""


class NoiseBudgetExhausted(RuntimeError):
    """Ciphertext noise estimate exceeds the decryptable bound."""


class DepthExceeded(RuntimeError):
    """Requested multiplication beyond the supported circuit depth."""


@dataclass(frozen=True)
class HEParams:
    """RLWE parameter set: degree n, plaintext modulus t, RNS primes for q."""

    poly_degree: int = 4096
    plain_modulus: int = 1 << 41
    rns_primes: tuple = DEFAULT_RNS_PRIMES
    security_bits: int = 128
    max_depth: int = 1
    allow_insecure: bool = False

    def __post_init__(self):
        n = self.poly_degree
        if n < 2 or n & (n - 1):
            raise HEParameterError("poly_degree must be a power of two")
        for p in self.rns_primes:
            if (p - 1) % (2 * n) != 0:
                raise HEParameterError(f"prime {p} is not 1 mod 2n")
        if self.ciphertext_modulus <= 2 * self.plain_modulus:
            raise HEParameterError("q must exceed 2t")
        if not self.allow_insecure:
            cap = _SECURITY_TABLE_128.get(n, 0)
            if math.log2(self.ciphertext_modulus) > cap:
                raise HEParameterError(
                    f"n={n}, log2(q)={math.log2(self.ciphertext_modulus):.1f} "
                    f"fails the {self.security_bits}-bit security table "
                    f"(max {cap}); pass allow_insecure for test-only sets"
                )

    @property
    def ciphertext_modulus(self) -> int:
        q = 1
        for p in self.rns_primes:
            q *= p
        return q

    @property
    def delta(self) -> int:
        return self.ciphertext_modulus // self.plain_modulus

    @property
    def max_noise_bits(self) -> float:
        return math.log2(self.delta) - 1.0

    @property
    def fresh_noise_bits(self) -> float:
        return math.log2(ERR_BOUND * (2 * self.poly_degree + 1))

    def params_hash(self) -> bytes:
        blob = struct.pack(
            "<QQ", self.poly_degree, self.plain_modulus % (1 << 64)
        ) + b"".join(struct.pack("<Q", p) for p in self.rns_primes)
        return hashlib.sha256(blob).digest()[:16]

    @classmethod
    def toy(cls) -> "HEParams":
        """Tiny insecure set (n=8) for exhaustive unit tests."""
        return cls(
            poly_degree=8,
            plain_modulus=64,
            rns_primes=(12289, 40961, 65537),
            allow_insecure=True,
        )


@dataclass
class SecretKey:
    params: HEParams
    s_rns: np.ndarray  # (limbs, n)


@dataclass
class PublicKey:
    params: HEParams
    b_rns: np.ndarray  # -(a*s + e)
    a_rns: np.ndarray


@dataclass
class HECiphertext:
    params: HEParams
    c0: np.ndarray  # (limbs, n)
    c1: np.ndarray
    noise_bits: float
    depth_left: int

    @property
    def noise_budget_estimate(self) -> float:
        return self.params.max_noise_bits - self.noise_bits

    def serialize(self) -> bytes:
        payload = self.params.params_hash()
        payload += struct.pack("<dI", self.noise_bits, self.depth_left)
        for poly in (self.c0, self.c1):
            raw = np.ascontiguousarray(poly, dtype="<u8").tobytes()
            payload += struct.pack("<I", len(raw)) + raw
        return payload

    @classmethod
    def deserialize(cls, data: bytes, params: HEParams) -> "HECiphertext":
        if data[:16] != params.params_hash():
            raise HEParameterError("ciphertext was produced under other params")
        noise_bits, depth_left = struct.unpack_from("<dI", data, 16)
        off = 16 + 12
        polys = []
        limbs = len(params.rns_primes)
        for _ in range(2):
            (ln,) = struct.unpack_from("<I", data, off)
            off += 4
            arr = np.frombuffer(data[off : off + ln], dtype="<u8")
            polys.append(arr.reshape(limbs, params.poly_degree).copy())
            off += ln
        return cls(params, polys[0], polys[1], noise_bits, depth_left)


@dataclass
class PackedPlaintext:
    """Polynomial mod t plus the layout that maps tensor slots to coefficients."""

    params: HEParams
    poly: np.ndarray  # (n,) uint64, coefficients in [0, t)
    layout: object = None
    _ntt_cache: object = field(default=None, repr=False, compare=False)


def _rns_ctxs(params: HEParams):
    return [get_context(p, params.poly_degree) for p in params.rns_primes]


def _to_rns(coeffs_signed: np.ndarray, params: HEParams) -> np.ndarray:
    """Signed int64 coefficients -> (limbs, n) residue array."""
    out = np.empty((len(params.rns_primes), params.poly_degree), dtype=np.uint64)
    for i, p in enumerate(params.rns_primes):
        out[i] = np.mod(coeffs_signed, p).astype(np.uint64)
    return out


def _unsigned_to_rns(coeffs: np.ndarray, params: HEParams) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.uint64)
    out = np.empty((len(params.rns_primes), params.poly_degree), dtype=np.uint64)
    for i, p in enumerate(params.rns_primes):
        out[i] = coeffs % np.uint64(p)
    return out


def _ternary(params: HEParams, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(-1, 2, size=params.poly_degree, dtype=np.int64)


def _gauss(params: HEParams, rng: np.random.Generator) -> np.ndarray:
    e = np.rint(rng.normal(0.0, ERR_SIGMA, size=params.poly_degree))
    return np.clip(e, -ERR_BOUND, ERR_BOUND).astype(np.int64)


def _rns_mul(a_rns, b_rns, params) -> np.ndarray:
    out = np.empty_like(a_rns)
    for i, ctx in enumerate(_rns_ctxs(params)):
        out[i] = ctx.mul(a_rns[i], b_rns[i])
    return out


def _rns_add(a_rns, b_rns, params) -> np.ndarray:
    out = np.empty_like(a_rns)
    for i, p in enumerate(params.rns_primes):
        out[i] = (a_rns[i] + b_rns[i]) % np.uint64(p)
    return out


def keygen(
    params: HEParams, rng: np.random.Generator | None = None
) -> tuple[PublicKey, SecretKey]:
    """Generate an RLWE keypair: s ternary, pk = (-(a s + e), a)."""
    if rng is None:
        rng = np.random.default_rng()
    s = _ternary(params, rng)
    e = _gauss(params, rng)
    s_rns = _to_rns(s, params)
    e_rns = _to_rns(e, params)
    a_rns = np.empty_like(s_rns)
    for i, p in enumerate(params.rns_primes):
        a_rns[i] = rng.integers(0, p, size=params.poly_degree, dtype=np.uint64)
    as_rns = _rns_mul(a_rns, s_rns, params)
    b_rns = np.empty_like(a_rns)
    for i, p in enumerate(params.rns_primes):
        b_rns[i] = (np.uint64(p) - (as_rns[i] + e_rns[i]) % np.uint64(p)) % np.uint64(p)
    return PublicKey(params, b_rns, a_rns), SecretKey(params, s_rns)


def encrypt(
    pk: PublicKey, pt: PackedPlaintext, rng: np.random.Generator | None = None
) -> HECiphertext:
    """BFV encryption: (b u + e1 + delta*m, a u + e2)."""
    if rng is None:
        rng = np.random.default_rng()
    params = pk.params
    if np.any(pt.poly >= np.uint64(params.plain_modulus)):
        raise ValueError("plaintext coefficients must be < t")
    u_rns = _to_rns(_ternary(params, rng), params)
    e1_rns = _to_rns(_gauss(params, rng), params)
    e2_rns = _to_rns(_gauss(params, rng), params)
    m_rns = _unsigned_to_rns(pt.poly, params)
    delta = params.delta
    c0 = _rns_add(_rns_mul(pk.b_rns, u_rns, params), e1_rns, params)
    c1 = _rns_add(_rns_mul(pk.a_rns, u_rns, params), e2_rns, params)
    for i, p in enumerate(params.rns_primes):
        dm = (np.uint64(delta % p) * m_rns[i]) % np.uint64(p)
        c0[i] = (c0[i] + dm) % np.uint64(p)
    return HECiphertext(params, c0, c1, params.fresh_noise_bits, params.max_depth)


def _crt_combine(v_rns: np.ndarray, params: HEParams) -> list:
    """(limbs, n) residues -> python-int coefficients in [0, q)."""
    q = params.ciphertext_modulus
    total = np.zeros(params.poly_degree, dtype=object)
    for i, p in enumerate(params.rns_primes):
        m_i = q // p
        c_i = (m_i * pow(m_i % p, -1, p)) % q
        total = total + c_i * v_rns[i].astype(object)
    return [int(x) % q for x in total]


def decrypt(sk: SecretKey, ct: HECiphertext) -> PackedPlaintext:
    """Recover m = round(t/q * [c0 + c1 s]_q) mod t."""
    params = sk.params
    if ct.params.params_hash() != params.params_hash():
        raise HEParameterError("key/ciphertext parameter mismatch")
    if ct.noise_budget_estimate <= 0:
        raise NoiseBudgetExhausted(
            f"noise estimate {ct.noise_bits:.1f} bits exceeds budget"
        )
    v = _rns_add(ct.c0, _rns_mul(ct.c1, sk.s_rns, params), params)
    q = params.ciphertext_modulus
    t = params.plain_modulus
    half_q = q // 2
    coeffs = _crt_combine(v, params)
    m = [((c * t + half_q) // q) % t for c in coeffs]
    return PackedPlaintext(params, np.array(m, dtype=np.uint64))


def eval_add(c1: HECiphertext, c2: HECiphertext) -> HECiphertext:
    if c1.params.params_hash() != c2.params.params_hash():
        raise HEParameterError("ciphertext parameter mismatch")
    params = c1.params
    return HECiphertext(
        params,
        _rns_add(c1.c0, c2.c0, params),
        _rns_add(c1.c1, c2.c1, params),
        max(c1.noise_bits, c2.noise_bits) + 1.0,
        min(c1.depth_left, c2.depth_left),
    )


def eval_add_plain(ct: HECiphertext, pt: PackedPlaintext) -> HECiphertext:
    """Add a plaintext polynomial into a ciphertext.

    Adds delta*m to c0; the rounding gap between delta and q/t
    contributes under one unit of noise for q >> t^2, so the estimate
    carries a fixed half-bit charge.
    """
    params = ct.params
    if np.any(pt.poly >= np.uint64(params.plain_modulus)):
        raise ValueError("plaintext coefficients must be < t")
    delta = params.delta
    c0 = np.empty_like(ct.c0)
    for i, p in enumerate(params.rns_primes):
        dm = (np.uint64(delta % p) * (pt.poly % np.uint64(p))) % np.uint64(p)
        c0[i] = (ct.c0[i] + dm) % np.uint64(p)
    return HECiphertext(
        params, c0, ct.c1.copy(), ct.noise_bits + 0.5, ct.depth_left
    )


def _centered_lift(poly: np.ndarray, t: int) -> np.ndarray:
    w = poly.astype(np.int64)
    return np.where(poly >= np.uint64((t + 1) // 2), w - np.int64(t), w)


def eval_plain_mul(ct: HECiphertext, pt: PackedPlaintext) -> HECiphertext:
    """Multiply a ciphertext by a plaintext polynomial (one depth level).

    Plaintext coefficients are lifted to the centered range so the noise
    growth tracks the actual weight magnitudes, not their ring encodings.
    """
    params = ct.params
    if ct.depth_left < 1:
        raise DepthExceeded("plaintext multiplication depth exhausted")
    w_signed = _centered_lift(pt.poly, params.plain_modulus)
    l1 = int(np.abs(w_signed).sum())
    if pt._ntt_cache is None:
        pt._ntt_cache = [
            ctx.forward(np.mod(w_signed, p).astype(np.uint64))
            for ctx, p in zip(_rns_ctxs(params), params.rns_primes)
        ]
    c0 = np.empty_like(ct.c0)
    c1 = np.empty_like(ct.c1)
    for i, ctx in enumerate(_rns_ctxs(params)):
        fw = pt._ntt_cache[i]
        c0[i] = ctx.inverse(ctx.pointwise(ctx.forward(ct.c0[i]), fw))
        c1[i] = ctx.inverse(ctx.pointwise(ctx.forward(ct.c1[i]), fw))
    noise = ct.noise_bits + math.log2(max(l1, 1) + 1)
    return HECiphertext(params, c0, c1, noise, ct.depth_left - 1)

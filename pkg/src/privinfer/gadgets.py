"""Two-party subprotocols over additive shares.

All gadgets are batched: inputs are flat uint64 share arrays, both
parties call the same function with their party id, a channel, and a
correlated-randomness provider, and stay in lockstep.  Comparison uses
a chunked millionaires' tree (4-bit chunks over 1-of-16 OT, AND-combine
with bit triples); multiplexing and boolean-to-arithmetic conversion
use one or two OTs per element; division and truncation are exact for
every ring value, including wrapped shares and negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import BaseChannel, Tag
from .ot.providers import CorrelatedRandomness
from .ring import RingConfig

CHUNK_BITS = 4

__all__ = [
    "BeaverTriple",
    "TripleReuseError",
    "gen_triples",
    "secure_mul",
    "positive",
    "wrap_bit",
    "mux",
    "b2a",
    "divide_public",
    "truncate",
    "relu",
]


class TripleReuseError(RuntimeError):
    """A Beaver triple was consumed twice."""


@dataclass
class BeaverTriple:
    """This party's shares of (a, b, c) with c = a*b; single use."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    used: bool = field(default=False)

    def consume(self):
        if self.used:
            raise TripleReuseError("Beaver triple already consumed")
        self.used = True

    def __len__(self):
        return len(self.a)


def gen_triples(
    prov: CorrelatedRandomness, n: int, cfg: RingConfig
) -> BeaverTriple:
    """Draw n multiplication triples from the provider backend."""
    a, b, c = prov.ring_triples(n, cfg.bit_width)
    m = cfg.umask()
    return BeaverTriple(a & m, b & m, c & m)


def _exchange(chan: BaseChannel, tag: Tag, party: int, arr: np.ndarray):
    return chan.exchange_array(tag, arr, party)


def and_bits(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """AND of XOR-shared bit vectors via boolean Beaver triples."""
    a, b, c = prov.bit_triples(len(x))
    ef = np.concatenate([x ^ a, y ^ b])
    other = _exchange(chan, Tag.CMP, party, ef)
    e, f = np.split(ef ^ other, 2)
    z = c ^ (f & a) ^ (e & b)
    if party == 0:
        z ^= e & f
    return z


def _reduce_lt_eq(party, chan, prov, pairs) -> np.ndarray:
    """Fold (lt, eq) chunk shares, highest chunk first, into one lt."""
    while len(pairs) > 1:
        nxt = []
        n_pairs = len(pairs) // 2
        his = pairs[0 : 2 * n_pairs : 2]
        los = pairs[1 : 2 * n_pairs : 2]
        xs = np.concatenate([p[1] for p in his] + [p[1] for p in his])
        ys = np.concatenate([p[0] for p in los] + [p[1] for p in los])
        out = and_bits(party, chan, prov, xs, ys)
        lt_parts, eq_parts = np.split(out, 2)
        width = len(his[0][0])
        for i, (hi, lo) in enumerate(zip(his, los)):
            lt = hi[0] ^ lt_parts[i * width : (i + 1) * width]
            eq = eq_parts[i * width : (i + 1) * width]
            nxt.append((lt, eq))
        if len(pairs) % 2:
            nxt.append(pairs[-1])
        pairs = nxt
    return pairs[0][0]


def gt_private(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    value: np.ndarray,
    nbits: int,
) -> np.ndarray:
    """Boolean shares of [beta > alpha].

    Party 0 supplies alpha, party 1 supplies beta (both private,
    ``value`` is the caller's own input).  Chunked comparison: one
    1-of-16 OT per 4-bit chunk, then an AND-combine tree.
    """
    n = len(value)
    n_chunks = -(-nbits // CHUNK_BITS)
    value = np.asarray(value, dtype=np.uint64)
    chunks = [
        ((value >> np.uint64(CHUNK_BITS * j)) & np.uint64(15)).astype(np.int64)
        for j in range(n_chunks)
    ]
    if party == 1:
        # sender: for each chunk value beta_j, mask [beta_j > t] and
        # [beta_j == t] with fresh random bits; shares are the masks
        beta = np.stack(chunks, axis=1).reshape(-1)  # (n*n_chunks,)
        t = np.arange(16, dtype=np.int64)
        rng = np.random.default_rng()
        r_lt = rng.integers(0, 2, size=len(beta), dtype=np.uint64)
        r_eq = rng.integers(0, 2, size=len(beta), dtype=np.uint64)
        lt = (beta[:, None] > t[None, :]).astype(np.uint64) ^ r_lt[:, None]
        eq = (beta[:, None] == t[None, :]).astype(np.uint64) ^ r_eq[:, None]
        prov.otn_send(lt | (eq << np.uint64(1)))
        lt_sh = r_lt.astype(np.uint8).reshape(n, n_chunks)
        eq_sh = r_eq.astype(np.uint8).reshape(n, n_chunks)
    else:
        alpha = np.stack(chunks, axis=1).reshape(-1)
        got = prov.otn_recv(alpha, 16)
        lt_sh = (got & np.uint64(1)).astype(np.uint8).reshape(n, n_chunks)
        eq_sh = ((got >> np.uint64(1)) & np.uint64(1)).astype(np.uint8).reshape(
            n, n_chunks
        )
    pairs = [
        (lt_sh[:, j], eq_sh[:, j]) for j in range(n_chunks - 1, -1, -1)
    ]
    return _reduce_lt_eq(party, chan, prov, pairs)


def wrap_bit(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    cfg: RingConfig,
) -> np.ndarray:
    """Boolean shares of [x0 + x1 >= 2^l] (share wrap-around)."""
    if party == 0:
        return gt_private(party, chan, prov, cfg.umask() - x, cfg.bit_width)
    return gt_private(party, chan, prov, x, cfg.bit_width)


def positive(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    cfg: RingConfig,
) -> np.ndarray:
    """Boolean shares of [signed(x) >= 0].

    The sign bit of x = x0 + x1 is msb(x0) ^ msb(x1) ^ carry of the
    low l-1 bits; the carry is one private comparison.
    """
    x = np.asarray(x, dtype=np.uint64) & cfg.umask()
    low_mask = np.uint64(cfg.half - 1)
    low = x & low_mask
    msb = (x >> np.uint64(cfg.bit_width - 1)).astype(np.uint8)
    if party == 0:
        carry = gt_private(party, chan, prov, low_mask - low, cfg.bit_width - 1)
        return np.uint8(1) ^ msb ^ carry
    carry = gt_private(party, chan, prov, low, cfg.bit_width - 1)
    return msb ^ carry


def b2a(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    bits: np.ndarray,
    cfg: RingConfig,
) -> np.ndarray:
    """Arithmetic shares of an XOR-shared bit vector; one OT each."""
    n = len(bits)
    bits = np.asarray(bits, dtype=np.uint8)
    if party == 0:
        rng = np.random.default_rng()
        s = rng.integers(0, 1 << 63, size=n, dtype=np.uint64)
        prov.ot2_send(bits.astype(np.uint64) - s, (bits ^ 1).astype(np.uint64) - s)
        return s & cfg.umask()
    return prov.ot2_recv(bits) & cfg.umask()


def mux(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    d: np.ndarray,
    x: np.ndarray,
    cfg: RingConfig,
) -> np.ndarray:
    """Shares of (d ? x : 0); two OTs per element."""
    n = len(x)
    d = np.asarray(d, dtype=np.uint8)
    x = np.asarray(x, dtype=np.uint64)
    rng = np.random.default_rng()
    s = rng.integers(0, 1 << 63, size=n, dtype=np.uint64)
    m0 = d.astype(np.uint64) * x - s
    m1 = (d ^ 1).astype(np.uint64) * x - s
    if party == 0:
        prov.ot2_send(m0, m1)
        got = prov.ot2_recv(d)
    else:
        got = prov.ot2_recv(d)
        prov.ot2_send(m0, m1)
    return (s + got) & cfg.umask()


def secure_mul(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    y: np.ndarray,
    cfg: RingConfig,
    triple: BeaverTriple | None = None,
) -> np.ndarray:
    """Shares of x*y via a Beaver triple; two ring elements exchanged."""
    x = np.asarray(x, dtype=np.uint64)
    y = np.asarray(y, dtype=np.uint64)
    if triple is None:
        triple = gen_triples(prov, len(x), cfg)
    if len(triple) < len(x):
        raise ValueError("triple batch smaller than operand")
    triple.consume()
    a, b, c = triple.a[: len(x)], triple.b[: len(x)], triple.c[: len(x)]
    ef = np.concatenate([x - a, y - b])
    other = _exchange(chan, Tag.MULT, party, ef)
    e, f = np.split((ef + other) & cfg.umask(), 2)
    z = c + e * b + f * a
    if party == 0:
        z = z + e * f
    return z & cfg.umask()


def divide_public(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    divisor: int,
    cfg: RingConfig,
) -> np.ndarray:
    """Shares of floor(signed(x) / divisor), exact for every ring value.

    Decomposes x_i = divisor*q_i + r_i and corrects for the share wrap
    w and the sign s:  floor(v/divisor) = q0 + q1 - (w+s)*Q + floor(rho/divisor)
    with Q = 2^l // divisor and rho = r0 + r1 - (w+s)*(2^l mod divisor).
    """
    if divisor < 1:
        raise ZeroDivisionError("divisor must be a positive integer")
    x = np.asarray(x, dtype=np.uint64) & cfg.umask()
    if divisor == 1:
        return x
    udiv = np.uint64(divisor)
    q_loc = x // udiv
    r_loc = x % udiv
    big_q = np.uint64(cfg.modulus // divisor)
    big_r = cfg.modulus % divisor

    w = wrap_bit(party, chan, prov, x, cfg)
    d_pos = positive(party, chan, prov, x, cfg)
    s = d_pos ^ np.uint8(1) if party == 0 else d_pos

    if big_r == 0:
        # rho = r0 + r1 in [0, 2*divisor - 2]; its quotient bit is one
        # more private comparison on the low log2(divisor) bits
        nbits = divisor.bit_length() - 1
        if party == 0:
            b3 = gt_private(party, chan, prov, udiv - np.uint64(1) - r_loc, nbits)
        else:
            b3 = gt_private(party, chan, prov, r_loc, nbits)
        ws_a = b2a(party, chan, prov, np.concatenate([w, s, b3]), cfg)
        w_a, s_a, b3_a = np.split(ws_a, 3)
        out = q_loc - (w_a + s_a) * big_q + b3_a
        return out & cfg.umask()

    ws_a = b2a(party, chan, prov, np.concatenate([w, s]), cfg)
    w_a, s_a = np.split(ws_a, 2)
    rho = r_loc - (w_a + s_a) * np.uint64(big_r)
    rho_p = rho.copy()
    rho_m = rho.copy()
    if party == 0:
        rho_p = rho_p + udiv
        rho_m = rho_m - udiv
    bits = positive(
        party, chan, prov, np.concatenate([rho_p, rho, rho_m]) & cfg.umask(), cfg
    )
    b_a = b2a(party, chan, prov, bits, cfg)
    b1, b2, b3 = np.split(b_a, 3)
    out = q_loc - (w_a + s_a) * big_q + b1 + b2 + b3
    if party == 0:
        out = out - np.uint64(2)
    return out & cfg.umask()


def truncate(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    shift: int,
    cfg: RingConfig,
    mode: str = "faithful",
) -> np.ndarray:
    """Shares of signed(x) >> shift.

    ``faithful`` runs the exact division protocol; ``local`` is the
    communication-free approximation with a 1-ULP error and a rare
    large wrap error.
    """
    if shift >= cfg.bit_width:
        raise ValueError("shift must be below the ring width")
    if mode == "faithful":
        return divide_public(party, chan, prov, x, 1 << shift, cfg)
    if mode != "local":
        raise ValueError(f"unknown truncation mode {mode!r}")
    x = np.asarray(x, dtype=np.uint64) & cfg.umask()
    if party == 0:
        return x >> np.uint64(shift)
    return (-((np.uint64(cfg.modulus) - x) >> np.uint64(shift))) & cfg.umask()


def relu(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    x: np.ndarray,
    cfg: RingConfig,
) -> np.ndarray:
    """Shares of max(signed(x), 0): sign test then multiplex."""
    d = positive(party, chan, prov, x, cfg)
    return mux(party, chan, prov, d, x, cfg)

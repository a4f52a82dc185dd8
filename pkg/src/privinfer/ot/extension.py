"""IKNP-style OT extension.

A handful of base OTs in the reversed direction seed two pseudorandom
bit matrices; after one column-wise correction message the sender holds
per-row key pairs and the receiver the key for its choice bit.  Keys
are hashed into message pads (Beaver derandomization turns the random
OTs into chosen-message OTs with one correction message each).
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from ..channel import BaseChannel, Tag, pack_array, unpack_array
from .base import KEY_LEN, base_ot_recv, base_ot_send

KAPPA = 128  # extension width / computational security parameter


class OTReuseError(RuntimeError):
    """A random-OT instance was consumed twice."""


def _prg_bits(seed: bytes, n: int) -> np.ndarray:
    key = int.from_bytes(seed, "little")
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.integers(0, 2, size=n, dtype=np.uint8)


def _hash_rows(rows: np.ndarray, salt: bytes, start: int) -> np.ndarray:
    """(n, KAPPA) bit rows -> (n, KEY_LEN) pads."""
    packed = np.packbits(rows, axis=1)
    out = np.empty((rows.shape[0], KEY_LEN), dtype=np.uint8)
    for j in range(rows.shape[0]):
        h = hashlib.blake2b(
            packed[j].tobytes(), digest_size=KEY_LEN, salt=salt[:8]
        )
        h.update((start + j).to_bytes(8, "little"))
        out[j] = np.frombuffer(h.digest(), dtype=np.uint8)
    return out


class IknpSender:
    """Holds s and the base-OT seeds; produces per-row pad pairs."""

    def __init__(self, chan: BaseChannel):
        self.chan = chan
        self.s = np.frombuffer(os.urandom(KAPPA), dtype=np.uint8) % 2
        seeds = base_ot_recv(chan, [int(b) for b in self.s])
        self.seeds = seeds
        self.counter = 0

    def extend(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Returns pads (n, 2, KEY_LEN); receiver gets pads[j, r_j]."""
        _, payload = self.chan.recv(Tag.OT_EXTEND)
        u = unpack_array(payload)  # (KAPPA, n)
        q = np.empty((KAPPA, n), dtype=np.uint8)
        for i in range(KAPPA):
            col = _prg_bits(self.seeds[i], n)
            q[i] = col ^ (u[i] & self.s[i])
        rows = q.T
        p0 = _hash_rows(rows, b"iknp-ext", self.counter)
        p1 = _hash_rows(rows ^ self.s[None, :], b"iknp-ext", self.counter)
        self.counter += n
        return p0, p1


class IknpReceiver:
    """Generates the t-matrix and correction columns for its choices."""

    def __init__(self, chan: BaseChannel):
        self.chan = chan
        self.pairs = [(os.urandom(KEY_LEN), os.urandom(KEY_LEN)) for _ in range(KAPPA)]
        base_ot_send(chan, self.pairs)
        self.counter = 0

    def extend(self, choices: np.ndarray) -> np.ndarray:
        """Returns pads (n, KEY_LEN) for choice bits."""
        choices = np.asarray(choices, dtype=np.uint8)
        n = len(choices)
        t = np.empty((KAPPA, n), dtype=np.uint8)
        u = np.empty((KAPPA, n), dtype=np.uint8)
        for i, (k0, k1) in enumerate(self.pairs):
            t[i] = _prg_bits(k0, n)
            u[i] = t[i] ^ _prg_bits(k1, n) ^ choices
        self.chan.send(Tag.OT_EXTEND, pack_array(u))
        pads = _hash_rows(t.T, b"iknp-ext", self.counter)
        self.counter += n
        return pads


def pads_to_u64(pads: np.ndarray) -> np.ndarray:
    """First 8 bytes of each pad as a uint64 mask."""
    return pads[:, :8].copy().view("<u8").reshape(-1)


class RandomOTBatch:
    """n random-message OT instances with one-time-use enforcement.

    The sender side holds pad pairs, the receiver side its choice bits
    and chosen pads.  ``derandomize_*`` converts an index range into a
    chosen-message transfer with a single correction message.
    """

    def __init__(self, role: str, chan: BaseChannel, pads, choices=None):
        self.role = role
        self.chan = chan
        self.pads = pads
        self.choices = choices
        n = pads[0].shape[0] if role == "sender" else pads.shape[0]
        self.used = np.zeros(n, dtype=bool)

    def _consume(self, idx: np.ndarray):
        if np.any(self.used[idx]):
            raise OTReuseError("random-OT instance already consumed")
        self.used[idx] = True

    def derandomize_send(self, idx: np.ndarray, m0: np.ndarray, m1: np.ndarray):
        """Sender side: transfer chosen uint64 messages over instances idx."""
        self._consume(idx)
        p0 = pads_to_u64(self.pads[0][idx])
        p1 = pads_to_u64(self.pads[1][idx])
        flip = self.chan.recv_array(Tag.OT_CORRECTION)  # receiver's bit flips
        a = np.where(flip == 0, p0, p1)
        b = np.where(flip == 0, p1, p0)
        masked = np.stack([m0 - a, m1 - b], axis=1)
        self.chan.send_array(Tag.OT_CORRECTION, masked)

    def derandomize_recv(self, idx: np.ndarray, bits: np.ndarray) -> np.ndarray:
        """Receiver side: obtain m_bits over instances idx."""
        self._consume(idx)
        bits = np.asarray(bits, dtype=np.uint8)
        flip = bits ^ self.choices[idx]
        self.chan.send_array(Tag.OT_CORRECTION, flip)
        masked = self.chan.recv_array(Tag.OT_CORRECTION)
        pad = pads_to_u64(self.pads[idx])
        return masked[np.arange(len(idx)), bits] + pad


def random_ot_batch(
    role: str, chan: BaseChannel, n: int, ext
) -> RandomOTBatch:
    """Run the extension for n random OTs and wrap them one-time."""
    if role == "sender":
        p0, p1 = ext.extend(n)
        return RandomOTBatch("sender", chan, (p0, p1))
    choices = np.frombuffer(os.urandom(n), dtype=np.uint8) % 2
    pads = ext.extend(choices)
    return RandomOTBatch("receiver", chan, pads, choices)

"""Correlated-randomness providers behind one interface.

The nonlinear gadgets consume batched chosen-message OTs and Beaver
triples through this API.  Two backends exist:

* ``OTProvider`` — the real thing: base OT + IKNP extension, Gilboa
  ring triples, OT-derived bit triples.
* ``DealerProvider`` — a trusted dealer standing in for the offline
  phase.  Both parties derive identical correlated randomness from a
  shared seed; the online correction messages still flow so protocol
  structure and communication accounting stay faithful.  Test-only and
  explicitly insecure.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..channel import BaseChannel, Tag
from .extension import IknpReceiver, IknpSender, pads_to_u64

__all__ = ["DealerProvider", "OTProvider", "make_provider"]

_U64 = (1 << 64) - 1


class CorrelatedRandomness:
    """Batched OT and triple interface; one instance per party per session."""

    def __init__(self, party: int, chan: BaseChannel):
        self.party = party
        self.chan = chan

    # 1-out-of-2 chosen-message OT on uint64 words
    def ot2_send(self, m0: np.ndarray, m1: np.ndarray):
        raise NotImplementedError

    def ot2_recv(self, bits: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # 1-out-of-N chosen-message OT on uint64 words
    def otn_send(self, msgs: np.ndarray):
        raise NotImplementedError

    def otn_recv(self, choices: np.ndarray, n_msgs: int) -> np.ndarray:
        raise NotImplementedError

    def bit_triples(self, n: int):
        raise NotImplementedError

    def ring_triples(self, n: int, bit_width: int = 64):
        raise NotImplementedError


class DealerProvider(CorrelatedRandomness):
    """Dealer-backed correlated randomness from a shared seed."""

    def __init__(self, party: int, chan: BaseChannel, seed: int):
        super().__init__(party, chan)
        self._rng = np.random.Generator(np.random.Philox(key=seed))

    def _draw_u64(self, shape) -> np.ndarray:
        lo = self._rng.integers(0, 1 << 32, size=shape, dtype=np.uint64)
        hi = self._rng.integers(0, 1 << 32, size=shape, dtype=np.uint64)
        return (hi << np.uint64(32)) | lo

    def ot2_send(self, m0, m1):
        n = len(m0)
        pads = self._draw_u64((n, 2))
        self._rng.integers(0, 2, size=n, dtype=np.uint8)  # rho, receiver side
        flip = self.chan.recv_array(Tag.OT_CORRECTION)
        a = np.where(flip == 0, pads[:, 0], pads[:, 1])
        b = np.where(flip == 0, pads[:, 1], pads[:, 0])
        masked = np.stack([np.asarray(m0, dtype=np.uint64) - a,
                           np.asarray(m1, dtype=np.uint64) - b], axis=1)
        self.chan.send_array(Tag.OT_CORRECTION, masked)

    def ot2_recv(self, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        n = len(bits)
        pads = self._draw_u64((n, 2))
        rho = self._rng.integers(0, 2, size=n, dtype=np.uint8)
        self.chan.send_array(Tag.OT_CORRECTION, bits ^ rho)
        masked = self.chan.recv_array(Tag.OT_CORRECTION)
        mine = pads[np.arange(n), rho]
        return masked[np.arange(n), bits] + mine

    def otn_send(self, msgs):
        msgs = np.asarray(msgs, dtype=np.uint64)
        n, nm = msgs.shape
        pads = self._draw_u64((n, nm))
        self._rng.integers(0, nm, size=n)  # rho, receiver side
        shift = self.chan.recv_array(Tag.OT_CORRECTION)
        cols = (np.arange(nm)[None, :] - shift[:, None]) % nm
        masked = msgs - pads[np.arange(n)[:, None], cols]
        self.chan.send_array(Tag.OT_CORRECTION, masked)

    def otn_recv(self, choices, n_msgs):
        choices = np.asarray(choices, dtype=np.int64)
        n = len(choices)
        pads = self._draw_u64((n, n_msgs))
        rho = self._rng.integers(0, n_msgs, size=n)
        self.chan.send_array(Tag.OT_CORRECTION, (choices - rho) % n_msgs)
        masked = self.chan.recv_array(Tag.OT_CORRECTION)
        return masked[np.arange(n), choices] + pads[np.arange(n), rho]

    def bit_triples(self, n):
        a0 = self._rng.integers(0, 2, size=n, dtype=np.uint8)
        b0 = self._rng.integers(0, 2, size=n, dtype=np.uint8)
        c0 = self._rng.integers(0, 2, size=n, dtype=np.uint8)
        a1 = self._rng.integers(0, 2, size=n, dtype=np.uint8)
        b1 = self._rng.integers(0, 2, size=n, dtype=np.uint8)
        c1 = ((a0 ^ a1) & (b0 ^ b1)) ^ c0
        if self.party == 0:
            return a0, b0, c0
        return a1, b1, c1

    def ring_triples(self, n, bit_width: int = 64):
        a0, b0, c0 = self._draw_u64((3, n))
        a1, b1 = self._draw_u64((2, n))
        c1 = (a0 + a1) * (b0 + b1) - c0
        if self.party == 0:
            return a0, b0, c0
        return a1, b1, c1


class OTProvider(CorrelatedRandomness):
    """Real backend: base OT + IKNP extension, built lazily per direction."""

    def __init__(self, party: int, chan: BaseChannel):
        super().__init__(party, chan)
        self._send_ext = None  # this party as OT sender
        self._recv_ext = None

    def _sender_ext(self) -> IknpSender:
        if self._send_ext is None:
            self._send_ext = IknpSender(self.chan)
        return self._send_ext

    def _receiver_ext(self) -> IknpReceiver:
        if self._recv_ext is None:
            self._recv_ext = IknpReceiver(self.chan)
        return self._recv_ext

    def ot2_send(self, m0, m1):
        n = len(m0)
        p0, p1 = self._sender_ext().extend(n)
        masked = np.stack(
            [np.asarray(m0, dtype=np.uint64) - pads_to_u64(p0),
             np.asarray(m1, dtype=np.uint64) - pads_to_u64(p1)], axis=1
        )
        self.chan.send_array(Tag.OT_CORRECTION, masked)

    def ot2_recv(self, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        pads = self._receiver_ext().extend(bits)
        masked = self.chan.recv_array(Tag.OT_CORRECTION)
        return masked[np.arange(len(bits)), bits] + pads_to_u64(pads)

    @staticmethod
    def _combine(keys: np.ndarray, idx: int, t: int) -> int:
        h = hashlib.blake2b(keys.tobytes(), digest_size=8)
        h.update(idx.to_bytes(8, "little"))
        h.update(t.to_bytes(2, "little"))
        return int.from_bytes(h.digest(), "little")

    def otn_send(self, msgs):
        msgs = np.asarray(msgs, dtype=np.uint64)
        n, nm = msgs.shape
        nbits = (nm - 1).bit_length()
        p0, p1 = self._sender_ext().extend(n * nbits)
        p0 = p0.reshape(n, nbits, -1)
        p1 = p1.reshape(n, nbits, -1)
        shift = self.chan.recv_array(Tag.OT_CORRECTION)
        masked = np.empty((n, nm), dtype=np.uint64)
        for j in range(n):
            for t in range(nm):
                rho_t = (t - int(shift[j])) % nm
                keys = np.stack(
                    [p1[j, b] if (rho_t >> b) & 1 else p0[j, b] for b in range(nbits)]
                )
                masked[j, t] = np.uint64(
                    (int(msgs[j, t]) - self._combine(keys, j, rho_t)) & _U64
                )
        self.chan.send_array(Tag.OT_CORRECTION, masked)

    def otn_recv(self, choices, n_msgs):
        choices = np.asarray(choices, dtype=np.int64)
        n = len(choices)
        nbits = (n_msgs - 1).bit_length()
        rho = np.random.default_rng().integers(0, n_msgs, size=n)
        bits = ((rho[:, None] >> np.arange(nbits)[None, :]) & 1).astype(np.uint8)
        pads = self._receiver_ext().extend(bits.ravel()).reshape(n, nbits, -1)
        self.chan.send_array(Tag.OT_CORRECTION, (choices - rho) % n_msgs)
        masked = self.chan.recv_array(Tag.OT_CORRECTION)
        out = np.empty(n, dtype=np.uint64)
        for j in range(n):
            keys = pads[j]
            out[j] = np.uint64(
                (int(masked[j, choices[j]]) + self._combine(keys, j, int(rho[j])))
                & _U64
            )
        return out

    def bit_triples(self, n):
        rng = np.random.default_rng()
        a = rng.integers(0, 2, size=n, dtype=np.uint8)
        b = rng.integers(0, 2, size=n, dtype=np.uint8)
        s = rng.integers(0, 2, size=n, dtype=np.uint8)
        if self.party == 0:
            self.ot2_send(s.astype(np.uint64), (s ^ a).astype(np.uint64))
            u = self.ot2_recv(b).astype(np.uint8) & 1
        else:
            u = self.ot2_recv(b).astype(np.uint8) & 1
            self.ot2_send(s.astype(np.uint64), (s ^ a).astype(np.uint64))
        c = (a & b) ^ s ^ u
        return a, b, c

    def ring_triples(self, n, bit_width: int = 64):
        rng = np.random.default_rng()
        lo = rng.integers(0, 1 << 32, size=(2, n), dtype=np.uint64)
        hi = rng.integers(0, 1 << 32, size=(2, n), dtype=np.uint64)
        a, b = (hi << np.uint64(32)) | lo
        L = bit_width
        r = ((rng.integers(0, 1 << 32, size=(n, L), dtype=np.uint64) << np.uint64(32))
             | rng.integers(0, 1 << 32, size=(n, L), dtype=np.uint64))
        shifts = np.uint64(1) << np.arange(L, dtype=np.uint64)
        corr0 = r + a[:, None] * shifts[None, :]
        peer_bits = ((b[:, None] >> np.arange(L, dtype=np.uint64)[None, :])
                     & np.uint64(1)).astype(np.uint8)
        if self.party == 0:
            self.ot2_send(r.ravel(), corr0.ravel())
            got = self.ot2_recv(peer_bits.ravel()).reshape(n, L)
        else:
            got = self.ot2_recv(peer_bits.ravel()).reshape(n, L)
            self.ot2_send(r.ravel(), corr0.ravel())
        my_cross = got.sum(axis=1, dtype=np.uint64)
        sent_cross = r.sum(axis=1, dtype=np.uint64)
        c = a * b - sent_cross + my_cross
        return a, b, c


def make_provider(backend: str, party: int, chan: BaseChannel,
                  seed: int | None = None) -> CorrelatedRandomness:
    if backend == "dealer":
        if seed is None:
            raise ValueError("dealer backend needs a shared seed")
        return DealerProvider(party, chan, seed)
    if backend == "real":
        return OTProvider(party, chan)
    raise ValueError(f"unknown OT backend {backend!r}")

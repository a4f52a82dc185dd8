"""2-of-2 additive secret sharing over Z_{2^l}.

A tensor x is split into (x - r, r) with r uniform over the ring, so
either share alone is uniformly distributed and reveals nothing.
Public constants are folded into party 0's share by convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ring import FixedTensor, RingConfig, RingMismatchError

MODEL_OWNER = 0
CLOUD = 1


class PartyMismatchError(ValueError):
    """Share operands belong to different parties."""


def ring_uniform(shape, cfg: RingConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform uint64 samples over [0, 2^l)."""
    lo = rng.integers(0, 1 << 32, size=shape, dtype=np.uint64)
    hi = rng.integers(0, 1 << 32, size=shape, dtype=np.uint64)
    return ((hi << np.uint64(32)) | lo) & cfg.umask()


@dataclass
class ArithShare:
    """One party's additive share of a tensor."""

    party: int
    values: FixedTensor

    def __post_init__(self):
        if self.party not in (0, 1):
            raise ValueError(f"party must be 0 or 1, got {self.party}")

    @property
    def config(self) -> RingConfig:
        return self.values.config

    @property
    def shape(self) -> tuple:
        return self.values.shape


@dataclass
class SharedTensor:
    """Both shares of one tensor; a convenience for in-process tests."""

    share0: ArithShare
    share1: ArithShare

    def __post_init__(self):
        if (self.share0.party, self.share1.party) != (0, 1):
            raise ValueError("share0/share1 party ids must be (0, 1)")
        if self.share0.shape != self.share1.shape:
            raise ValueError("share shapes differ")
        if self.share0.config != self.share1.config:
            raise RingMismatchError("share configs differ")


def share(
    x: FixedTensor, rng: np.random.Generator | None = None
) -> SharedTensor:
    """Split x into (x - r, r) with r uniform over the ring."""
    if rng is None:
        rng = np.random.default_rng()
    cfg = x.config
    r = ring_uniform(x.shape, cfg, rng)
    s0 = (x.data - r) & cfg.umask()
    return SharedTensor(
        ArithShare(0, FixedTensor(s0, cfg)),
        ArithShare(1, FixedTensor(r, cfg)),
    )


def reconstruct(s: SharedTensor) -> FixedTensor:
    """Sum the two shares mod 2^l."""
    return s.share0.values + s.share1.values


def add_shares(a: ArithShare, b: ArithShare) -> ArithShare:
    """Local share addition; both operands must belong to the same party."""
    if a.party != b.party:
        raise PartyMismatchError(f"parties differ: {a.party} vs {b.party}")
    return ArithShare(a.party, a.values + b.values)


def sub_shares(a: ArithShare, b: ArithShare) -> ArithShare:
    if a.party != b.party:
        raise PartyMismatchError(f"parties differ: {a.party} vs {b.party}")
    return ArithShare(a.party, a.values - b.values)


def add_public(a: ArithShare, c: FixedTensor) -> ArithShare:
    """Add a public constant; only party 0 adjusts its share."""
    if a.config != c.config:
        raise RingMismatchError("config mismatch")
    if a.party == 0:
        return ArithShare(0, a.values + c)
    return a


def mul_public(a: ArithShare, c: FixedTensor) -> ArithShare:
    """Multiply by a public constant; both parties scale locally.

    When c carries a fixed-point scale the product picks up an extra
    2^frac_bits factor; follow with a truncation gadget.
    """
    if a.config != c.config:
        raise RingMismatchError("config mismatch")
    return ArithShare(a.party, a.values * c)

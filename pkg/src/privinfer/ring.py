"""Modular-ring arithmetic and fixed-point encoding.

All secret-shared values live in Z_{2^l} with a fixed-point scale of
2^frac_bits.  Negative reals map to the upper half of the ring
(two's complement).  Arrays are stored as uint64; since 2^l divides
2^64 for l <= 64, native uint64 wraparound is exact modulo 2^l after
masking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RingConfig",
    "FixedTensor",
    "encode_fixed",
    "decode_fixed",
    "ring_add",
    "ring_sub",
    "ring_mul",
    "to_signed",
    "from_signed",
]


class RingMismatchError(ValueError):
    """Operands belong to different ring configurations."""


class FixedPointOverflowError(OverflowError):
    """Real value outside the representable fixed-point range."""


@dataclass(frozen=True)
class RingConfig:
    """Ring Z_{2^bit_width} with frac_bits of fixed-point precision."""

    bit_width: int = 41
    frac_bits: int = 12

    def __post_init__(self):
        if not (2 <= self.frac_bits < self.bit_width <= 64):
            raise ValueError(
                f"need 2 <= frac_bits < bit_width <= 64, got "
                f"frac_bits={self.frac_bits}, bit_width={self.bit_width}"
            )

    @property
    def modulus(self) -> int:
        return 1 << self.bit_width

    @property
    def mask(self) -> int:
        return self.modulus - 1

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def half(self) -> int:
        """First ring value interpreted as negative."""
        return 1 << (self.bit_width - 1)

    @property
    def max_real(self) -> float:
        """Exclusive bound on |r| for encode_fixed."""
        return float(1 << (self.bit_width - self.frac_bits - 1))

    def umask(self) -> np.uint64:
        return np.uint64(self.mask)


DEFAULT_CONFIG = RingConfig()


def encode_fixed(r: float, cfg: RingConfig = DEFAULT_CONFIG) -> int:
    """Encode a real number as round(r * 2^frac_bits) mod 2^l.

    Rounding is half-away-from-zero; negatives land in the upper half
    of the ring.
    """
    if not abs(r) < cfg.max_real:
        raise FixedPointOverflowError(
            f"|{r}| >= 2^{cfg.bit_width - cfg.frac_bits - 1} not representable"
        )
    mag = math.floor(abs(r) * cfg.scale + 0.5)
    return (-mag if r < 0 else mag) % cfg.modulus


def decode_fixed(e: int, cfg: RingConfig = DEFAULT_CONFIG) -> float:
    """Decode a ring element back to a real; upper half is negative."""
    e = int(e) & cfg.mask
    if e >= cfg.half:
        e -= cfg.modulus
    return e / cfg.scale


def to_signed(v: np.ndarray, cfg: RingConfig) -> np.ndarray:
    """Two's-complement interpretation of ring values as int64."""
    v = np.asarray(v, dtype=np.uint64)
    s = v.astype(np.int64)
    if cfg.bit_width == 64:
        return s  # int64 view is already two's complement
    return np.where(v >= np.uint64(cfg.half), s - np.int64(cfg.modulus), s)


def from_signed(s: np.ndarray, cfg: RingConfig) -> np.ndarray:
    """Map signed int64 values back into [0, 2^l)."""
    return np.asarray(s).astype(np.uint64) & cfg.umask()


def _check_cfg(a: "FixedTensor", b: "FixedTensor"):
    if a.config != b.config:
        raise RingMismatchError(f"ring configs differ: {a.config} vs {b.config}")


def ring_add(a: int, b: int, cfg: RingConfig = DEFAULT_CONFIG) -> int:
    return (int(a) + int(b)) & cfg.mask


def ring_sub(a: int, b: int, cfg: RingConfig = DEFAULT_CONFIG) -> int:
    return (int(a) - int(b)) & cfg.mask


def ring_mul(a: int, b: int, cfg: RingConfig = DEFAULT_CONFIG) -> int:
    return (int(a) * int(b)) & cfg.mask


@dataclass
class FixedTensor:
    """A tensor of ring elements with an attached ring configuration.

    ``data`` is a uint64 array of any shape; row-major order.  The batch
    dimension, when present, is the leading axis.
    """

    data: np.ndarray
    config: RingConfig = DEFAULT_CONFIG

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint64) & self.config.umask()

    @property
    def shape(self) -> tuple:
        return tuple(self.data.shape)

    @classmethod
    def from_real(cls, values, cfg: RingConfig = DEFAULT_CONFIG) -> "FixedTensor":
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.abs(arr) < cfg.max_real):
            raise FixedPointOverflowError("values outside representable range")
        mag = np.floor(np.abs(arr) * cfg.scale + 0.5)
        enc = np.where(arr < 0, -mag, mag).astype(np.int64)
        return cls(enc.astype(np.uint64) & cfg.umask(), cfg)

    @classmethod
    def from_ints(cls, values, cfg: RingConfig = DEFAULT_CONFIG) -> "FixedTensor":
        return cls(np.asarray(values, dtype=np.int64).astype(np.uint64) & cfg.umask(), cfg)

    @classmethod
    def zeros(cls, shape, cfg: RingConfig = DEFAULT_CONFIG) -> "FixedTensor":
        return cls(np.zeros(shape, dtype=np.uint64), cfg)

    def to_real(self) -> np.ndarray:
        return to_signed(self.data, self.config).astype(np.float64) / self.config.scale

    def signed(self) -> np.ndarray:
        return to_signed(self.data, self.config)

    def reshape(self, shape) -> "FixedTensor":
        return FixedTensor(self.data.reshape(shape), self.config)

    def __add__(self, other: "FixedTensor") -> "FixedTensor":
        _check_cfg(self, other)
        return FixedTensor(self.data + other.data, self.config)

    def __sub__(self, other: "FixedTensor") -> "FixedTensor":
        _check_cfg(self, other)
        return FixedTensor(self.data - other.data, self.config)

    def __mul__(self, other: "FixedTensor") -> "FixedTensor":
        _check_cfg(self, other)
        return FixedTensor(self.data * other.data, self.config)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FixedTensor):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.data, other.data)

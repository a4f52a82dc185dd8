"""Coefficient packing for homomorphic linear layers.

One negacyclic polynomial product evaluates many inner products at
once.  For matrix-vector products the input vector is packed forward
and each weight row is packed reversed at its own offset, so row i's
inner product lands at coefficient (i+1)*d - 1.  For 2-D convolution
the padded input is packed row-major and the kernel reversed, placing
every stride-1 output pixel at a fixed coefficient.  Layouts are sized
so that no product term wraps around X^n + 1; geometries that do not
fit are tiled (column chunks for matvec, channel chunks and horizontal
bands for conv).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MatvecPlan", "Conv2dPlan", "PackingCapacityError"]


class PackingCapacityError(ValueError):
    """Geometry cannot be laid out in the polynomial ring."""


class MatvecPlan:
    """Layout for y = W x with W of shape (out_dim, in_dim).

    Columns are split into uniform chunks of width ``d``; each chunk
    contributes one input polynomial.  Rows are split into groups of
    ``rows_per_poly``; all column chunks of one row group share result
    slots, so their ciphertexts may be summed before decryption.
    """

    def __init__(self, n: int, out_dim: int, in_dim: int):
        if out_dim < 1 or in_dim < 1:
            raise PackingCapacityError("empty matrix")
        self.n = n
        self.out_dim = out_dim
        self.in_dim = in_dim
        self.d = min(in_dim, (n + 1) // 2)
        self.n_col_chunks = -(-in_dim // self.d)
        self.rows_per_poly = max(1, (n + 1 - self.d) // self.d)
        self.rows_per_poly = min(self.rows_per_poly, out_dim)
        self.n_row_groups = -(-out_dim // self.rows_per_poly)

    def pack_input(self, x: np.ndarray) -> list[np.ndarray]:
        """Vector of ring values -> one polynomial per column chunk."""
        if x.shape != (self.in_dim,):
            raise ValueError(f"expected shape ({self.in_dim},), got {x.shape}")
        polys = []
        for c in range(self.n_col_chunks):
            lo, hi = c * self.d, min((c + 1) * self.d, self.in_dim)
            poly = np.zeros(self.n, dtype=np.uint64)
            poly[: hi - lo] = x[lo:hi]
            polys.append(poly)
        return polys

    def pack_weights(self, w: np.ndarray) -> list[list[np.ndarray]]:
        """Ring-encoded W -> polys indexed [row_group][col_chunk]."""
        if w.shape != (self.out_dim, self.in_dim):
            raise ValueError("weight shape mismatch")
        out = []
        for g in range(self.n_row_groups):
            r_lo = g * self.rows_per_poly
            r_hi = min(r_lo + self.rows_per_poly, self.out_dim)
            group = []
            for c in range(self.n_col_chunks):
                c_lo, c_hi = c * self.d, min((c + 1) * self.d, self.in_dim)
                poly = np.zeros(self.n, dtype=np.uint64)
                for li, row in enumerate(range(r_lo, r_hi)):
                    width = c_hi - c_lo
                    base = (li + 1) * self.d - 1
                    # W[row, c_lo + j] goes to base - j
                    poly[base - width + 1 : base + 1] = w[row, c_lo:c_hi][::-1]
                group.append(poly)
            out.append(group)
        return out

    def result_slots(self, group: int) -> np.ndarray:
        r_lo = group * self.rows_per_poly
        r_hi = min(r_lo + self.rows_per_poly, self.out_dim)
        return np.array(
            [(li + 1) * self.d - 1 for li in range(r_hi - r_lo)], dtype=np.int64
        )

    def unpack(self, result_polys: list[np.ndarray]) -> np.ndarray:
        """One summed polynomial per row group -> output vector."""
        y = np.zeros(self.out_dim, dtype=np.uint64)
        for g, poly in enumerate(result_polys):
            r_lo = g * self.rows_per_poly
            slots = self.result_slots(g)
            y[r_lo : r_lo + len(slots)] = poly[slots]
        return y


@dataclass(frozen=True)
class _Band:
    row_lo: int  # padded-input row range covered by this band
    row_hi: int
    out_lo: int  # stride-1 output rows produced


class Conv2dPlan:
    """Layout for stride-1 cross-correlation on a padded (C, H, W) input.

    Input channels are split into chunks of ``c_chunk``; when even a
    single channel's map does not fit, the padded input is split into
    horizontal bands overlapping by kh - 1 rows.  Strided outputs are
    subsampled at unpack time.
    """

    def __init__(self, n, in_shape, kernel_shape, stride=1, padding=0):
        self.n = n
        self.c_in, self.h, self.w = in_shape
        self.c_out, kc, self.kh, self.kw = kernel_shape
        if kc != self.c_in:
            raise ValueError("kernel channel count mismatch")
        self.stride = stride
        self.padding = padding
        self.hp = self.h + 2 * padding
        self.wp = self.w + 2 * padding
        if self.kh > self.hp or self.kw > self.wp:
            raise PackingCapacityError("kernel larger than padded input")
        self.out_h1 = self.hp - self.kh + 1  # stride-1 output height
        self.out_w1 = self.wp - self.kw + 1
        self.out_h = (self.out_h1 - 1) // stride + 1
        self.out_w = (self.out_w1 - 1) // stride + 1

        self.c_chunk = self._max_channel_chunk(self.hp)
        if self.c_chunk >= 1:
            self.bands = [_Band(0, self.hp, 0)]
        else:
            self.c_chunk = 1
            self.bands = self._make_bands()
        self.n_chunks = -(-self.c_in // self.c_chunk)

    def _fits(self, c_t: int, h_band: int) -> bool:
        hw = h_band * self.wp
        if c_t * hw > self.n:
            return False
        max_deg = (
            (2 * c_t - 2) * hw
            + (h_band - 1) * self.wp
            + (self.wp - 1)
            + (self.kh - 1) * self.wp
            + (self.kw - 1)
        )
        return max_deg <= self.n - 1

    def _max_channel_chunk(self, h_band: int) -> int:
        c_t = min(self.c_in, self.n // max(1, h_band * self.wp))
        while c_t >= 1 and not self._fits(c_t, h_band):
            c_t -= 1
        return c_t

    def _make_bands(self):
        h_max = self.kh
        while h_max < self.hp and self._fits(1, h_max + 1):
            h_max += 1
        if not self._fits(1, h_max):
            raise PackingCapacityError(
                f"width {self.wp} with kernel {self.kh}x{self.kw} exceeds "
                f"ring degree {self.n}"
            )
        bands = []
        out_row = 0
        while out_row < self.out_h1:
            row_lo = out_row
            row_hi = min(row_lo + h_max, self.hp)
            bands.append(_Band(row_lo, row_hi, out_row))
            out_row += (row_hi - row_lo) - self.kh + 1
        return bands

    # -- input side -------------------------------------------------

    def pad(self, x: np.ndarray) -> np.ndarray:
        """Zero-pad shares; both parties pad locally."""
        if x.shape != (self.c_in, self.h, self.w):
            raise ValueError("input shape mismatch")
        p = self.padding
        return np.pad(x, ((0, 0), (p, p), (p, p)))

    def pack_input(self, x: np.ndarray) -> dict:
        """Padded input -> {(band, chunk): polynomial}."""
        xp = self.pad(x)
        hw_key = {}
        for bi, band in enumerate(self.bands):
            h_band = band.row_hi - band.row_lo
            hw = h_band * self.wp
            for ci in range(self.n_chunks):
                lo = ci * self.c_chunk
                hi = min(lo + self.c_chunk, self.c_in)
                poly = np.zeros(self.n, dtype=np.uint64)
                for k, ch in enumerate(range(lo, hi)):
                    block = xp[ch, band.row_lo : band.row_hi, :].ravel()
                    poly[k * hw : k * hw + hw] = block
                # channels beyond c_in stay zero; chunk geometry is uniform
                hw_key[(bi, ci)] = poly
        return hw_key

    # -- weight side ------------------------------------------------

    def pack_weights(self, w: np.ndarray) -> dict:
        """Ring-encoded kernels -> {(out_c, band, chunk): polynomial}."""
        if w.shape != (self.c_out, self.c_in, self.kh, self.kw):
            raise ValueError("kernel shape mismatch")
        out = {}
        for bi, band in enumerate(self.bands):
            h_band = band.row_hi - band.row_lo
            hw = h_band * self.wp
            for ci in range(self.n_chunks):
                lo = ci * self.c_chunk
                hi = min(lo + self.c_chunk, self.c_in)
                n_ch = self.c_chunk
                for oc in range(self.c_out):
                    poly = np.zeros(self.n, dtype=np.uint64)
                    for k, ch in enumerate(range(lo, hi)):
                        off = (n_ch - 1 - k) * hw
                        for a in range(self.kh):
                            for b in range(self.kw):
                                pos = (
                                    off
                                    + (self.kh - 1 - a) * self.wp
                                    + (self.kw - 1 - b)
                                )
                                poly[pos] = w[oc, ch, a, b]
                    out[(oc, bi, ci)] = poly
        return out

    # -- result side ------------------------------------------------

    def _band_slots(self, band: _Band):
        """Coefficient positions of this band's stride-1 outputs."""
        n_ch = self.c_chunk
        h_band = band.row_hi - band.row_lo
        hw = h_band * self.wp
        base = (n_ch - 1) * hw
        rows = np.arange(h_band - self.kh + 1)
        cols = np.arange(self.out_w1)
        pos = (
            base
            + (rows[:, None] + self.kh - 1) * self.wp
            + (cols[None, :] + self.kw - 1)
        )
        return pos  # (band_out_rows, out_w1)

    def unpack(self, results: dict) -> np.ndarray:
        """{(out_c, band): summed polynomial} -> (c_out, out_h, out_w)."""
        full = np.zeros((self.c_out, self.out_h1, self.out_w1), dtype=np.uint64)
        for bi, band in enumerate(self.bands):
            slots = self._band_slots(band)
            for oc in range(self.c_out):
                poly = results[(oc, bi)]
                n_rows = slots.shape[0]
                full[oc, band.out_lo : band.out_lo + n_rows, :] = poly[slots]
        s = self.stride
        return full[:, ::s, ::s][:, : self.out_h, : self.out_w]

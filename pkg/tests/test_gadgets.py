"""Nonlinear gadgets, checked exhaustively on small rings against plain math."""

import numpy as np
import pytest

from privinfer.gadgets import (
    BeaverTriple,
    TripleReuseError,
    and_bits,
    b2a,
    divide_public,
    gen_triples,
    gt_private,
    mux,
    positive,
    relu,
    secure_mul,
    truncate,
    wrap_bit,
)
from privinfer.ring import RingConfig, to_signed

from conftest import random_split, run_gadget, run_two_party


def _all_values(cfg, copies=3, seed=10):
    """Every ring value, each under `copies` random sharings."""
    rng = np.random.default_rng(seed)
    v = np.tile(np.arange(cfg.modulus, dtype=np.uint64), copies)
    x0, x1 = random_split(v, cfg, rng)
    return v, x0, x1


class TestComparison:
    def test_gt_exhaustive_4bit(self):
        # all (alpha, beta) pairs of a 4-bit comparison
        a, b = np.meshgrid(np.arange(16, dtype=np.uint64),
                           np.arange(16, dtype=np.uint64))
        a, b = a.ravel(), b.ravel()
        r0, r1 = run_gadget(
            lambda p, c, pr, x: gt_private(p, c, pr, x, 4), a, b
        )
        assert np.array_equal(r0 ^ r1, (b > a).astype(np.uint8))

    def test_gt_wide_random(self):
        rng = np.random.default_rng(11)
        a = rng.integers(0, 1 << 41, 500, dtype=np.uint64)
        b = rng.integers(0, 1 << 41, 500, dtype=np.uint64)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: gt_private(p, c, pr, x, 41), a, b,
        )
        assert np.array_equal(r0 ^ r1, (b > a).astype(np.uint8))

    def test_wrap_exhaustive(self, tiny_cfg):
        v, x0, x1 = _all_values(tiny_cfg)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: wrap_bit(p, c, pr, x, tiny_cfg), x0, x1
        )
        want = ((x0.astype(object) + x1.astype(object)) >= tiny_cfg.modulus)
        assert np.array_equal(r0 ^ r1, np.array(want, dtype=np.uint8))

    def test_positive_exhaustive(self, tiny_cfg):
        v, x0, x1 = _all_values(tiny_cfg, copies=8)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: positive(p, c, pr, x, tiny_cfg), x0, x1
        )
        want = (to_signed(v, tiny_cfg) >= 0).astype(np.uint8)
        assert np.array_equal(r0 ^ r1, want)


class TestConversions:
    def test_b2a_all_bit_patterns(self, tiny_cfg):
        rng = np.random.default_rng(12)
        b0 = np.array([0, 0, 1, 1] * 50, dtype=np.uint8)
        b1 = np.array([0, 1, 0, 1] * 50, dtype=np.uint8)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: b2a(p, c, pr, x, tiny_cfg), b0, b1
        )
        assert np.array_equal((r0 + r1) & tiny_cfg.umask(), (b0 ^ b1))

    def test_mux_exhaustive(self, tiny_cfg):
        v, x0, x1 = _all_values(tiny_cfg, copies=4)
        rng = np.random.default_rng(13)
        d = rng.integers(0, 2, len(v), dtype=np.uint8)
        d0 = rng.integers(0, 2, len(v), dtype=np.uint8)
        d1 = d ^ d0

        r0, r1 = run_gadget(
            lambda p, c, pr, xs: mux(p, c, pr, xs[0], xs[1], tiny_cfg),
            (d0, x0), (d1, x1),
        )
        want = np.where(d == 1, v, np.uint64(0))
        assert np.array_equal((r0 + r1) & tiny_cfg.umask(), want)


class TestMultiplication:
    def test_and_bits(self):
        cfg = RingConfig(bit_width=8, frac_bits=2)
        rng = np.random.default_rng(14)
        a0, a1, b0, b1 = rng.integers(0, 2, (4, 400), dtype=np.uint8)
        r0, r1 = run_gadget(
            lambda p, c, pr, xs: and_bits(p, c, pr, xs[0], xs[1]),
            (a0, b0), (a1, b1),
        )
        assert np.array_equal(r0 ^ r1, (a0 ^ a1) & (b0 ^ b1))

    def test_secure_mul_exhaustive_pairs(self, tiny_cfg):
        # all 2^16 (x, y) pairs of the 8-bit ring in one batch
        x, y = np.meshgrid(np.arange(256, dtype=np.uint64),
                           np.arange(256, dtype=np.uint64))
        x, y = x.ravel(), y.ravel()
        rng = np.random.default_rng(15)
        x0, x1 = random_split(x, tiny_cfg, rng)
        y0, y1 = random_split(y, tiny_cfg, rng)
        r0, r1 = run_gadget(
            lambda p, c, pr, xs: secure_mul(p, c, pr, xs[0], xs[1], tiny_cfg),
            (x0, y0), (x1, y1),
        )
        assert np.array_equal((r0 + r1) & tiny_cfg.umask(), (x * y) & tiny_cfg.umask())

    def test_triple_single_use(self, tiny_cfg):
        t = BeaverTriple(*(np.zeros(4, dtype=np.uint64),) * 3)
        t.consume()
        with pytest.raises(TripleReuseError):
            t.consume()

    def test_pregenerated_triples(self, tiny_cfg):
        rng = np.random.default_rng(16)
        x = rng.integers(0, 256, 64, dtype=np.uint64)
        y = rng.integers(0, 256, 64, dtype=np.uint64)
        x0, x1 = random_split(x, tiny_cfg, rng)
        y0, y1 = random_split(y, tiny_cfg, rng)

        def f(p, c, pr, xs):
            trip = gen_triples(pr, 64, tiny_cfg)
            return secure_mul(p, c, pr, xs[0], xs[1], tiny_cfg, triple=trip)

        r0, r1 = run_gadget(f, (x0, y0), (x1, y1))
        assert np.array_equal((r0 + r1) & tiny_cfg.umask(), (x * y) & tiny_cfg.umask())

    def test_short_triple_rejected(self, tiny_cfg):
        def f(p, c, pr, xs):
            trip = gen_triples(pr, 2, tiny_cfg)
            with pytest.raises(ValueError):
                secure_mul(p, c, pr, xs, xs, tiny_cfg, triple=trip)
            return True

        ok, _ = run_gadget(f, np.zeros(8, dtype=np.uint64),
                           np.zeros(8, dtype=np.uint64))
        assert ok


class TestDivision:
    @pytest.mark.parametrize("divisor", [2, 3, 4, 5, 7, 8, 9, 16])
    def test_exhaustive_8bit(self, tiny_cfg, divisor):
        v, x0, x1 = _all_values(tiny_cfg)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: divide_public(p, c, pr, x, divisor, tiny_cfg),
            x0, x1,
        )
        got = to_signed((r0 + r1) & tiny_cfg.umask(), tiny_cfg)
        want = np.floor_divide(to_signed(v, tiny_cfg), divisor)
        assert np.array_equal(got, want)

    def test_divide_by_one_is_identity(self, tiny_cfg):
        v, x0, x1 = _all_values(tiny_cfg, copies=1)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: divide_public(p, c, pr, x, 1, tiny_cfg), x0, x1
        )
        assert np.array_equal((r0 + r1) & tiny_cfg.umask(), v)

    def test_zero_divisor_rejected(self, tiny_cfg):
        def f(p, c, pr, x):
            with pytest.raises(ZeroDivisionError):
                divide_public(p, c, pr, x, 0, tiny_cfg)
            return True

        ok, _ = run_gadget(f, np.zeros(1, dtype=np.uint64),
                           np.zeros(1, dtype=np.uint64))
        assert ok

    def test_wide_ring_spot_check(self, default_cfg):
        rng = np.random.default_rng(17)
        v = rng.integers(0, default_cfg.modulus, 200, dtype=np.uint64)
        x0, x1 = random_split(v, default_cfg, rng)
        for divisor in (4, 9, 4096):
            r0, r1 = run_gadget(
                lambda p, c, pr, x, d=divisor: divide_public(
                    p, c, pr, x, d, default_cfg
                ),
                x0, x1,
            )
            got = to_signed((r0 + r1) & default_cfg.umask(), default_cfg)
            want = np.floor_divide(to_signed(v, default_cfg), divisor)
            assert np.array_equal(got, want)


class TestTruncate:
    @pytest.mark.parametrize("shift", [1, 2, 4, 6])
    def test_faithful_exhaustive(self, tiny_cfg, shift):
        v, x0, x1 = _all_values(tiny_cfg, copies=2)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: truncate(p, c, pr, x, shift, tiny_cfg), x0, x1
        )
        got = to_signed((r0 + r1) & tiny_cfg.umask(), tiny_cfg)
        assert np.array_equal(got, to_signed(v, tiny_cfg) >> shift)

    def test_local_mode_one_ulp(self):
        # values tiny relative to the ring: the wrap failure case is
        # negligibly likely, leaving at most a one-unit rounding error
        cfg = RingConfig(bit_width=32, frac_bits=4)
        rng = np.random.default_rng(18)
        v = (np.arange(-1000, 1000) % cfg.modulus).astype(np.uint64)
        x0, x1 = random_split(v, cfg, rng)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: truncate(p, c, pr, x, 4, cfg, mode="local"),
            x0, x1,
        )
        got = to_signed((r0 + r1) & cfg.umask(), cfg)
        want = to_signed(v, cfg) >> 4
        assert np.abs(got - want).max() <= 1

    def test_bad_args(self, tiny_cfg):
        def f(p, c, pr, x):
            with pytest.raises(ValueError):
                truncate(p, c, pr, x, 8, tiny_cfg)
            with pytest.raises(ValueError):
                truncate(p, c, pr, x, 2, tiny_cfg, mode="sloppy")
            return True

        ok, _ = run_gadget(f, np.zeros(1, dtype=np.uint64),
                           np.zeros(1, dtype=np.uint64))
        assert ok


class TestRelu:
    @pytest.mark.parametrize("backend", ["dealer", "real"])
    def test_exhaustive_8bit(self, tiny_cfg, backend):
        copies = 4 if backend == "dealer" else 1
        v, x0, x1 = _all_values(tiny_cfg, copies=copies)
        r0, r1 = run_gadget(
            lambda p, c, pr, x: relu(p, c, pr, x, tiny_cfg), x0, x1,
            backend=backend,
        )
        got = (r0 + r1) & tiny_cfg.umask()
        want = np.where(to_signed(v, tiny_cfg) > 0, v, np.uint64(0))
        assert np.array_equal(got, want)

    def test_16bit_random(self):
        cfg = RingConfig(bit_width=16, frac_bits=4)
        rng = np.random.default_rng(19)
        v = rng.integers(0, cfg.modulus, 2000, dtype=np.uint64)
        x0, x1 = random_split(v, cfg, rng)
        r0, r1 = run_gadget(lambda p, c, pr, x: relu(p, c, pr, x, cfg), x0, x1)
        got = (r0 + r1) & cfg.umask()
        want = np.where(to_signed(v, cfg) > 0, v, np.uint64(0))
        assert np.array_equal(got, want)


class TestCommunication:
    def _relu_bytes(self, cfg, v, seed):
        rng = np.random.default_rng(seed)
        x0, x1 = random_split(v, cfg, rng)

        def party(i, xs):
            def run(chan):
                from privinfer.ot.providers import make_provider

                prov = make_provider("dealer", i, chan, seed=5)
                return relu(i, chan, prov, xs, cfg)

            return run

        _, _, c0, _ = run_two_party(party(0, x0), party(1, x1))
        return c0.stats.bytes_sent, c0.stats.bytes_received, c0.stats.rounds

    def test_traffic_is_data_independent(self, tiny_cfg):
        # identical shape, different values and sharings: identical traffic
        a = self._relu_bytes(tiny_cfg, np.zeros(100, dtype=np.uint64), 1)
        b = self._relu_bytes(
            tiny_cfg, np.full(100, tiny_cfg.modulus - 1, dtype=np.uint64), 2
        )
        assert a == b

    def test_traffic_scales_linearly(self, tiny_cfg):
        # fixed per-session cost plus a per-element cost
        ns = [50, 100, 150]
        sent = [
            self._relu_bytes(tiny_cfg, np.zeros(n, dtype=np.uint64), 3)[0]
            for n in ns
        ]
        assert sent[2] - sent[1] == sent[1] - sent[0]
        assert sent[1] > sent[0]

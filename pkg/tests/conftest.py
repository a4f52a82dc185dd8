"""Shared helpers: in-process two-party execution over channel pairs."""

import threading

import numpy as np
import pytest

from privinfer.channel import InMemoryChannel
from privinfer.ot.providers import make_provider
from privinfer.ring import RingConfig


def run_two_party(f0, f1, timeout=300.0):
    """Run the two party callables on a channel pair; return both results."""
    c0, c1 = InMemoryChannel.make_pair()
    out = [None, None]
    errors = [None, None]

    def wrap(i, f, chan):
        try:
            out[i] = f(chan)
        except Exception as e:  # surface the real traceback via pytest
            errors[i] = e
            chan.close()

    threads = [
        threading.Thread(target=wrap, args=(0, f0, c0)),
        threading.Thread(target=wrap, args=(1, f1, c1)),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    for e in errors:
        if e is not None:
            raise e
    return out[0], out[1], c0, c1


def run_gadget(fn, x0, x1, backend="dealer", seed=77):
    """Both parties call fn(party, chan, prov, my_input)."""

    def party(i, xs):
        def run(chan):
            prov = make_provider(backend, i, chan, seed)
            return fn(i, chan, prov, xs)

        return run

    r0, r1, _, _ = run_two_party(party(0, x0), party(1, x1))
    return r0, r1


def random_split(values, cfg: RingConfig, rng):
    """Random additive sharing of a uint64 array."""
    values = np.asarray(values, dtype=np.uint64) & cfg.umask()
    r = rng.integers(0, cfg.modulus, size=values.shape, dtype=np.uint64)
    return (values - r) & cfg.umask(), r


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Render the acceptance verdict lines after the test summary."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_cfg():
    """8-bit ring: exhaustive enumeration in milliseconds."""
    return RingConfig(bit_width=8, frac_bits=2)


@pytest.fixture
def small_cfg():
    """12-bit ring for exhaustive division tests."""
    return RingConfig(bit_width=12, frac_bits=4)


@pytest.fixture
def default_cfg():
    return RingConfig()

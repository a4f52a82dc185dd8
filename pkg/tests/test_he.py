import numpy as np
import pytest

from privinfer.he import (
    HECiphertext,
    HEParameterError,
    HEParams,
    NoiseBudgetExhausted,
    DepthExceeded,
    PackedPlaintext,
    decrypt,
    encrypt,
    eval_add,
    eval_add_plain,
    eval_plain_mul,
    keygen,
)
from privinfer.ntt import schoolbook_negacyclic_mul


@pytest.fixture(scope="module")
def toy():
    params = HEParams.toy()
    pk, sk = keygen(params, np.random.default_rng(0))
    return params, pk, sk


@pytest.fixture(scope="module")
def full():
    params = HEParams()
    pk, sk = keygen(params, np.random.default_rng(1))
    return params, pk, sk


def _pt(params, coeffs):
    poly = np.zeros(params.poly_degree, dtype=np.uint64)
    poly[: len(coeffs)] = coeffs
    return PackedPlaintext(params, poly)


class TestParams:
    def test_default_matches_targets(self):
        p = HEParams()
        assert p.poly_degree == 4096
        assert p.plain_modulus == 1 << 41
        q = p.ciphertext_modulus
        assert 2**108 < q < 2**109  # ~2^109 ciphertext modulus

    def test_insecure_rejected(self):
        with pytest.raises(HEParameterError):
            HEParams(poly_degree=1024)  # q far too large for n=1024

    def test_toy_requires_flag(self):
        with pytest.raises(HEParameterError):
            HEParams(
                poly_degree=8, plain_modulus=64,
                rns_primes=(12289, 40961, 65537),
            )

    def test_bad_prime_rejected(self):
        with pytest.raises(HEParameterError):
            HEParams(poly_degree=8, plain_modulus=64, rns_primes=(17,),
                     allow_insecure=True)


class TestRoundtrip:
    def test_zero(self, toy):
        params, pk, sk = toy
        pt = _pt(params, [0] * params.poly_degree)
        assert np.array_equal(decrypt(sk, encrypt(pk, pt)).poly, pt.poly)

    def test_boundary_coefficient(self, toy):
        params, pk, sk = toy
        pt = _pt(params, [params.plain_modulus - 1])
        assert decrypt(sk, encrypt(pk, pt)).poly[0] == params.plain_modulus - 1

    def test_random_toy(self, toy):
        params, pk, sk = toy
        rng = np.random.default_rng(2)
        for _ in range(200):
            pt = _pt(params, rng.integers(0, params.plain_modulus,
                                          params.poly_degree, dtype=np.uint64))
            assert np.array_equal(decrypt(sk, encrypt(pk, pt)).poly, pt.poly)

    def test_random_full(self, full):
        params, pk, sk = full
        rng = np.random.default_rng(3)
        for _ in range(5):
            pt = _pt(params, rng.integers(0, params.plain_modulus,
                                          params.poly_degree, dtype=np.uint64))
            assert np.array_equal(decrypt(sk, encrypt(pk, pt)).poly, pt.poly)

    def test_semantic_freshness(self, toy):
        params, pk, sk = toy
        pt = _pt(params, [5, 6, 7])
        a = encrypt(pk, pt).serialize()
        b = encrypt(pk, pt).serialize()
        assert a != b

    def test_coefficient_too_large(self, toy):
        params, pk, _ = toy
        with pytest.raises(ValueError):
            encrypt(pk, _pt(params, [params.plain_modulus]))


class TestEval:
    def test_add_identity(self, toy):
        params, pk, sk = toy
        rng = np.random.default_rng(4)
        m = rng.integers(0, params.plain_modulus, params.poly_degree,
                         dtype=np.uint64)
        out = eval_add(encrypt(pk, _pt(params, m)),
                       encrypt(pk, _pt(params, [0])))
        assert np.array_equal(decrypt(sk, out).poly, m)

    def test_plain_mul_identity(self, toy):
        params, pk, sk = toy
        rng = np.random.default_rng(5)
        m = rng.integers(0, params.plain_modulus, params.poly_degree,
                         dtype=np.uint64)
        one = _pt(params, [1])
        out = eval_plain_mul(encrypt(pk, _pt(params, m)), one)
        assert np.array_equal(decrypt(sk, out).poly, m)

    def test_add_matches_oracle(self, toy):
        params, pk, sk = toy
        rng = np.random.default_rng(6)
        t = params.plain_modulus
        for _ in range(50):
            m1 = rng.integers(0, t, params.poly_degree, dtype=np.uint64)
            m2 = rng.integers(0, t, params.poly_degree, dtype=np.uint64)
            out = eval_add(encrypt(pk, _pt(params, m1)),
                           encrypt(pk, _pt(params, m2)))
            assert np.array_equal(decrypt(sk, out).poly, (m1 + m2) % t)

    def test_plain_mul_matches_schoolbook(self, toy):
        params, pk, sk = toy
        rng = np.random.default_rng(7)
        t = params.plain_modulus
        for _ in range(50):
            m = rng.integers(0, t, params.poly_degree, dtype=np.uint64)
            w = rng.integers(0, t, params.poly_degree, dtype=np.uint64)
            out = eval_plain_mul(encrypt(pk, _pt(params, m)),
                                 PackedPlaintext(params, w))
            want = schoolbook_negacyclic_mul(m, w, t)
            assert np.array_equal(decrypt(sk, out).poly, want)

    def test_add_plain(self, toy):
        params, pk, sk = toy
        rng = np.random.default_rng(8)
        t = params.plain_modulus
        m1 = rng.integers(0, t, params.poly_degree, dtype=np.uint64)
        m2 = rng.integers(0, t, params.poly_degree, dtype=np.uint64)
        out = eval_add_plain(encrypt(pk, _pt(params, m1)), _pt(params, m2))
        assert np.array_equal(decrypt(sk, out).poly, (m1 + m2) % t)

    def test_depth_exhausted(self, toy):
        params, pk, _ = toy
        ct = encrypt(pk, _pt(params, [1]))
        ct2 = eval_plain_mul(ct, _pt(params, [1]))
        with pytest.raises(DepthExceeded):
            eval_plain_mul(ct2, _pt(params, [1]))

    def test_noise_monotone(self, toy):
        params, pk, _ = toy
        ct = encrypt(pk, _pt(params, [3]))
        after = eval_plain_mul(ct, _pt(params, [2, 2, 2]))
        assert after.noise_budget_estimate < ct.noise_budget_estimate
        added = eval_add(ct, encrypt(pk, _pt(params, [1])))
        assert added.noise_budget_estimate < ct.noise_budget_estimate

    def test_budget_exhaustion_raises(self, toy):
        params, _, sk = toy
        ct = HECiphertext(
            params,
            np.zeros((3, params.poly_degree), dtype=np.uint64),
            np.zeros((3, params.poly_degree), dtype=np.uint64),
            noise_bits=params.max_noise_bits + 5,
            depth_left=1,
        )
        with pytest.raises(NoiseBudgetExhausted):
            decrypt(sk, ct)


class TestSerialization:
    def test_roundtrip(self, toy):
        params, pk, sk = toy
        ct = encrypt(pk, _pt(params, [9, 8, 7]))
        again = HECiphertext.deserialize(ct.serialize(), params)
        assert np.array_equal(again.c0, ct.c0)
        assert np.array_equal(again.c1, ct.c1)
        assert np.array_equal(decrypt(sk, again).poly, decrypt(sk, ct).poly)

    def test_wrong_params_rejected(self, toy, full):
        toy_params, pk, _ = toy
        ct = encrypt(pk, _pt(toy_params, [1]))
        with pytest.raises(HEParameterError):
            HECiphertext.deserialize(ct.serialize(), full[0])

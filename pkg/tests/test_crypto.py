import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from duallayer.crypto import (
    PaillierCiphertext,
    is_probable_prime,
    key_from_dict,
    key_to_dict,
    load_key,
    paillier_add,
    paillier_decrypt,
    paillier_encrypt,
    paillier_from_primes,
    paillier_keygen,
    paillier_rerandomize,
    paillier_scale,
    random_prime,
    rsa_decrypt,
    rsa_encrypt,
    rsa_from_primes,
    rsa_keygen,
    save_key,
)
from duallayer.errors import (
    InvalidCiphertextError,
    KeyGenerationError,
    KeyMismatchError,
    PlaintextRangeError,
)

PK64, SK64 = paillier_keygen(64, rng=7)
PK35, SK35 = paillier_from_primes(5, 7)


def test_small_key_lambda_is_lcm():
    # lcm(4, 6) = 12
    assert SK35.lam == 12
    assert PK35.n == 35 and PK35.g == 36
    assert SK35.mu * SK35.lam % 35 == 1


def test_rsa_textbook_exponent():
    key = rsa_from_primes(61, 53, e=17)
    assert key.n == 3233
    assert key.d == 413  # 17^-1 mod lcm(60, 52) = 780
    assert rsa_decrypt(key, rsa_encrypt(key.public, 65)) == 65


def test_fixed_randomness_ciphertext():
    # (1 + m n) r^n mod n^2 with n = 35, m = 2, r = 2
    c = paillier_encrypt(PK35, 2, r=2)
    assert c.value == (1 + 2 * 35) * pow(2, 35, 35 * 35) % (35 * 35)
    assert paillier_decrypt(SK35, c) == 2


@pytest.mark.parametrize("n, expected", [(2, True), (97, True), (561, False), (7919, True), (7917, False), (1, False)])
def test_primality(n, expected):
    assert is_probable_prime(n, rng=1) is expected


def test_random_prime_bits():
    rng = random.Random(3)
    for bits in (8, 16, 32, 64):
        p = random_prime(bits, rng)
        assert p.bit_length() == bits and is_probable_prime(p)


def test_keygen_is_seeded():
    assert paillier_keygen(64, rng=11) == paillier_keygen(64, rng=11)
    assert rsa_keygen(128, rng=5) == rsa_keygen(128, rng=5)
    assert PK64.n.bit_length() == 64


def test_keygen_rejects_tiny():
    with pytest.raises(KeyGenerationError):
        paillier_keygen(8, rng=1)
    with pytest.raises(KeyGenerationError):
        rsa_keygen(8, rng=1)


def test_plaintext_range():
    with pytest.raises(PlaintextRangeError):
        paillier_encrypt(PK35, 35, rng=1)
    with pytest.raises(PlaintextRangeError):
        paillier_encrypt(PK35, -1, rng=1)
    with pytest.raises(PlaintextRangeError):
        rsa_encrypt(rsa_from_primes(61, 53, e=17).public, 3233)


def test_ciphertext_validation():
    with pytest.raises(InvalidCiphertextError):
        PaillierCiphertext(35 * 35, 35)
    with pytest.raises(InvalidCiphertextError):
        paillier_decrypt(SK35, PaillierCiphertext(5, 35))  # shares a factor with n


def test_wrong_key_rejected():
    other_pk, other_sk = paillier_keygen(64, rng=99)
    c = paillier_encrypt(PK64, 5, rng=1)
    with pytest.raises(KeyMismatchError):
        paillier_decrypt(other_sk, c)


def test_scale_rejects_negative():
    with pytest.raises(ValueError):
        paillier_scale(PK35, paillier_encrypt(PK35, 1, rng=1), -1)


def test_rerandomize_changes_ciphertext_not_plaintext():
    c = paillier_encrypt(PK64, 12345, rng=1)
    c2 = paillier_rerandomize(PK64, c, rng=2)
    assert c2.value != c.value
    assert paillier_decrypt(SK64, c2) == 12345


@settings(max_examples=200, deadline=None)
@given(st.integers(0, PK64.n - 1), st.integers(0, PK64.n - 1), st.integers(0, 1000), st.randoms(use_true_random=False))
def test_paillier_homomorphisms_64(m1, m2, k, rnd):
    c1, c2 = paillier_encrypt(PK64, m1, rng=rnd), paillier_encrypt(PK64, m2, rng=rnd)
    assert paillier_decrypt(SK64, c1) == m1
    assert paillier_decrypt(SK64, paillier_add(PK64, c1, c2)) == (m1 + m2) % PK64.n
    assert paillier_decrypt(SK64, paillier_scale(PK64, c1, k)) == k * m1 % PK64.n


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 34), st.integers(0, 34), st.integers(0, 100), st.randoms(use_true_random=False))
def test_paillier_homomorphisms_35(m1, m2, k, rnd):
    c1, c2 = paillier_encrypt(PK35, m1, rng=rnd), paillier_encrypt(PK35, m2, rng=rnd)
    assert paillier_decrypt(SK35, paillier_add(PK35, c1, c2)) == (m1 + m2) % 35
    assert paillier_decrypt(SK35, paillier_scale(PK35, c1, k)) == k * m1 % 35


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**128 - 1))
def test_rsa_roundtrip(m):
    key = rsa_keygen(256, rng=4)
    m %= key.n
    assert rsa_decrypt(key, rsa_encrypt(key.public, m)) == m


def test_key_files_roundtrip(tmp_path):
    rsa = rsa_keygen(128, rng=2)
    for key in (PK64, SK64, rsa, rsa.public):
        assert key_from_dict(key_to_dict(key)) == key
        save_key(key, tmp_path / "k.key", label="x")
        assert load_key(tmp_path / "k.key") == key


def test_key_dict_rejects_unknown():
    with pytest.raises(ValueError):
        key_from_dict({"format": "other"})


def test_lambda_is_lcm_of_prime_gaps():
    p, q = 1009, 1013
    _, sk = paillier_from_primes(p, q)
    assert sk.lam == math.lcm(p - 1, q - 1)

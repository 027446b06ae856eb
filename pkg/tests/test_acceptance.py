"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import random
from fractions import Fraction

import pytest

from duallayer.codec import eo
from duallayer.controller import homomorphic_row
from duallayer.crypto import (
    paillier_add,
    paillier_decrypt,
    paillier_encrypt,
    paillier_from_primes,
    paillier_keygen,
    paillier_scale,
)
from duallayer.errors import ProvisioningError
from duallayer.fixedpoint import GridParams, from_integer, from_raw, quantize, to_integer
from duallayer.keyring import (
    CONTROLLER_RULE,
    PAILLIER,
    TRANSIT_RULE,
    Signal,
    audit,
    control_unit,
    entity,
    provision,
    rsa_id,
)
from duallayer.sim import bound_check, equivalence_audit, run, trajectory_csv
from duallayer.synthesis import required_paillier_bound, row_abs_sums

from conftest import example_config


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, detail
    return emit


def test_criterion_1_separation_equivalence(run_m6, report):
    eq = equivalence_audit(run_m6)
    ok = eq.ok and eq.identical == 51 and all(
        s.ua == s.ua_shadow and s.ub == s.ub_shadow and s.zeta_decrypted == s.zeta for s in run_m6.steps)
    report(1, "encrypted loop bit-identical to plaintext shadow", ok, f"{eq.identical}/{eq.total} steps")


def test_criterion_2_stability_with_residual(run_m6, report):
    bc = bound_check(run_m6)
    residual = run_m6.bounds.residual(6)
    final = run_m6.steps[50].x
    final_norm = float(sum(v * v for v in final)) ** 0.5
    ok = bc.ok and final_norm <= residual
    report(2, "state bound at every step and ||x(50)|| within residual", ok,
           f"max ratio {bc.max_ratio:.4g}, ||x(50)|| = {final_norm:.4g} <= {residual:.4g}")


def test_criterion_3_resolution_effect(run_m6, run_m9, report):
    r6, r9 = run_m6.residual(40, 50), run_m9.residual(40, 50)
    shrink = run_m9.bounds.residual(9) / run_m6.bounds.residual(6)
    ok = r9 < r6 and shrink == pytest.approx(2**-3, rel=1e-12) and all(s.equivalent for s in run_m9.steps)
    report(3, "finer grid gives smaller steady-state residual", ok,
           f"m=6: {r6:.4g}, m=9: {r9:.4g}, analytic ratio {shrink:.6g}")


def _paillier_suite(pk, sk, rnd, cases=1000):
    n = pk.n
    for _ in range(cases):
        m1, m2, k = rnd.randrange(n), rnd.randrange(n), rnd.randrange(n)
        c1 = paillier_encrypt(pk, m1, rng=rnd)
        c2 = paillier_encrypt(pk, m2, rng=rnd)
        if paillier_decrypt(sk, c1) != m1:
            return False
        if paillier_decrypt(sk, paillier_add(pk, c1, c2)) != (m1 + m2) % n:
            return False
        if paillier_decrypt(sk, paillier_scale(pk, c1, k)) != k * m1 % n:
            return False
    return True


def test_criterion_4_paillier_properties(report):
    rnd = random.Random(404)
    pk64, sk64 = paillier_keygen(64, rng=rnd)
    pk35, sk35 = paillier_from_primes(5, 7)
    ok64 = _paillier_suite(pk64, sk64, rnd)
    ok35 = _paillier_suite(pk35, sk35, rnd)
    report(4, "Paillier roundtrip / additive / scalar, 1000 cases each", ok64 and ok35,
           f"64-bit: {ok64}, n_P=35: {ok35}")


def test_criterion_5_homomorphic_controller_oracle(report):
    rnd = random.Random(505)
    pk, sk = paillier_keygen(64, rng=rnd)
    params = GridParams(16, 4)
    budget = (pk.n - 1) // params.modulus
    failures = 0
    for _ in range(200):
        # N = 2 scalar channels, each carrying ya and yb, plus one state value
        coeffs = [rnd.randint(-40, 40) for _ in range(5)]
        assert sum(map(abs, coeffs)) <= budget
        values = [from_raw(rnd.randint(params.raw_min + 1, params.raw_max), params) for _ in range(5)]
        got = from_integer(paillier_decrypt(sk, homomorphic_row(coeffs, eo(values, pk, rng=rnd), pk))
                           % params.modulus, params)
        direct = sum(a * v.raw for a, v in zip(coeffs, values))
        wrapped = from_integer(direct % params.modulus, params)
        if got != wrapped or (params.contains_raw(direct) and got.raw != direct):
            failures += 1
    report(5, "decrypted homomorphic product equals direct integer sum", failures == 0,
           f"{200 - failures}/200 instances")


def test_criterion_6_key_access_audit(report):
    params = GridParams(24, 6)
    problems = []
    for n in (1, 2, 3):
        ring = provision(n, params, 64, 256, seed=600 + n)
        if not audit(ring).ok:
            problems.append(f"N={n} provisioned ring has violations")
        c = 1
        expected = {(CONTROLLER_RULE, control_unit(c), s, i) for i in range(1, n + 1)
                    for s in (Signal.DY, Signal.V_INNER)} | {(TRANSIT_RULE, control_unit(c), Signal.Y, c)}
        if audit(ring.grant(control_unit(c), PAILLIER)).violation_set() != expected:
            problems.append(f"N={n} controller/Paillier mutation")
        if n > 1:
            i, j = 1, 2
            got = audit(ring.grant(entity(j), rsa_id(i))).violation_set()
            if got != {(TRANSIT_RULE, entity(j), Signal.Y, i)}:
                problems.append(f"N={n} entity/RSA mutation")
    report(6, "key-access audit: clean ring and both mutations", not problems, "; ".join(problems) or "N=1,2,3")


def test_criterion_7_size_rule(example, report):
    rows = row_abs_sums(example.gains.actuation) + [
        sum(abs(int(v)) for v in list(a) + list(b))
        for a, b in zip(example.gains.transition, example.gains.innovation)]
    bound = required_paillier_bound(example.gains, 24)
    refused = []
    for bits in (24, 30):
        try:
            provision(2, example.params, bits, 256, seed=7, required_bound=bound)
            refused.append(False)
        except ProvisioningError:
            refused.append(True)
    # a 31-bit modulus can land on either side of the bound; use a seed that lands below it
    try:
        provision(2, example.params, 31, 256, seed=_seed_for_small(bound), required_bound=bound)
        refused.append(False)
    except ProvisioningError:
        refused.append(True)
    accepted = provision(2, example.params, 64, 256, seed=7, required_bound=bound).paillier_public.n > bound
    ok = max(rows) == 115 and bound == 2**24 * 115 and all(refused) and accepted
    report(7, "size rule refuses n_P <= 2^24*115 and accepts 64 bits", ok,
           f"row-sum {max(rows)}, refused {refused}, 64-bit accepted {accepted}")


def _seed_for_small(bound):
    """A provisioning seed whose 31-bit Paillier modulus falls below ``bound``."""
    from duallayer.crypto import as_rng
    for seed in range(1000):
        pk, _ = paillier_keygen(31, as_rng(f"{seed}"))
        if pk.n <= bound:
            return f"{seed}"
    raise AssertionError("no small modulus found")


def test_criterion_8_fixed_point_bijection(report):
    small = GridParams(6, 2)
    exhaustive = all(from_integer(to_integer(from_raw(r, small)), small).raw == r
                     for r in range(small.raw_min, small.raw_max + 1))
    exhaustive &= sorted(to_integer(from_raw(r, small)) for r in range(-32, 32)) == list(range(64))
    rnd = random.Random(808)
    randomized = True
    quant_ok = True
    for i in range(10_000):
        params = GridParams(24, 6 if i % 2 else 9)
        raw = rnd.randint(params.raw_min, params.raw_max)
        a = from_raw(raw, params)
        randomized &= from_integer(to_integer(a), params) == a
        z = rnd.randrange(params.modulus)
        randomized &= to_integer(from_integer(z, params)) == z
        den = rnd.randint(1, 10**6)
        b = int(params.bound)
        x = Fraction(rnd.randint(-b * den, b * den - 1), den)
        d = quantize(x, params).value - x
        quant_ok &= -params.resolution < d <= 0
    report(8, "fixed-point bijection and quantizer error interval", exhaustive and randomized and quant_ok,
           f"exhaustive n=6,m=2: {exhaustive}; 10^4 random n=24: {randomized}; quantizer: {quant_ok}")


def test_criterion_9_determinism(example_keyring, report):
    a = run(example_config(), keyring=example_config().provision())
    b = run(example_config(), keyring=example_config().provision())
    same_csv = trajectory_csv(a) == trajectory_csv(b)
    same_trace = a.trace == b.trace
    report(9, "identical config and seeds give byte-identical CSV and trace", same_csv and same_trace,
           f"csv {same_csv}, trace {same_trace}")

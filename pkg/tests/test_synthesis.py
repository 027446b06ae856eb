from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duallayer.errors import NotSchurError, SynthesisError
from duallayer.fixedpoint import GridParams
from duallayer.rational import exact_equal, rational_matrix, scale, to_float
from duallayer.synthesis import (
    ControllerGains,
    PlantMatrices,
    build_closed_loop,
    decay_envelope,
    integerize,
    is_schur,
    place_gains,
    required_paillier_bound,
    row_abs_sums,
    spectral_radius,
    stability_bounds,
    validate_gains,
)

PLANT = PlantMatrices.from_rows([[1, 1], [0, 1]], [["1/2", 0], [1, 1]], [[1, 0], [0, 1]])
GAINS = ControllerGains.from_rows("1/10", "1/10", [[20, -10], [-65, -10]], [[-10, -12], [10, 20]],
                                  [[30, 17], [-55, -30]])
K = [[2, -1], ["-13/2", -1]]
L = [[1, "6/5"], [-1, -2]]


def test_example_gains_are_stabilising():
    A_c = validate_gains(PLANT, GAINS)
    assert A_c.shape == (4, 4)
    assert spectral_radius(A_c) == pytest.approx(0.7236, abs=1e-4)


def test_closed_loop_blocks():
    A_c, B_c = build_closed_loop(PLANT, GAINS)
    # top-right block is g2 B phi
    assert exact_equal(A_c[:2, 2:], scale(PLANT.B @ GAINS.actuation, Fraction(1, 10)))
    assert exact_equal(B_c[2:, :2], rational_matrix(GAINS.innovation))
    assert all(v == 0 for v in B_c[:2, :2].ravel())


def test_integerize_reproduces_example_with_explicit_scales():
    g = integerize(K, L, PLANT, output_scale="1/10", state_scale="1/10")
    assert exact_equal(g.actuation, GAINS.actuation)
    assert exact_equal(g.innovation, GAINS.innovation)
    assert exact_equal(g.transition, GAINS.transition)


def test_integerize_default_scales_are_coarsest():
    g = integerize(K, L, PLANT)
    assert g.output_scale == Fraction(1, 5)  # L has entries in fifths
    assert g.state_scale == Fraction(1, 10)


def test_integerize_exactness_identities():
    g = integerize(K, L, PLANT)
    Kr, Lr = rational_matrix(K), rational_matrix(L)
    assert exact_equal(scale(g.actuation, g.state_scale), Kr)
    assert exact_equal(scale(g.innovation, -g.output_scale), Lr)
    assert exact_equal(scale(g.transition, g.state_scale), PLANT.A + PLANT.B @ Kr + Lr @ PLANT.C)


def test_integerize_rejects_bad_scale():
    with pytest.raises(SynthesisError):
        integerize(K, L, PLANT, output_scale="1/3")


def test_unstable_gains_rejected():
    with pytest.raises(NotSchurError):
        integerize([[0, 0], [0, 0]], [[0, 0], [0, 0]], PLANT)


def test_shape_errors():
    with pytest.raises(SynthesisError):
        PlantMatrices.from_rows([[1]], [[1, 2]], [[1]])
    with pytest.raises(SynthesisError):
        PlantMatrices.from_rows([[1, 0], [0, 1]], [[1, 0], [0, 1]], [[1, 1], [0, 1]])  # C couples entities
    with pytest.raises(SynthesisError):
        ControllerGains.from_rows(1, 1, [[1]], [[1]], [[1]]).check_shapes(PLANT)
    with pytest.raises(SynthesisError):
        ControllerGains(Fraction(1), Fraction(1), rational_matrix([["1/2"]]), rational_matrix([[1]]),
                        rational_matrix([[1]]))


def test_from_blocks_matches_rows():
    p = PlantMatrices.from_blocks([[[[1]], [[1]]], [[[0]], [[1]]]], [[[1]], [[1]]], [[[1]], [[1]]])
    assert p.entities == 2 and p.state_slice(1) == slice(1, 2)


def test_envelope_soundness():
    A_c, _ = build_closed_loop(PLANT, GAINS)
    M, rho, K_cert = decay_envelope(A_c)
    assert rho == pytest.approx(0.7236 + (1 - 0.7236) / 10, abs=1e-4)
    assert M >= 1
    A = to_float(A_c)
    P = np.eye(4)
    for k in range(0, max(300, 2 * K_cert)):
        assert np.linalg.norm(P, 2) <= M * rho**k * (1 + 1e-9)
        P = P @ A


def test_envelope_rejects_unstable():
    with pytest.raises(NotSchurError):
        decay_envelope(rational_matrix([[1, 0], [0, "1/2"]]))
    with pytest.raises(SynthesisError):
        decay_envelope(rational_matrix([["1/2"]]), margin=0.6)


def test_identity_scaled_envelope():
    M, rho, _ = decay_envelope(rational_matrix([["1/2", 0], [0, "1/2"]]))
    assert M == pytest.approx(1.0)
    assert rho == pytest.approx(0.55)


def test_row_sum_oracle():
    # computed from the gain matrices rather than hard-coded
    rows = [sum(abs(v) for v in r) for r in [[20, -10], [-65, -10]]]
    rows += [sum(abs(v) for v in a + b) for a, b in zip([[30, 17], [-55, -30]], [[-10, -12], [10, 20]])]
    assert max(rows) == 115
    assert row_abs_sums(GAINS.actuation) == [30, 75]
    assert required_paillier_bound(GAINS, 24) == 2**24 * max(rows)


def test_example_bounds():
    b6 = stability_bounds(PLANT, GAINS, GridParams(24, 6))
    assert b6.d == 4
    assert b6.R_o > 34.25  # initial condition of the example run is admissible at m = 6
    b9 = stability_bounds(PLANT, GAINS, GridParams(24, 9))
    assert b9.residual(9) == pytest.approx(b6.residual(6) / 8, rel=1e-12)
    assert b9.M == b6.M and b9.rho == b6.rho and b9.sigma == b6.sigma


@settings(max_examples=20, deadline=None)
@given(st.integers(18, 40), st.data())
def test_residual_strictly_decreases_with_m(n, data):
    m = data.draw(st.integers(1, n - 2))
    lo = stability_bounds(PLANT, GAINS, GridParams(n, m), strict=False)
    hi = stability_bounds(PLANT, GAINS, GridParams(n, m + 1), strict=False)
    assert hi.residual(m + 1) < lo.residual(m)


def test_short_word_has_no_operating_region():
    with pytest.raises(SynthesisError, match="word length"):
        stability_bounds(PLANT, GAINS, GridParams(20, 6))
    b = stability_bounds(PLANT, GAINS, GridParams(20, 6), strict=False)
    assert b.R_o <= 0


def test_place_gains_convenience():
    plant = PlantMatrices.from_rows([[1, 1], [0, 1]], [[0], [1]], [[1, 0]], state_dims=[2], input_dims=[1],
                                    output_dims=[1])
    Kp, Lp = place_gains(plant, [0.5, 0.4], [0.3, 0.2])
    assert is_schur(plant.A + plant.B @ Kp)
    assert is_schur(plant.A + Lp @ plant.C)
    gains = integerize(Kp, Lp, plant)
    assert is_schur(build_closed_loop(plant, gains)[0])

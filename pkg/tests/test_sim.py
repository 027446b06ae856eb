import dataclasses
from fractions import Fraction

import pytest

from duallayer.errors import ControllerOverflowError, EquivalenceError
from duallayer.keyring import provision
from duallayer.plant import FunctionPlant, LinearPlant
from duallayer.sim import (
    bound_check,
    csv_header,
    equivalence_audit,
    fmt_rational,
    run,
    summary,
    trajectory_csv,
)

from conftest import example_config


def test_example_run_is_equivalent(run_m6):
    assert len(run_m6) == 51
    assert all(s.equivalent for s in run_m6.steps)
    report = equivalence_audit(run_m6)
    assert report.ok and report.identical == 51


def test_first_step_values(run_m6):
    s0 = run_m6.steps[0]
    assert s0.x == (10, 20) and s0.zeta == (12, 23)
    assert s0.ub == (12, 23)
    assert s0.ya == (1, 2)
    assert s0.yb == (Fraction(19, 16), Fraction(147, 64))  # floor of 1.2 and 2.3 on the 2^-6 grid
    assert s0.ua == (Fraction(25, 32), Fraction(-3205, 32))


def test_quantisation_errors_in_interval(run_m6, run_m9):
    for traj in (run_m6, run_m9):
        res = traj.params.resolution
        for s in traj.steps:
            assert all(-res < d <= 0 for d in s.delta)


def test_bound_holds(run_m6):
    report = bound_check(run_m6)
    assert report.ok and report.max_ratio < 1
    assert run_m6.steps[0].bound >= run_m6.xc0_norm


def test_bound_check_flags_inflated(run_m6):
    inflated = dataclasses.replace(run_m6, steps=[dataclasses.replace(s) for s in run_m6.steps])
    inflated.steps[7].norm_xc = 1e12
    report = bound_check(inflated)
    assert report.failures == [7] and not report.ok


def test_finer_grid_smaller_residual(run_m6, run_m9):
    assert run_m9.residual(40, 50) < run_m6.residual(40, 50)
    assert run_m9.warnings  # R_o drops below ||x_c(0)|| at m = 9; only a warning


def test_zero_initial_state_stays_zero():
    traj = run(example_config("initial.x=[0, 0]", "initial.zeta=[0, 0]", "run.horizon=5"))
    for s in traj.steps:
        assert set(s.x) == {0} and set(s.ua) == {0} and set(s.zeta) == {0}


def test_zero_horizon():
    traj = run(example_config("run.horizon=0"))
    assert len(traj) == 0 and traj.trace == []
    assert equivalence_audit(traj).ok
    assert trajectory_csv(traj).splitlines() == [",".join(csv_header(traj))]


def test_determinism_and_worker_independence(example_keyring):
    a = run(example_config("run.horizon=8"), keyring=example_keyring)
    b = run(example_config("run.horizon=8", "run.workers=3"), keyring=example_keyring)
    assert trajectory_csv(a) == trajectory_csv(b)
    assert a.trace == b.trace


def test_seed_changes_ciphertexts_not_values(example_keyring):
    a = run(example_config("run.horizon=3"), keyring=example_keyring)
    b = run(example_config("run.horizon=3", "run.seed=99"), keyring=example_keyring)
    assert a.trace != b.trace
    assert [s.x for s in a.steps] == [s.x for s in b.steps]


def test_rerandomisation_keeps_values(example_keyring):
    a = run(example_config("run.horizon=4"), keyring=example_keyring)
    b = run(example_config("run.horizon=4", "run.rerandomize=true"), keyring=example_keyring)
    assert [s.ua for s in a.steps] == [s.ua for s in b.steps]
    assert a.trace != b.trace


def test_undersized_modulus_is_caught():
    cfg = example_config("keys.paillier_bits=28", "keys.enforce=false")
    with pytest.raises(EquivalenceError) as err:
        run(cfg)
    assert err.value.step == 0
    assert equivalence_audit(err.value.trajectory).mismatches == [0]


def test_overflow_aborts_with_step_and_signal(example_keyring):
    cfg = example_config("initial.x=[4000, 8000]", "run.horizon=10")
    with pytest.raises(ControllerOverflowError) as err:
        run(cfg, keyring=example_keyring)
    assert err.value.step is not None and err.value.signal
    assert len(err.value.trajectory) == err.value.step


def test_shadow_off():
    traj = run(example_config("run.horizon=3", "run.shadow=false"))
    assert all(s.equivalent is None for s in traj.steps)
    with pytest.raises(ValueError):
        equivalence_audit(traj)


def test_opaque_dynamics(example, example_keyring):
    cfg = example_config("run.horizon=5")
    lin = LinearPlant(cfg.plant, cfg.gains.output_scale, cfg.gains.state_scale)
    wrapped = FunctionPlant(lin.step, lin.output)
    a = run(cfg, keyring=example_keyring, dynamics=wrapped)
    b = run(cfg, keyring=example_keyring)
    assert trajectory_csv(a) == trajectory_csv(b)


def test_timing_recorded_when_enabled(example_keyring):
    traj = run(example_config("run.horizon=2", "run.timing=true"), keyring=example_keyring)
    assert sum(traj.steps[0].timings_us.values()) > 0
    assert summary(traj)["mean_step_ms"] > 0


def test_trace_lines_are_frames(run_m6):
    k, frame = run_m6.trace[0].split(" ")
    assert k == "0" and frame[:2] in ("43", "45")
    # per step: 2 echo commands, 4 measurement pairs (8 frames), 2 actuation commands
    assert len(run_m6.trace) == 51 * 12


@pytest.mark.parametrize("value, text", [
    (Fraction(1, 64), "0.015625"), (Fraction(-3205, 32), "-100.15625"), (Fraction(5), "5"),
    (Fraction(-1, 80), "-0.0125"), (Fraction(1, 3), "1/3"), (Fraction(0), "0"),
])
def test_fmt_rational(value, text):
    assert fmt_rational(value) == text
    assert Fraction(text) == value


def test_csv_columns(run_m6):
    header = trajectory_csv(run_m6).splitlines()[0].split(",")
    assert header[:3] == ["k", "x_1", "x_2"]
    assert header[-4:] == ["t_quant_us", "t_enc_us", "t_ctrl_us", "t_dec_us"]
    assert "delta_4" in header and "equiv" in header


def test_provisioned_keyring_reused(example):
    ring = provision(2, example.params, 64, 256, seed=3, required_bound=2**24 * 115)
    traj = run(example_config("run.horizon=2"), keyring=ring)
    assert equivalence_audit(traj).ok

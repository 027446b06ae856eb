"""Closed-loop simulation of the encrypted stabiliser with a plaintext shadow.

Each control instant ``k`` runs, with instantaneous lossless delivery:

1. control unit ``i`` sends the echo part of its command (its slice of the
   encrypted controller state) to entity ``i``, wrapped under entity ``i``'s
   RSA key; the entity decrypts it to ``ub_i``;
2. entity ``i`` measures ``ya_i = g1 C_i x_i`` and ``yb_i = g2 ub_i``,
   quantises both, and sends the double-layer measurement ciphertext;
3. control unit ``i`` strips its RSA layer; the inner ciphertexts are pooled
   among control units, which evaluate the actuation rows and the next
   controller state homomorphically;
4. the actuation commands go back under the entities' RSA keys, are decrypted
   and applied to the plant.

The shadow loop evaluates the same integer law in the clear on the same
quantised measurements.  The simulator itself holds every key so it can
compare the two bit for bit; none of the parties do.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .codec import dbar, di, do_, ebar, ei, eo
from .controller import EncryptedController, PlainController, range_guard, stabilizer_law
from .errors import ControllerOverflowError, EquivalenceError, GridOverflowError
from .fixedpoint import FixedPointValue, GridParams, grid_value, quantize
from .keyring import PAILLIER, Keyring, ebar_id, provision, rsa_id
from .plant import LinearPlant, Plant
from .rational import parse_rational
from .synthesis import ControllerGains, PlantMatrices, StabilityBounds, required_paillier_bound, stability_bounds

log = logging.getLogger(__name__)

PHASES = ("quant", "enc", "ctrl", "dec")


@dataclass(eq=False)
class RunConfig:
    plant: PlantMatrices
    gains: ControllerGains
    params: GridParams
    x0: tuple[Fraction, ...]
    zeta0: tuple[Fraction, ...]
    horizon: int
    paillier_bits: int = 64
    rsa_bits: int = 256
    seed: int = 0
    key_seed: int | None = None
    enforce_key_sizes: bool = True
    shadow: bool = True
    rerandomize: bool = False
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        self.x0 = tuple(parse_rational(v) for v in self.x0)
        self.zeta0 = tuple(parse_rational(v) for v in self.zeta0)
        s = self.plant.A.shape[0]
        if len(self.x0) != s or len(self.zeta0) != s:
            raise ValueError(f"initial x and zeta need {s} entries")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        self.gains.check_shapes(self.plant)

    def provision(self) -> Keyring:
        seed = self.seed if self.key_seed is None else self.key_seed
        return provision(
            self.plant.entities, self.params, self.paillier_bits, self.rsa_bits, seed=f"{seed}/keys",
            required_bound=required_paillier_bound(self.gains, self.params.n), enforce=self.enforce_key_sizes,
        )


@dataclass
class StepRecord:
    k: int
    x: tuple[Fraction, ...]
    zeta: tuple[Fraction, ...]            # shadow (or decrypted state when the shadow is off)
    zeta_decrypted: tuple[Fraction, ...]  # god-view decryption of the encrypted state
    ua: tuple[Fraction, ...]              # decrypted by the entities
    ub: tuple[Fraction, ...]
    ua_shadow: tuple[Fraction, ...] | None
    ub_shadow: tuple[Fraction, ...] | None
    ya: tuple[Fraction, ...]              # quantised
    yb: tuple[Fraction, ...]
    delta: tuple[Fraction, ...]           # quantisation errors, ya part then yb part
    norm_xc: float
    bound: float
    equivalent: bool | None
    timings_us: dict[str, int] = field(default_factory=dict)


@dataclass
class Trajectory:
    params: GridParams
    bounds: StabilityBounds
    xc0_norm: float
    steps: list[StepRecord] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    labels: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.steps)

    def state_norms(self) -> list[float]:
        return [_norm(s.x) for s in self.steps]

    def residual(self, first: int, last: int) -> float:
        """``max ||x(k)||_inf`` over ``first <= k <= last``."""
        return max(float(max(abs(v) for v in s.x)) for s in self.steps if first <= s.k <= last)


def _norm(values: Sequence[Fraction]) -> float:
    return math.sqrt(float(sum((v * v for v in values), Fraction(0))))


class _Timer:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.totals = dict.fromkeys(PHASES, 0)

    def measure(self, phase: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter_ns()

            def __exit__(self, *exc):
                if timer.enabled:
                    timer.totals[phase] += (time.perf_counter_ns() - self.t0) // 1000
                return False

        return _Ctx()


def _grid(values, params: GridParams, what: str, step: int) -> list[FixedPointValue]:
    try:
        return [quantize(v, params) for v in values]
    except GridOverflowError as exc:
        raise ControllerOverflowError(f"step {step}: {what} overflows the grid ({exc})", step=step, signal=what) from exc


def run(config: RunConfig, keyring: Keyring | None = None, dynamics: Plant | None = None,
        abort_on_mismatch: bool = True) -> Trajectory:
    """Simulate ``config.horizon`` control instants.

    Raises :class:`ControllerOverflowError` when a signal leaves the grid and
    :class:`EquivalenceError` when the encrypted loop departs from the shadow
    (unless ``abort_on_mismatch`` is false).  Either exception carries the
    partial trajectory as ``exc.trajectory``.
    """
    params, plant_m, gains = config.params, config.plant, config.gains
    keyring = keyring or config.provision()
    pk, sk = keyring.paillier_public, keyring.private_key(PAILLIER)
    dynamics = dynamics or LinearPlant(plant_m, gains.output_scale, gains.state_scale)
    law = stabilizer_law(plant_m, gains)
    plain = PlainController(law, params)
    enc = EncryptedController(law, pk, rerandomize=config.rerandomize, rng=f"{config.seed}/rerandomize")
    N = plant_m.entities
    p = plant_m.B.shape[1]
    entity_rngs = {i: random.Random(f"{config.seed}/entity/{i}") for i in range(1, N + 1)}

    bounds = stability_bounds(plant_m, gains, params, strict=False)
    zeta0 = [grid_value(v, params) for v in config.zeta0]
    x = np.array(config.x0, dtype=object)
    xc0 = _norm(list(config.x0) + [v.value for v in zeta0])
    traj = Trajectory(params, bounds, xc0, labels={"x": len(x), "zeta": len(zeta0), "ua": p,
                                                   "ub": len(zeta0), "ya": plant_m.C.shape[0], "yb": len(zeta0)})
    if bounds.R_o <= 0:
        traj.warnings.append(f"no admissible initial radius (R_o = {bounds.R_o:.6g}); range safety is not certified")
    elif xc0 > bounds.R_o:
        traj.warnings.append(f"||x_c(0)|| = {xc0:.6g} exceeds R_o = {bounds.R_o:.6g}; range safety is not certified")
    for w in traj.warnings:
        log.warning(w)

    z = eo(zeta0, pk, random.Random(f"{config.seed}/init"))
    zeta_shadow = list(zeta0) if config.shadow else None
    echo_rows, feedback_rows = law.echo_rows, law.feedback_rows
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None

    def fan_out(fn, items):
        return list(pool.map(fn, items)) if pool else [fn(i) for i in items]

    try:
        for k in range(config.horizon):
            timer = _Timer(config.timing)
            # 1. echo of the controller state
            with timer.measure("enc"):
                echo_msgs = {i: ebar(enc.outputs(z, None, law.rows_for(i - 1, echo_rows)), keyring.entity_public(i), i)
                             for i in range(1, N + 1)}
            traj.trace.extend(f"{k} {c.to_wire().hex()}" for i in echo_msgs for c in echo_msgs[i])
            with timer.measure("dec"):
                echo_vals = {i: dbar(echo_msgs[i], keyring.private_key(ebar_id(i)), i, sk, params) for i in echo_msgs}
            ub_by_row = {}
            for i in range(1, N + 1):
                for r, v in zip(law.rows_for(i - 1, echo_rows), echo_vals[i]):
                    ub_by_row[r] = v
            ub = [ub_by_row[r] for r in echo_rows]

            zeta_now = zeta_shadow if config.shadow else do_([d.plus for d in z], sk, params)
            ub_shadow = plain.outputs(zeta_shadow, None, echo_rows, step=k) if config.shadow else None

            # 2. measure and quantise
            with timer.measure("quant"):
                ya_exact = list(dynamics.output(x, None))
                yb_exact = [gains.state_scale * v.value for v in ub]
                ya_q = _grid(ya_exact, params, "ya", k)
                yb_q = _grid(yb_exact, params, "yb", k)
            inputs = []
            per_entity = {}
            for i in range(N):
                sl_a, sl_b = plant_m.output_slice(i), plant_m.state_slice(i)
                block = ya_q[sl_a] + yb_q[sl_b]
                per_entity[i + 1] = block
                inputs.extend(block)

            guard = range_guard(law, zeta_now, inputs, params)
            if not guard.ok:
                raise ControllerOverflowError(f"step {k}: controller leaves the representable range: {guard.describe()}",
                                              step=k, signal=guard.violations[0][0])

            # 3. entities encrypt, control units strip and compute
            with timer.measure("enc"):
                y_msgs = dict(zip(per_entity, fan_out(
                    lambda i: ei(per_entity[i], pk, keyring.controller_public(i), i, entity_rngs[i]), list(per_entity))))
            traj.trace.extend(f"{k} {c.to_wire().hex()}" for i in y_msgs for pair in y_msgs[i] for c in pair)
            with timer.measure("ctrl"):
                pooled = []
                for i in range(1, N + 1):
                    pooled.extend(di(y_msgs[i], keyring.private_key(rsa_id(i)), i, pk))
                v_rows = {i: law.rows_for(i - 1, feedback_rows) for i in range(1, N + 1)}
                v = {i: enc.outputs(z, pooled, v_rows[i]) for i in v_rows}
                z_next = enc.update(z, pooled)
            with timer.measure("enc"):
                v_msgs = {i: ebar(v[i], keyring.entity_public(i), i) for i in v}
            traj.trace.extend(f"{k} {c.to_wire().hex()}" for i in v_msgs for c in v_msgs[i])
            with timer.measure("dec"):
                ua_vals = {i: dbar(v_msgs[i], keyring.private_key(ebar_id(i)), i, sk, params) for i in v_msgs}
            ua_by_row = {}
            for i in v_rows:
                for r, val in zip(v_rows[i], ua_vals[i]):
                    ua_by_row[r] = val
            ua = [ua_by_row[r] for r in feedback_rows]

            # shadow and audit
            zeta_dec = do_([d.plus for d in z], sk, params)
            equivalent = None
            ua_shadow = None
            if config.shadow:
                ua_shadow = plain.outputs(zeta_shadow, inputs, feedback_rows, step=k)
                zeta_next_shadow = plain.update(zeta_shadow, inputs, step=k)
                zeta_next_dec = do_([d.plus for d in z_next], sk, params)
                zeta_next_neg = do_([d.minus for d in z_next], sk, params)
                equivalent = (
                    ua == ua_shadow and ub == ub_shadow and zeta_dec == zeta_shadow
                    and zeta_next_dec == zeta_next_shadow
                    and all(a.raw == -b.raw for a, b in zip(zeta_next_dec, zeta_next_neg))
                )

            delta = tuple(q.value - e for q, e in zip(ya_q + yb_q, ya_exact + yb_exact))
            xc = list(x) + [v.value for v in zeta_now]
            rec = StepRecord(
                k=k, x=tuple(x), zeta=tuple(v.value for v in zeta_now), zeta_decrypted=tuple(v.value for v in zeta_dec),
                ua=tuple(v.value for v in ua), ub=tuple(v.value for v in ub),
                ua_shadow=None if ua_shadow is None else tuple(v.value for v in ua_shadow),
                ub_shadow=None if ub_shadow is None else tuple(v.value for v in ub_shadow),
                ya=tuple(v.value for v in ya_q), yb=tuple(v.value for v in yb_q), delta=delta,
                norm_xc=_norm(xc), bound=float(bounds.envelope(k, xc0, params.m)), equivalent=equivalent,
                timings_us=dict(timer.totals),
            )
            traj.steps.append(rec)
            if equivalent is False:
                msg = f"step {k}: encrypted loop departs from the plaintext shadow"
                if abort_on_mismatch:
                    raise EquivalenceError(msg, step=k)
                log.error(msg)

            # 4. actuate
            x = np.array(list(dynamics.step(x, np.array([v.value for v in ua], dtype=object))), dtype=object)
            z = z_next
            if config.shadow:
                zeta_shadow = zeta_next_shadow
    except (ControllerOverflowError, EquivalenceError) as exc:
        exc.trajectory = traj
        raise
    finally:
        if pool:
            pool.shutdown()
    return traj


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    passed: list[bool]
    max_ratio: float
    failures: list[int]

    @property
    def ok(self) -> bool:
        return not self.failures


def bound_check(trajectory: Trajectory, bounds: StabilityBounds | None = None) -> BoundReport:
    """``||x_c(k)|| <= M rho^k ||x_c(0)|| + M sigma 2^-m / (1 - rho)`` at every recorded step."""
    bounds = bounds or trajectory.bounds
    passed, ratios, failures = [], [], []
    for s in trajectory.steps:
        b = bounds.envelope(s.k, trajectory.xc0_norm, trajectory.params.m)
        ok = s.norm_xc <= b
        passed.append(ok)
        ratios.append(s.norm_xc / b)
        if not ok:
            failures.append(s.k)
    return BoundReport(passed, max(ratios, default=0.0), failures)


@dataclass
class EquivalenceReport:
    total: int
    identical: int
    mismatches: list[int]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def equivalence_audit(trajectory: Trajectory) -> EquivalenceReport:
    """Bit-exact comparison of decrypted commands and state against the shadow."""
    mismatches = []
    for s in trajectory.steps:
        if s.ua_shadow is None:
            raise ValueError("trajectory was recorded without the shadow loop")
        same = s.ua == s.ua_shadow and s.ub == s.ub_shadow and s.zeta_decrypted == s.zeta
        if not same or s.equivalent is False:
            mismatches.append(s.k)
    return EquivalenceReport(len(trajectory.steps), len(trajectory.steps) - len(mismatches), mismatches)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def fmt_rational(v: Fraction) -> str:
    """Exact decimal when the denominator is ``2^a 5^b``, otherwise ``num/den``."""
    v = Fraction(v)
    d = v.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{v.numerator}/{v.denominator}"
    places = max(twos, fives)
    if places == 0:
        return str(v.numerator)
    scaled = v * 10 ** places
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    return f"{sign}{digits[:-places]}.{digits[-places:].rstrip('0')}"


def csv_header(trajectory: Trajectory) -> list[str]:
    lab = trajectory.labels
    cols = ["k"]
    for name in ("x", "zeta", "ua", "ub", "ya", "yb"):
        cols += [f"{name}_{j + 1}" for j in range(lab.get(name, 0))]
    cols += [f"delta_{j + 1}" for j in range(lab.get("ya", 0) + lab.get("yb", 0))]
    cols += ["bound", "norm_xc", "equiv"] + [f"t_{p}_us" for p in PHASES]
    return cols


def trajectory_csv(trajectory: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(trajectory))
    for s in trajectory.steps:
        row = [s.k]
        for values in (s.x, s.zeta, s.ua, s.ub, s.ya, s.yb, s.delta):
            row += [fmt_rational(v) for v in values]
        equiv = "" if s.equivalent is None else int(s.equivalent)
        row += [repr(float(s.bound)), repr(float(s.norm_xc)), equiv] + [s.timings_us.get(p, 0) for p in PHASES]
        w.writerow(row)
    return buf.getvalue()


def write_trajectory(trajectory: Trajectory, path: str | Path) -> None:
    Path(path).write_text(trajectory_csv(trajectory))


def write_trace(trajectory: Trajectory, path: str | Path) -> None:
    Path(path).write_text("".join(line + "\n" for line in trajectory.trace))


def read_trajectory_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary(trajectory: Trajectory) -> dict:
    """Headline numbers for a run; timing totals are zero unless timing was enabled."""
    eq = equivalence_audit(trajectory) if trajectory.steps and trajectory.steps[0].ua_shadow is not None else None
    bc = bound_check(trajectory)
    b = trajectory.bounds
    last = trajectory.steps[-1] if trajectory.steps else None
    totals = {p: sum(s.timings_us.get(p, 0) for s in trajectory.steps) for p in PHASES}
    return {
        "steps": len(trajectory.steps),
        "n": trajectory.params.n,
        "m": trajectory.params.m,
        "final_x_inf": float(max(abs(v) for v in last.x)) if last else None,
        "final_x_norm": _norm(last.x) if last else None,
        "residual_bound": b.residual(trajectory.params.m),
        "bounds": {"M": b.M, "rho": b.rho, "sigma": b.sigma, "beta": b.beta, "R_o": b.R_o, "d": b.d},
        "xc0_norm": trajectory.xc0_norm,
        "bound_ok": bc.ok,
        "bound_max_ratio": bc.max_ratio,
        "equivalent_steps": None if eq is None else eq.identical,
        "equivalence_ok": None if eq is None else eq.ok,
        "timing_us": totals,
        "mean_step_ms": (sum(totals.values()) / 1000 / len(trajectory.steps)) if trajectory.steps else 0.0,
        "warnings": list(trajectory.warnings),
    }

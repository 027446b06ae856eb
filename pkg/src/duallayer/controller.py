"""Plaintext and homomorphic evaluation of integer-coefficient controllers.

A controller is a pair of linear laws over ``(state, inputs)`` with integer
coefficients: one produces the outputs, the other the next state.  The plain
engine evaluates them exactly on the fixed-point grid.  The encrypted engine
evaluates the same laws on dual ciphertexts: a coefficient ``a`` selects the
``+`` or ``-`` component by sign and raises it to ``|a|``, and the factors are
multiplied modulo ``n_P^2``.  As long as every row satisfies
``2^n * sum|a| < n_P`` nothing wraps in ``Z_(n_P)``, and decrypting then
reducing modulo ``2^n`` gives exactly the plain result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .codec import DualCiphertext
from .crypto import (
    PaillierCiphertext,
    PaillierPublicKey,
    RngLike,
    as_rng,
    paillier_add,
    paillier_rerandomize,
    paillier_scale,
)
from .errors import ControllerOverflowError, SynthesisError
from .fixedpoint import FixedPointValue, GridParams
from .rational import integer_matrix
from .synthesis import ControllerGains, PlantMatrices


@dataclass(frozen=True, eq=False)
class LinearLaw:
    """Rows of ``sum_j a_j state_j + sum_j b_j input_j`` with integer ``a``, ``b``."""

    state_coeffs: np.ndarray
    input_coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "state_coeffs", integer_matrix(self.state_coeffs))
        object.__setattr__(self, "input_coeffs", integer_matrix(self.input_coeffs))
        if self.state_coeffs.shape[0] != self.input_coeffs.shape[0]:
            raise SynthesisError("state and input coefficient blocks need the same number of rows")

    @property
    def rows(self) -> int:
        return self.state_coeffs.shape[0]

    def row(self, r: int) -> tuple[list[int], list[int]]:
        return list(self.state_coeffs[r]), list(self.input_coeffs[r])

    def row_abs_sums(self) -> list[int]:
        return [sum(abs(a) for a in s) + sum(abs(b) for b in i) for s, i in (self.row(r) for r in range(self.rows))]

    def depends_on_inputs(self, r: int) -> bool:
        return any(b != 0 for b in self.input_coeffs[r])

    def evaluate_exact(self, state: Sequence[Fraction], inputs: Sequence[Fraction] | None,
                       rows: Sequence[int] | None = None) -> list[Fraction]:
        """Unbounded rational evaluation (used to check ranges before committing)."""
        out = []
        for r in range(self.rows) if rows is None else rows:
            a, b = self.row(r)
            if inputs is None and any(b):
                raise ValueError(f"row {r} depends on inputs that are not available yet")
            acc = sum((ai * si for ai, si in zip(a, state)), Fraction(0))
            if inputs is not None:
                acc += sum((bi * ci for bi, ci in zip(b, inputs)), Fraction(0))
            out.append(acc)
        return out


@dataclass(frozen=True, eq=False)
class ControlLaw:
    """Output law, state-update law, and which entity receives each output row."""

    output: LinearLaw
    update: LinearLaw
    owners: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.owners) != self.output.rows:
            raise SynthesisError("every output row needs an owner entity")
        if self.update.state_coeffs.shape[1] != self.update.rows:
            raise SynthesisError("state update must be square in the state")
        if self.output.state_coeffs.shape[1] != self.update.rows:
            raise SynthesisError("output and update laws disagree on the state dimension")
        if self.output.input_coeffs.shape[1] != self.update.input_coeffs.shape[1]:
            raise SynthesisError("output and update laws disagree on the input dimension")

    @property
    def state_dim(self) -> int:
        return self.update.rows

    @property
    def input_dim(self) -> int:
        return self.update.input_coeffs.shape[1]

    @property
    def echo_rows(self) -> list[int]:
        """Output rows that use only the controller state (computable before inputs arrive)."""
        return [r for r in range(self.output.rows) if not self.output.depends_on_inputs(r)]

    @property
    def feedback_rows(self) -> list[int]:
        return [r for r in range(self.output.rows) if self.output.depends_on_inputs(r)]

    def rows_for(self, entity: int, rows: Sequence[int] | None = None) -> list[int]:
        rows = range(self.output.rows) if rows is None else rows
        return [r for r in rows if self.owners[r] == entity]

    def max_row_abs_sum(self) -> int:
        return max(self.output.row_abs_sums() + self.update.row_abs_sums(), default=0)


@dataclass(frozen=True)
class StabilizerLayout:
    """Index bookkeeping for the stabiliser built from a plant and its gains.

    Inputs are ordered entity by entity as ``col(ya_i, yb_i)``; outputs are all
    actuation rows followed by all echo rows.
    """

    ya_index: tuple[int, ...]
    yb_index: tuple[int, ...]
    actuation_rows: int
    echo_rows: int


def stabilizer_layout(plant: PlantMatrices) -> StabilizerLayout:
    ya, yb = [], []
    pos = 0
    for i in range(plant.entities):
        ya.extend(range(pos, pos + plant.output_dims[i]))
        pos += plant.output_dims[i]
        yb.extend(range(pos, pos + plant.state_dims[i]))
        pos += plant.state_dims[i]
    return StabilizerLayout(tuple(ya), tuple(yb), sum(plant.input_dims), sum(plant.state_dims))


def stabilizer_law(plant: PlantMatrices, gains: ControllerGains) -> ControlLaw:
    """Express the observer-based stabiliser as a :class:`ControlLaw`.

    ``ua = actuation . yb``, ``ub = state`` (echo), and
    ``state+ = transition . yb + innovation . ya``.
    """
    gains.check_shapes(plant)
    lay = stabilizer_layout(plant)
    s, p, q = plant.A.shape[0], plant.B.shape[1], plant.C.shape[0]
    width = q + s
    out_state = np.zeros((p + s, s), dtype=object)
    out_input = np.zeros((p + s, width), dtype=object)
    upd_state = np.zeros((s, s), dtype=object)
    upd_input = np.zeros((s, width), dtype=object)
    for r in range(p):
        for j in range(s):
            out_input[r, lay.yb_index[j]] = int(gains.actuation[r, j])
    for j in range(s):
        out_state[p + j, j] = 1
    for r in range(s):
        for j in range(q):
            upd_input[r, lay.ya_index[j]] = int(gains.innovation[r, j])
        for j in range(s):
            upd_input[r, lay.yb_index[j]] = int(gains.transition[r, j])
    owners = tuple(_owner(plant.input_dims, r) for r in range(p)) + tuple(_owner(plant.state_dims, j) for j in range(s))
    labels = tuple(f"ua_{r + 1}" for r in range(p)) + tuple(f"ub_{j + 1}" for j in range(s))
    return ControlLaw(LinearLaw(out_state, out_input), LinearLaw(upd_state, upd_input), owners, labels)


def _owner(dims: Sequence[int], index: int) -> int:
    acc = 0
    for i, d in enumerate(dims):
        acc += d
        if index < acc:
            return i
    raise IndexError(index)


# ---------------------------------------------------------------------------
# range guard and plain engine
# ---------------------------------------------------------------------------

@dataclass
class GuardReport:
    ok: bool
    violations: list[tuple[str, int, Fraction]] = field(default_factory=list)

    def describe(self) -> str:
        return "; ".join(f"{kind}[{row}] = {value}" for kind, row, value in self.violations) or "ok"


def range_guard(law: ControlLaw, state: Sequence[FixedPointValue], inputs: Sequence[FixedPointValue] | None,
                params: GridParams, output_rows: Sequence[int] | None = None) -> GuardReport:
    """Check that every controller output and the next state lie in ``[-2^(n-m-1), 2^(n-m-1))``."""
    sv = [v.value for v in state]
    iv = None if inputs is None else [v.value for v in inputs]
    report = GuardReport(True)
    rows = output_rows if output_rows is not None else (range(law.output.rows) if iv is not None else law.echo_rows)
    checks = [("output", r, v) for r, v in zip(rows, law.output.evaluate_exact(sv, iv, rows))]
    if iv is not None:
        checks += [("state", r, v) for r, v in enumerate(law.update.evaluate_exact(sv, iv))]
    for kind, r, v in checks:
        if not -params.bound <= v < params.bound:
            report.ok = False
            report.violations.append((kind, r, v))
    return report


def _combine_raw(coeffs_state, coeffs_input, state, inputs) -> int:
    acc = sum(a * v.raw for a, v in zip(coeffs_state, state))
    if inputs is not None:
        acc += sum(b * v.raw for b, v in zip(coeffs_input, inputs))
    return acc


def _to_grid(raw: int, params: GridParams, what: str, step=None) -> FixedPointValue:
    if not params.contains_raw(raw):
        raise ControllerOverflowError(
            f"{what} = {Fraction(raw, 1 << params.m)} leaves [-{params.bound}, {params.bound})",
            step=step, signal=what,
        )
    return FixedPointValue(raw, params)


class PlainController:
    """Exact evaluation on the grid; integer coefficients keep results on the grid."""

    def __init__(self, law: ControlLaw, params: GridParams):
        self.law = law
        self.params = params

    def outputs(self, state, inputs=None, rows=None, step=None) -> list[FixedPointValue]:
        rows = list(range(self.law.output.rows) if rows is None else rows)
        out = []
        for r in rows:
            a, b = self.law.output.row(r)
            if inputs is None and any(b):
                raise ValueError(f"output row {r} needs the inputs")
            label = self.law.labels[r] if self.law.labels else f"output[{r}]"
            out.append(_to_grid(_combine_raw(a, b, state, inputs), self.params, label, step))
        return out

    def update(self, state, inputs, step=None) -> list[FixedPointValue]:
        return [
            _to_grid(_combine_raw(*self.law.update.row(r), state, inputs), self.params, f"zeta_{r + 1}", step)
            for r in range(self.law.update.rows)
        ]


def plain_step(state: Sequence[FixedPointValue], inputs: Sequence[FixedPointValue], law: ControlLaw,
               params: GridParams, actuation_rows: int | None = None):
    """One step of the plain stabiliser: ``(ua, ub, next_state)``.

    ``actuation_rows`` splits the output rows; by default the feedback rows are
    the actuation and the echo rows are ``ub``.
    """
    eng = PlainController(law, params)
    outs = eng.outputs(state, inputs)
    split = len(law.feedback_rows) if actuation_rows is None else actuation_rows
    return outs[:split], outs[split:], eng.update(state, inputs)


# ---------------------------------------------------------------------------
# encrypted engine
# ---------------------------------------------------------------------------

def dual_power(c: DualCiphertext, a: int, pk: PaillierPublicKey) -> PaillierCiphertext:
    """``c.plus^a`` for ``a > 0``, ``c.minus^|a|`` for ``a < 0``, the unit 1 for ``a = 0``."""
    if a == 0:
        return PaillierCiphertext(1, pk.n)
    return paillier_scale(pk, c.select(a), abs(a))


def homomorphic_row(coeffs: Sequence[int], operands: Sequence[DualCiphertext], pk: PaillierPublicKey,
                    negate: bool = False, acc: PaillierCiphertext | None = None) -> PaillierCiphertext:
    """Product of ``dual_power`` factors; ``negate`` flips every sign selection."""
    acc = PaillierCiphertext(1, pk.n) if acc is None else acc
    for a, c in zip(coeffs, operands):
        if a:
            acc = paillier_add(pk, acc, dual_power(c, -a if negate else a, pk))
    return acc


class EncryptedController:
    """Evaluates a :class:`ControlLaw` on ciphertexts using only the public key."""

    def __init__(self, law: ControlLaw, pk: PaillierPublicKey, rerandomize: bool = False, rng: RngLike = None):
        self.law = law
        self.pk = pk
        self.rerandomize = rerandomize
        self.rng = as_rng(rng) if rerandomize else None

    def _fresh(self, c: PaillierCiphertext) -> PaillierCiphertext:
        return paillier_rerandomize(self.pk, c, self.rng) if self.rerandomize else c

    def outputs(self, state: Sequence[DualCiphertext], inputs: Sequence[DualCiphertext] | None = None,
                rows=None) -> list[PaillierCiphertext]:
        out = []
        for r in range(self.law.output.rows) if rows is None else rows:
            a, b = self.law.output.row(r)
            if inputs is None and any(b):
                raise ValueError(f"output row {r} needs the inputs")
            acc = homomorphic_row(a, state, self.pk)
            if inputs is not None:
                acc = homomorphic_row(b, inputs, self.pk, acc=acc)
            out.append(self._fresh(acc))
        return out

    def update(self, state: Sequence[DualCiphertext], inputs: Sequence[DualCiphertext]) -> list[DualCiphertext]:
        out = []
        for r in range(self.law.update.rows):
            a, b = self.law.update.row(r)
            plus = homomorphic_row(b, inputs, self.pk, acc=homomorphic_row(a, state, self.pk))
            minus = homomorphic_row(b, inputs, self.pk, negate=True,
                                    acc=homomorphic_row(a, state, self.pk, negate=True))
            out.append(DualCiphertext(self._fresh(plus), self._fresh(minus)))
        return out


def encrypted_step(state: Sequence[DualCiphertext], inputs: Sequence[DualCiphertext], law: ControlLaw,
                   pk: PaillierPublicKey) -> tuple[list[PaillierCiphertext], list[DualCiphertext]]:
    """All output ciphertexts and the next dual state."""
    eng = EncryptedController(law, pk)
    return eng.outputs(state, inputs), eng.update(state, inputs)

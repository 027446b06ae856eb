"""Integer-gain observer-based stabiliser: synthesis and certified bounds.

The closed loop of the linear plant with the integer-coefficient stabiliser
evolves as ``x_c(k+1) = A_c x_c(k) + B_c delta(k)`` where ``x_c = col(x, zeta)``
and ``delta`` collects the quantisation errors.  From ``A_c`` and ``B_c`` this
module derives the decay envelope ``||A_c^k|| <= M rho^k``, the residual
``M sigma 2^-m / (1 - rho)``, the admissible initial radius ``R_o``, and the
minimum Paillier modulus that keeps homomorphic sums from wrapping.

Gains and plant data are exact rationals.  Norms and eigenvalues are computed
in float64 from those rationals; they are certificates, never control-path
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NotSchurError, SynthesisError
from .fixedpoint import GridParams
from .rational import (
    block_diag,
    denominators_lcm,
    integer_matrix,
    is_integral,
    rational_matrix,
    scale,
    to_float,
    zeros,
)

# relative slack applied to M so float round-off cannot flip ||A^k|| <= M rho^k
_ENVELOPE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class PlantMatrices:
    """Linear networked plant with per-entity block structure.

    ``A`` and ``B`` may couple entities; ``C`` is block diagonal with entity
    blocks of shape ``(q_i, s_i)`` so each entity measures only its own state.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]
    output_dims: tuple[int, ...]

    def __post_init__(self):
        s, p, q = sum(self.state_dims), sum(self.input_dims), sum(self.output_dims)
        if not len(self.state_dims) == len(self.input_dims) == len(self.output_dims) >= 1:
            raise SynthesisError("per-entity dimension lists must have the same non-zero length")
        if self.A.shape != (s, s) or self.B.shape != (s, p) or self.C.shape != (q, s):
            raise SynthesisError(
                f"plant shapes A{self.A.shape} B{self.B.shape} C{self.C.shape} "
                f"inconsistent with dims s={s}, p={p}, q={q}"
            )
        # B may couple entities (an actuator can drive a neighbour's state); C may not.
        for big, rows, cols, name in ((self.C, self.output_dims, self.state_dims, "C"),):
            r0 = 0
            for i, r in enumerate(rows):
                c0 = 0
                for j, c in enumerate(cols):
                    if i != j and any(v != 0 for v in big[r0:r0 + r, c0:c0 + c].ravel()):
                        raise SynthesisError(f"{name} must be block diagonal over entities")
                    c0 += c
                r0 += r

    @classmethod
    def from_rows(cls, A, B, C, state_dims=None, input_dims=None, output_dims=None) -> "PlantMatrices":
        A, B, C = rational_matrix(A), rational_matrix(B), rational_matrix(C)
        n = A.shape[0]
        state_dims = tuple(state_dims or (1,) * n)
        input_dims = tuple(input_dims or (1,) * len(state_dims))
        output_dims = tuple(output_dims or (1,) * len(state_dims))
        return cls(A, B, C, state_dims, input_dims, output_dims)

    @classmethod
    def from_blocks(cls, A_blocks, B_blocks, C_blocks) -> "PlantMatrices":
        """Assemble from an ``N x N`` grid of ``A_ij`` and per-entity ``B_i``, ``C_i``."""
        A = np.block([[rational_matrix(a) for a in row] for row in A_blocks])
        Bs = [rational_matrix(b) for b in B_blocks]
        Cs = [rational_matrix(c) for c in C_blocks]
        return cls(A, block_diag(Bs), block_diag(Cs),
                   tuple(b.shape[0] for b in Bs), tuple(b.shape[1] for b in Bs), tuple(c.shape[0] for c in Cs))

    @property
    def entities(self) -> int:
        return len(self.state_dims)

    @staticmethod
    def _slice(dims, i) -> slice:
        start = sum(dims[:i])
        return slice(start, start + dims[i])

    def state_slice(self, i: int) -> slice:
        return self._slice(self.state_dims, i)

    def input_slice(self, i: int) -> slice:
        return self._slice(self.input_dims, i)

    def output_slice(self, i: int) -> slice:
        return self._slice(self.output_dims, i)


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Scales and integer matrices of the stabiliser.

    ``actuation`` maps the echoed controller state to ``u^a``;
    ``innovation`` maps measurements ``y^a`` into the state update and
    ``transition`` maps the echoed state into it.
    """

    output_scale: Fraction
    state_scale: Fraction
    actuation: np.ndarray
    innovation: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        if self.output_scale <= 0 or self.state_scale <= 0:
            raise SynthesisError("output and state scales must be positive")
        for name in ("actuation", "innovation", "transition"):
            if not is_integral(getattr(self, name)):
                raise SynthesisError(f"{name} gain must be an integer matrix")

    @classmethod
    def from_rows(cls, output_scale, state_scale, actuation, innovation, transition) -> "ControllerGains":
        from .rational import parse_rational

        return cls(parse_rational(output_scale), parse_rational(state_scale),
                   integer_matrix(actuation), integer_matrix(innovation), integer_matrix(transition))

    def check_shapes(self, plant: PlantMatrices) -> None:
        s, p, q = plant.A.shape[0], plant.B.shape[1], plant.C.shape[0]
        if self.actuation.shape != (p, s) or self.innovation.shape != (s, q) or self.transition.shape != (s, s):
            raise SynthesisError(
                f"gain shapes actuation{self.actuation.shape} innovation{self.innovation.shape} "
                f"transition{self.transition.shape} do not match plant (s={s}, p={p}, q={q})"
            )


@dataclass(frozen=True)
class StabilityBounds:
    M: float
    rho: float
    sigma: float
    beta: float
    R_o: float
    d: int
    certified_at: int

    def residual(self, m: int) -> float:
        """Asymptotic bound ``M sigma 2^-m / (1 - rho)``."""
        return self.M * self.sigma / (1.0 - self.rho) * 2.0 ** -m

    def envelope(self, k: int, xc0_norm: float, m: int) -> float:
        return self.M * self.rho ** k * xc0_norm + self.residual(m)


def build_closed_loop(plant: PlantMatrices, gains: ControllerGains) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(A_c, B_c)`` for the plant in feedback with the stabiliser."""
    gains.check_shapes(plant)
    g1, g2 = gains.output_scale, gains.state_scale
    A, B, C = plant.A, plant.B, plant.C
    B_phi = B @ gains.actuation
    A_c = np.block([
        [A, scale(B_phi, g2)],
        [scale(gains.innovation @ C, g1), scale(gains.transition, g2)],
    ])
    B_c = np.block([
        [zeros(A.shape[0], C.shape[0]), scale(B_phi, Fraction(1))],
        [scale(gains.innovation, Fraction(1)), scale(gains.transition, Fraction(1))],
    ])
    return A_c, B_c


def spectral_radius(matrix: np.ndarray) -> float:
    m = to_float(matrix)
    if m.size == 0:
        return 0.0
    return float(max(abs(np.linalg.eigvals(m))))


def is_schur(matrix: np.ndarray) -> bool:
    return spectral_radius(matrix) < 1.0


def integerize(K, L, plant: PlantMatrices, output_scale=None, state_scale=None) -> ControllerGains:
    """Turn rational state-feedback ``K`` and observer ``L`` into integer gains.

    With ``A + BK`` and ``A + LC`` Schur, the gains are ``actuation = K / g2``,
    ``innovation = -L / g1`` and ``transition = (A + BK + LC) / g2``.  By default
    the scales are the reciprocals of the least common denominators, which is
    the coarsest choice making every matrix integral.  Explicit scales are
    accepted if they also give integers.
    """
    K, L = rational_matrix(K), rational_matrix(L)
    if K.shape != plant.B.shape[::-1] or L.shape != plant.C.shape[::-1]:
        raise SynthesisError(f"K{K.shape} / L{L.shape} do not match plant B{plant.B.shape} / C{plant.C.shape}")
    core = plant.A + plant.B @ K + L @ plant.C
    g2 = Fraction(state_scale) if state_scale is not None else Fraction(1, math.lcm(denominators_lcm(K), denominators_lcm(core)))
    g1 = Fraction(output_scale) if output_scale is not None else Fraction(1, denominators_lcm(L))
    actuation, innovation, transition = scale(K, 1 / g2), scale(L, -1 / g1), scale(core, 1 / g2)
    for name, mat in (("actuation", actuation), ("innovation", innovation), ("transition", transition)):
        if not is_integral(mat):
            raise SynthesisError(f"scales g1={g1}, g2={g2} leave the {name} gain non-integral")
    gains = ControllerGains(g1, g2, integer_matrix(actuation), integer_matrix(innovation), integer_matrix(transition))
    validate_gains(plant, gains)
    return gains


def validate_gains(plant: PlantMatrices, gains: ControllerGains) -> np.ndarray:
    """Return ``A_c`` or raise :class:`NotSchurError`."""
    A_c, _ = build_closed_loop(plant, gains)
    r = spectral_radius(A_c)
    if r >= 1.0:
        raise NotSchurError(f"closed loop is not Schur (spectral radius {r:.6g})")
    return A_c


def place_gains(plant: PlantMatrices, controller_poles, observer_poles, max_denominator: int = 10):
    """Pole-placement convenience: rational ``(K, L)`` for :func:`integerize`.

    Uses scipy's ``place_poles`` and then snaps entries to rationals with
    denominator at most ``max_denominator``; the snapped gains are re-checked,
    since snapping moves the poles.
    """
    from scipy.signal import place_poles

    A, B, C = to_float(plant.A), to_float(plant.B), to_float(plant.C)
    F = place_poles(A, B, controller_poles).gain_matrix
    Fo = place_poles(A.T, C.T, observer_poles).gain_matrix
    snap = np.vectorize(lambda v: Fraction(float(v)).limit_denominator(max_denominator), otypes=[object])
    K, L = snap(-F), snap(-Fo.T)
    for label, M in (("A + BK", plant.A + plant.B @ K), ("A + LC", plant.A + L @ plant.C)):
        if not is_schur(M):
            raise NotSchurError(f"{label} lost stability after rounding to denominator {max_denominator}")
    return K, L


def decay_envelope(A_c: np.ndarray, k_max: int = 100_000, margin: float | None = None) -> tuple[float, float, int]:
    """Constants ``(M, rho)`` with ``||A_c^k|| <= M rho^k`` for every ``k >= 0``.

    ``rho`` is the spectral radius plus ``margin`` (default one tenth of the gap
    to 1).  Powers are iterated until some ``K`` has ``||A_c^K|| <= rho^K``;
    then any ``k = qK + r`` satisfies ``||A_c^k|| <= rho^(qK) ||A_c^r||``, so
    the maximum of ``||A_c^r|| / rho^r`` over ``r < K`` is a valid ``M`` for
    all ``k``.  Returns ``(M, rho, K)``.
    """
    A = to_float(A_c)
    r = spectral_radius(A_c)
    if r >= 1.0:
        raise NotSchurError(f"closed loop is not Schur (spectral radius {r:.6g})")
    eps = (1.0 - r) / 10.0 if margin is None else float(margin)
    rho = r + eps
    if not (eps > 0 and rho < 1.0):
        raise SynthesisError(f"margin {eps} must be positive and keep rho below 1")
    M = 1.0
    power = np.eye(A.shape[0])
    for k in range(1, k_max + 1):
        power = power @ A
        ratio = np.linalg.norm(power, 2) / rho ** k
        if ratio <= 1.0:
            return M * (1.0 + _ENVELOPE_SLACK), rho, k
        M = max(M, ratio)
    raise SynthesisError(f"decay envelope not certified within {k_max} powers")


def operating_region(M: float, rho: float, sigma: float, plant: PlantMatrices, gains: ControllerGains,
                     params: GridParams, strict: bool = True) -> tuple[float, float]:
    """``(beta, R_o)``: initial conditions with ``||x_c(0)|| <= R_o`` keep every signal in range."""
    n, m = params.n, params.m
    g1, g2 = float(gains.output_scale), float(gains.state_scale)
    terms = [1.0, 1.0 / g2]
    for i in range(plant.entities):
        phi_i = np.linalg.norm(to_float(gains.actuation[plant.input_slice(i), :]), 2)
        if phi_i > 0:
            terms.append((1.0 - phi_i * 2.0 ** (-n + 1)) / (g2 * phi_i))
        c_i = np.linalg.norm(to_float(plant.C[plant.output_slice(i), plant.state_slice(i)]), 2)
        if c_i > 0:
            terms.append(1.0 / (g1 * c_i))
    beta = 2.0 ** (n - m - 1) * min(terms)
    R_o = beta / M - sigma / (1.0 - rho) * 2.0 ** -m
    if strict and R_o <= 0:
        raise SynthesisError(
            f"no admissible initial condition: R_o = {R_o:.6g} <= 0; "
            f"the word length n={n} is too small for these gains, increase n"
        )
    return beta, R_o


def stability_bounds(plant: PlantMatrices, gains: ControllerGains, params: GridParams,
                     margin: float | None = None, strict: bool = True) -> StabilityBounds:
    A_c, B_c = build_closed_loop(plant, gains)
    M, rho, K = decay_envelope(A_c, margin=margin)
    d = plant.C.shape[0] + plant.A.shape[0]
    sigma = float(np.linalg.norm(to_float(B_c), 2)) * d
    beta, R_o = operating_region(M, rho, sigma, plant, gains, params, strict=strict)
    return StabilityBounds(M=float(M), rho=float(rho), sigma=sigma, beta=float(beta), R_o=float(R_o), d=d, certified_at=K)


def row_abs_sums(matrix: np.ndarray) -> list[int]:
    return [sum(abs(int(v)) for v in row) for row in np.asarray(matrix)]


def required_paillier_bound(gains: ControllerGains, n: int) -> int:
    """Exclusive lower bound on the Paillier modulus.

    ``2^n`` times the largest absolute row sum over the actuation rows and the
    rows of ``[transition innovation]`` that drive the state update.
    """
    rows = row_abs_sums(gains.actuation) + row_abs_sums(np.hstack([gains.transition, gains.innovation]))
    return (1 << n) * max(rows, default=0)

"""Exact-rational plant dynamics.

The simulator only needs something with the :class:`Plant` shape: a state
transition and an output map.  :class:`LinearPlant` is the networked linear
plant with the extra echo channel that returns the controller state to the
plant through ``y^b = g2 u^b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import SynthesisError
from .rational import rational_vector, scale
from .synthesis import PlantMatrices


@dataclass(frozen=True, eq=False)
class PlantState:
    x: np.ndarray
    k: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("step index must be non-negative")


@dataclass(frozen=True, eq=False)
class PlantOutputs:
    """Unquantised outputs: ``ya = g1 C x`` and ``yb = g2 ub``."""

    ya: np.ndarray
    yb: np.ndarray


class Plant(Protocol):
    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def output(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class FunctionPlant:
    """Caller-supplied transition and output maps, treated opaquely."""

    transition: Callable[[np.ndarray, np.ndarray], np.ndarray]
    measurement: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def step(self, x, u):
        return self.transition(x, u)

    def output(self, x, u):
        return self.measurement(x, u)


def _check_len(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = rational_vector(list(v))
    if v.shape != (n,):
        raise SynthesisError(f"{what} has length {v.shape[0]}, expected {n}")
    return v


@dataclass(frozen=True, eq=False)
class LinearPlant:
    matrices: PlantMatrices
    output_scale: Fraction
    state_scale: Fraction

    @property
    def state_dim(self) -> int:
        return self.matrices.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.matrices.B.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrices.C.shape[0]

    def step(self, x, u):
        """``x(k+1) = A x(k) + B u^a(k)``; ``u`` is the actuation input only."""
        x = _check_len(x, self.state_dim, "state")
        u = _check_len(u, self.input_dim, "actuation input")
        return self.matrices.A @ x + self.matrices.B @ u

    def output(self, x, u=None):
        x = _check_len(x, self.state_dim, "state")
        return scale(self.matrices.C @ x.reshape(-1, 1), self.output_scale).ravel()

    def echo(self, ub) -> np.ndarray:
        ub = _check_len(ub, self.state_dim, "echo input")
        return np.array([self.state_scale * v for v in ub], dtype=object)


def plant_step(state: PlantState, ua: Sequence, ub: Sequence, plant: LinearPlant) -> tuple[PlantState, PlantOutputs]:
    """Outputs at step ``k`` and the state at ``k + 1``."""
    outputs = PlantOutputs(plant.output(state.x), plant.echo(ub))
    return PlantState(plant.step(state.x, ua), state.k + 1), outputs

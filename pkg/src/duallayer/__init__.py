"""Double-layer (Paillier inside RSA) encrypted networked control."""

from .errors import *  # noqa: F401,F403
from .fixedpoint import FixedPointValue, GridParams, from_integer, quantize, to_integer
from .synthesis import ControllerGains, PlantMatrices, integerize, stability_bounds
from .sim import RunConfig, Trajectory, bound_check, equivalence_audit, run

__version__ = "0.1.0"

__all__ = [
    "FixedPointValue", "GridParams", "from_integer", "quantize", "to_integer",
    "ControllerGains", "PlantMatrices", "integerize", "stability_bounds",
    "RunConfig", "Trajectory", "bound_check", "equivalence_audit", "run",
]

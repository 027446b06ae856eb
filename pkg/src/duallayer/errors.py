"""Exception hierarchy shared across the package.

The CLI maps each family onto a distinct exit code, so new errors should
subclass the closest existing family rather than ``DualLayerError`` directly.
"""


class DualLayerError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DualLayerError, ValueError):
    """Malformed or inconsistent run configuration."""


class KeyGenerationError(DualLayerError, ValueError):
    """Requested key parameters cannot be satisfied."""


class KeyMismatchError(DualLayerError, ValueError):
    """A ciphertext was presented to a key it was not produced under."""


class PlaintextRangeError(DualLayerError, ValueError):
    """Plaintext outside the message space of the cryptosystem."""


class InvalidCiphertextError(DualLayerError, ValueError):
    """Value is not a member of the ciphertext space."""


class LayerError(DualLayerError, ValueError):
    """Encryption layers stripped in the wrong order or under the wrong party."""


class GridOverflowError(DualLayerError, OverflowError):
    """Value does not fit the signed fixed-point grid."""


class ControllerOverflowError(GridOverflowError):
    """A controller signal left the representable range during a run."""

    def __init__(self, message, step=None, signal=None):
        super().__init__(message)
        self.step = step
        self.signal = signal


class ProvisioningError(DualLayerError, ValueError):
    """Key sizes violate the modulus size rules."""


class AccessDenied(DualLayerError, PermissionError):
    """A party attempted a decryption it does not hold the keys for."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class SynthesisError(DualLayerError, ValueError):
    """Controller synthesis or bound computation failed."""


class NotSchurError(SynthesisError):
    """Closed-loop matrix has an eigenvalue on or outside the unit circle."""


class EquivalenceError(DualLayerError, AssertionError):
    """Encrypted loop diverged from its plaintext shadow."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

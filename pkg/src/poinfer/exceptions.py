"""Exception hierarchy shared across the package."""


class PoinferError(Exception):
    """Base class for all package errors."""


class ShapeError(PoinferError, ValueError):
    """Tensor or layer dimensions do not chain."""

    def __init__(self, message: str, layer_index: int | None = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class FormatError(PoinferError, ValueError):
    """A data or weight file is malformed."""


class TrainingDivergedError(PoinferError, RuntimeError):
    """Loss became non-finite during training."""


class ParameterError(PoinferError, ValueError):
    """Invalid or insecure CKKS parameters."""


class HEError(PoinferError, RuntimeError):
    """Homomorphic operation precondition failed."""


class NoiseBudgetExhausted(HEError):
    """A ciphertext can no longer be decrypted or rescaled."""


class MissingKeyError(HEError):
    """A required evaluation key was not generated."""


class PlanError(PoinferError, ValueError):
    """A leakage plan is inconsistent with the weights it refers to."""


class ConfigError(PoinferError, ValueError):
    """Experiment configuration is invalid."""

"""Exception types shared across modules (kept here to avoid import cycles)."""


class ParkPrefError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(ParkPrefError, ValueError):
    """Invalid experiment configuration: unknown keys, bad shapes, bad values."""


class SimulationError(ParkPrefError, RuntimeError):
    """Agent simulation cannot proceed."""


class UnsatisfiableActivityError(SimulationError):
    """No cell in the layout affords the requested activity."""


class BuildError(ParkPrefError, ValueError):
    """No architecture of the requested kind fits the parameter budget."""


class MetricError(ParkPrefError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class labels)."""


class TrainingDiverged(ParkPrefError, RuntimeError):
    """Training produced non-finite losses, gradients, or parameters.

    When raised from the training loop, a `result` attribute carries the
    partial TrainResult recorded before the divergence.
    """

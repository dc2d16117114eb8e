"""Exception types shared across the package.

CLI exit-code mapping: ConfigError -> 2, NumericError and subclasses -> 3,
OSError -> 4.
"""


class CapacityError(ValueError):
    """A dense materialization would exceed the configured entry cap."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class NumericError(RuntimeError):
    """Base class for numerical failures surfaced to the CLI."""


class IntegrationBlowupError(NumericError):
    """SDE integration produced a non-finite state."""

    def __init__(self, step, seed=None):
        self.step = step
        self.seed = seed
        msg = f"non-finite state at integration step {step}"
        if seed is not None:
            msg += f" (seed {seed})"
        super().__init__(msg)


class DriftSingularityError(NumericError):
    """Drift field evaluated at a singular point (e.g. the polar origin)."""


class EmptySubspaceError(NumericError):
    """Truncation removed every singular value at some core."""

    def __init__(self, core_index, threshold):
        self.core_index = core_index
        self.threshold = threshold
        super().__init__(
            f"all singular values of core {core_index} fall below the "
            f"truncation threshold {threshold:.3e}"
        )


class IllConditionedError(NumericError):
    """Whitening would divide by a vanishing singular value."""


class DegenerateWeightError(NumericError):
    """Importance weight undefined (sampling density vanished)."""


class ClusteringError(NumericError):
    """Clustering failed (degenerate input)."""

"""Exception types shared across the package."""


class ScribbleSegError(Exception):
    """Base class for all scribbleseg-specific errors."""


class DegenerateRegionError(ScribbleSegError):
    """A mask region is too small (or empty) to carve an annotation from."""


class EmptyScribbleError(ScribbleSegError):
    """A scribble with zero labeled pixels was passed where |S| >= 1 is required."""


class DatasetFormatError(ScribbleSegError):
    """An on-disk dataset file is missing or holds out-of-domain values."""


class AffinityCapError(ScribbleSegError):
    """Requested affinity resolution exceeds the configured pixel cap."""


class ConfigError(ScribbleSegError):
    """A run configuration value is missing, unknown, or out of bounds."""


class TrainingDivergedError(ScribbleSegError):
    """A loss term became NaN/Inf during training."""

    def __init__(self, step: int, term: str, value: float):
        self.step = step
        self.term = term
        self.value = value
        super().__init__(
            f"training diverged at step {step}: loss term '{term}' is {value!r}"
        )

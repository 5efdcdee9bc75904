class EmbzError(Exception):
    """Base class for errors raised by the embz modules."""


class ConfigError(EmbzError, ValueError):
    """Invalid parameters or experiment configuration."""


class SpectrumError(EmbzError, ValueError):
    """Raw weights do not describe a probability spectrum."""


class NumericQualityError(EmbzError, ArithmeticError):
    """A numerical routine failed or could not reach the requested accuracy."""


class TruncationBudgetError(NumericQualityError):
    """Tail mass of a truncated spectrum exceeds the configured cap."""

    def __init__(self, tail_mass: float, cap: float, k: int):
        self.tail_mass = tail_mass
        self.cap = cap
        self.k = k
        super().__init__(
            f"tail mass {tail_mass:.3e} exceeds cap {cap:.1e} at K={k}; raise truncation_k"
        )

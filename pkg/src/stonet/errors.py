"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when an experiment configuration is malformed or inconsistent."""


class DivergenceError(RuntimeError):
    """Base class for numerical blow-ups detected during training."""


class SamplerDivergenceError(DivergenceError):
    """Non-finite latent or momentum encountered during backward sampling.

    Carries the outer iteration and the (1-based) layer where the
    non-finite value was detected.
    """

    def __init__(self, iteration: int, layer: int, message: str = ""):
        self.iteration = iteration
        self.layer = layer
        detail = message or "non-finite latent state"
        super().__init__(
            f"sampler diverged at iteration {iteration}, layer {layer}: {detail}"
        )


class UpdateDivergenceError(DivergenceError):
    """Non-finite parameter produced by a stochastic-approximation update."""

    def __init__(self, iteration: int, layer: int):
        self.iteration = iteration
        self.layer = layer
        super().__init__(
            f"parameter update diverged at iteration {iteration}, layer {layer}"
        )


class DegenerateInputError(ValueError):
    """Input is degenerate for the requested statistic (e.g. constant rows)."""


class MissingStateError(RuntimeError):
    """An operation was called before the state it consumes was produced."""

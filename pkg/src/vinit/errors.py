class NumericalError(RuntimeError):
    """The data cannot support a reliable estimate (degenerate motion,
    divergence, ill-conditioned filter update)."""


class RankDeficiencyError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class ConfigError(ValueError):
    pass

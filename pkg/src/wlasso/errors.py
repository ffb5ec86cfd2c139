"""Exception hierarchy shared by the numerical modules and the CLI."""


class WlassoError(Exception):
    """Base class; ``exit_code`` is what the CLI returns when it escapes."""

    exit_code = 2


class DimensionMismatch(WlassoError, ValueError):
    pass


class NotPositiveDefinite(WlassoError, ValueError):
    exit_code = 4


class RankDeficient(WlassoError, ValueError):
    exit_code = 4


class DegenerateResiduals(WlassoError, ValueError):
    exit_code = 4


class NonStationaryFit(WlassoError, ValueError):
    exit_code = 4


class NotConverged(WlassoError, RuntimeError):
    """Coordinate descent ran out of sweeps.

    The last iterate and its KKT residual travel with the exception so callers
    can inspect or log them.
    """

    exit_code = 3

    def __init__(self, message, beta=None, kkt_residual=None, lambda_index=None):
        super().__init__(message)
        self.beta = beta
        self.kkt_residual = kkt_residual
        self.lambda_index = lambda_index


class SingularSubGram(WlassoError, ValueError):
    exit_code = 4


class NotDiagonallyDominant(WlassoError, ValueError):
    exit_code = 2


class InvalidExponents(WlassoError, ValueError):
    exit_code = 2


class IncompatibleSize(WlassoError, ValueError):
    exit_code = 2


class PlacementInfeasible(WlassoError, ValueError):
    exit_code = 2


class ConfigError(WlassoError, ValueError):
    exit_code = 2

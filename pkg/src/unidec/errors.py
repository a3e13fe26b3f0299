"""Exception hierarchy shared by the library and the CLI."""


class UnidecError(Exception):
    """Base class for all library errors."""


class ConfigError(UnidecError, ValueError):
    """Invalid configuration or precondition violation."""


class NumericalDegeneracy(UnidecError, ArithmeticError):
    """A computation hit a numerically degenerate case (CLI exit code 3)."""


class SamplingExhausted(NumericalDegeneracy):
    """Rejection sampler exceeded its retry cap."""


class SingularSystemError(NumericalDegeneracy):
    """Normal equations too ill-conditioned to solve."""


class DegenerateFitError(NumericalDegeneracy):
    """Fitted backward-channel variance fell below the configured floor."""


class AsymmetricSpectrumError(UnidecError, ValueError):
    """Spectrum is not the transform of a real signal."""


class ZeroHitError(NumericalDegeneracy):
    """No Monte Carlo sample landed in the target set."""

class FLVRError(Exception):
    """
    Base class for every failure the pipeline reports to the command line.

    Attributes:
        exit_code (int): Process exit code used by main.py.
    """
    exit_code = 3


class DataError(FLVRError):
    """Unreadable or malformed input, or a series invariant that does not hold."""
    exit_code = 1


class ConfigError(FLVRError):
    """Invalid run configuration or inconsistent call parameters."""
    exit_code = 2


class NumericalError(FLVRError):
    """A computation left its valid domain (degenerate fit, nonpositive wealth, ...)."""
    exit_code = 3


class HedgeDomainError(NumericalError, ValueError):
    """hedge_fraction was called outside the open interval (0, 1)."""


class SamplerDomainError(ConfigError, ValueError):
    """The BESQ4 sampler got a nonpositive state or an unusable phi increment."""

"""Exception hierarchy."""


class WavePolymerError(Exception):
    """Base class for all package errors."""


class ConfigError(WavePolymerError, ValueError):
    """Invalid configuration value or combination of values."""


class AliasRule(ConfigError):
    """Spatial grid too coarse for the spectral truncation (n_x < 4 * n_modes)."""


class SpectrumDivergent(ConfigError):
    """Power-law spectrum with exponent alpha <= 1 has a divergent variance sum."""


class NonMonotone(ConfigError):
    """Custom noise amplitudes are not nonincreasing."""


class SpectrumCapViolation(ConfigError):
    """Custom noise amplitude exceeds the cap gamma_n^2 <= c / n^alpha."""


class DomainError(WavePolymerError, ValueError):
    """Argument outside the domain of the operation."""


class DegenerateWeights(WavePolymerError):
    """Every importance weight vanished; importance sampling cannot proceed."""


class NoSolution(WavePolymerError):
    """An exponent balance has no unique solution."""

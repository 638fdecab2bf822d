"""Neumann cosine basis on [0, J], damping regimes and the spatial noise spectrum."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from wavepolymer.errors import (
    AliasRule,
    ConfigError,
    DomainError,
    NonMonotone,
    SpectrumCapViolation,
    SpectrumDivergent,
)

CRITICAL_RTOL = 1e-12
_SEED_MAX = 2**64 - 1


class Regime(enum.Enum):
    OVERDAMPED = "Overdamped"
    CRITICAL = "Critical"
    UNDERDAMPED = "Underdamped"


@dataclass(frozen=True)
class DomainConfig:
    """Physical and discretisation parameters.

    The spatial grid has ``n_x`` cells of width ``J / n_x`` and samples at
    the cell midpoints. The time grid has ``n_t`` steps of ``dt = T / n_t``
    and ``n_t + 1`` nodes including both ends.
    """

    J: float
    T: float
    n_modes: int
    n_x: int
    n_t: int
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.J) and self.J > 0):
            raise ConfigError(f"J must be positive and finite, got {self.J}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"T must be positive and finite, got {self.T}")
        for name in ("n_modes", "n_x", "n_t", "seed"):
            if isinstance(getattr(self, name), bool) or not isinstance(getattr(self, name), (int, np.integer)):
                raise ConfigError(f"{name} must be an integer")
        if self.n_modes < 1:
            raise ConfigError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.n_t < 1:
            raise ConfigError(f"n_t must be >= 1, got {self.n_t}")
        if self.n_x < 8:
            raise ConfigError(f"n_x must be >= 8, got {self.n_x}")
        if self.n_x < 4 * self.n_modes:
            raise AliasRule(
                f"n_x={self.n_x} violates the anti-aliasing rule n_x >= 4*n_modes={4 * self.n_modes}"
            )
        if not 0 <= self.seed <= _SEED_MAX:
            raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def dx(self) -> float:
        return self.J / self.n_x

    @property
    def x_grid(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)


@dataclass(frozen=True)
class ModeSpec:
    """Constants of one Neumann mode.

    ``omega_n`` is the frequency parameter used by the regime-specific
    kernels: ``sqrt(4k^2 - 1)/2`` when underdamped, ``sqrt(1 - 4k^2)`` when
    overdamped (so that the slow and fast rates are ``(-1 +- omega)/2``),
    and 0 when critical. The zero mode carries ``omega_n = 1``, its rates
    being 0 and -1.
    """

    n: int
    J: float
    lambda_n: float
    k_n: float
    omega_n: float
    regime: Regime
    c_n: float
    gamma_n: float = 0.0

    @property
    def roots(self) -> tuple[complex, complex]:
        """Characteristic roots of ``r^2 + r + k^2 = 0``."""
        disc = 1.0 - 4.0 * self.k_n**2
        s = np.sqrt(complex(disc))
        return ((-1.0 + s) / 2.0, (-1.0 - s) / 2.0)


def classify_regime(J: float, n: int) -> Regime:
    """Damping regime of mode ``n`` on an interval of length ``J``."""
    gap = J - 2.0 * math.pi * n
    if abs(gap) <= CRITICAL_RTOL * max(1.0, J):
        return Regime.CRITICAL
    return Regime.OVERDAMPED if gap > 0 else Regime.UNDERDAMPED


def make_mode(n: int, J: float, gamma_n: float = 0.0) -> ModeSpec:
    if not (math.isfinite(J) and J > 0):
        raise ConfigError(f"J must be positive, got {J}")
    if n < 0:
        raise ConfigError(f"mode index must be nonnegative, got {n}")
    if n == 0:
        return ModeSpec(0, J, 0.0, 0.0, 1.0, Regime.OVERDAMPED, math.sqrt(1.0 / J), gamma_n)
    k = n * math.pi / J
    regime = classify_regime(J, n)
    if regime is Regime.UNDERDAMPED:
        omega = math.sqrt(4.0 * k * k - 1.0) / 2.0
    elif regime is Regime.OVERDAMPED:
        omega = math.sqrt(1.0 - 4.0 * k * k)
    else:
        omega = 0.0
    return ModeSpec(n, J, -k * k, k, omega, regime, math.sqrt(2.0 / J), gamma_n)


def build_eigenbasis(cfg: DomainConfig) -> list[ModeSpec]:
    """Modes ``0 .. n_modes-1`` with ``gamma_n`` left at zero."""
    return [make_mode(n, cfg.J) for n in range(cfg.n_modes)]


@dataclass(frozen=True)
class PowerLaw:
    """``gamma_n = sqrt(c / n^alpha)`` for ``n >= 1``."""


@dataclass(frozen=True)
class Custom:
    """User amplitudes ``gamma_1, gamma_2, ...``; missing entries are zero."""

    values: tuple[float, ...]

    def __init__(self, values: Sequence[float]):
        object.__setattr__(self, "values", tuple(float(v) for v in values))


Profile = Union[PowerLaw, Custom]


@dataclass(frozen=True)
class NoiseSpectrum:
    """Noise amplitudes ``gammas[n]`` for ``n = 0 .. n_modes-1``."""

    c: float
    alpha: float
    gammas: tuple[float, ...]
    profile: str = "PowerLaw"

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    @property
    def n_modes(self) -> int:
        return len(self.gammas)

    @property
    def gamma_0(self) -> float:
        return self.gammas[0]

    def apply(self, modes: Sequence[ModeSpec]) -> list[ModeSpec]:
        """Copies of ``modes`` with ``gamma_n`` filled in."""
        if len(modes) > len(self.gammas):
            raise ConfigError("spectrum shorter than the mode list")
        return [replace(m, gamma_n=self.gammas[m.n]) for m in modes]

    def partial_sum(self) -> float:
        """Sum of ``gamma_n^2`` over the retained modes ``n >= 1``."""
        return float(sum(g * g for g in self.gammas[1:]))

    def tail_bound(self) -> float:
        """Upper bound on the discarded variance ``sum_{n >= N} gamma_n^2``.

        Uses ``c/N^alpha + c N^(1-alpha)/(alpha-1)``, which dominates the
        power-law tail sum by the integral comparison. Infinite when
        ``alpha <= 1``.
        """
        return tail_bound(self.c, self.alpha, self.n_modes)


def tail_bound(c: float, alpha: float, N: int) -> float:
    if alpha <= 1.0:
        return math.inf
    N = max(int(N), 1)
    return c * (N**-alpha + N ** (1.0 - alpha) / (alpha - 1.0))


def attach_spectrum(
    modes: Sequence[ModeSpec],
    c: float,
    alpha: float,
    profile: Profile | None = None,
    gamma_0: float | None = None,
) -> NoiseSpectrum:
    """Build the noise spectrum for ``modes``.

    Parameters
    ----------
    modes : sequence of ModeSpec
        Output of :func:`build_eigenbasis`; only its length is used.
    c, alpha : float
        Cap constants in ``gamma_n^2 <= c / n^alpha``.
    profile : PowerLaw or Custom
        Defaults to :class:`PowerLaw`.
    gamma_0 : float, optional
        Zero-mode amplitude, ``sqrt(c)`` if omitted.

    Raises
    ------
    SpectrumDivergent
        PowerLaw with ``alpha <= 1``.
    NonMonotone, SpectrumCapViolation
        Custom amplitudes that increase or break the cap.
    """
    profile = PowerLaw() if profile is None else profile
    if not (math.isfinite(c) and c > 0):
        raise ConfigError(f"c must be positive, got {c}")
    if not (math.isfinite(alpha) and alpha > 0):
        raise ConfigError(f"alpha must be positive, got {alpha}")
    N = len(modes)
    g0 = math.sqrt(c) if gamma_0 is None else float(gamma_0)
    if not (math.isfinite(g0) and g0 >= 0):
        raise ConfigError(f"gamma_0 must be nonnegative, got {gamma_0}")
    if isinstance(profile, PowerLaw):
        if alpha <= 1.0:
            raise SpectrumDivergent(f"PowerLaw spectrum needs alpha > 1, got alpha={alpha}")
        gammas = [g0] + [math.sqrt(c / n**alpha) for n in range(1, N)]
        return NoiseSpectrum(c, alpha, tuple(gammas), "PowerLaw")
    if isinstance(profile, Custom):
        vals = list(profile.values)
        for v in vals:
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"custom amplitudes must be nonnegative, got {v}")
        for i in range(1, len(vals)):
            if vals[i] ** 2 > vals[i - 1] ** 2:
                raise NonMonotone(
                    f"gamma_{i + 1}={vals[i]} exceeds gamma_{i}={vals[i - 1]}; amplitudes must be nonincreasing"
                )
        for i, v in enumerate(vals, start=1):
            cap = c / i**alpha
            if v * v > cap * (1.0 + 1e-12):
                raise SpectrumCapViolation(f"gamma_{i}^2={v * v} exceeds c/n^alpha={cap}")
        body = (vals + [0.0] * N)[: max(N - 1, 0)]
        return NoiseSpectrum(c, alpha, tuple([g0] + body), "Custom")
    raise ConfigError(f"unknown spectrum profile {profile!r}")


def eval_eigenfunction(mode: ModeSpec, x) -> np.ndarray | float:
    """``c_n cos(n pi x / J)``; ``x`` may be a scalar or an array in [0, J]."""
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0) or np.any(xa > mode.J):
        raise DomainError(f"x must lie in [0, {mode.J}]")
    val = mode.c_n * np.cos(mode.n * np.pi * xa / mode.J)
    return float(val) if val.ndim == 0 else val


def basis_matrix(modes: Sequence[ModeSpec], x: np.ndarray) -> np.ndarray:
    """``B[n, j] = phi_n(x_j)`` for the listed modes."""
    x = np.asarray(x, dtype=float)
    if len(modes) == 0:
        return np.zeros((0, x.size))
    J = modes[0].J
    n = np.array([m.n for m in modes], dtype=float)
    cn = np.array([m.c_n for m in modes])
    return cn[:, None] * np.cos(np.pi * n[:, None] * x[None, :] / J)


def noise_covariance_kernel(spec: NoiseSpectrum, modes: Sequence[ModeSpec], x, y):
    """Truncated spatial covariance ``f(x, y) = sum gamma_n^2 phi_n(x) phi_n(y)``.

    Broadcasts over array arguments.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if len(modes) == 0:
        return np.zeros(np.broadcast(xa, ya).shape)
    J = modes[0].J
    for arr in (xa, ya):
        if np.any(arr < 0) or np.any(arr > J):
            raise DomainError(f"points must lie in [0, {J}]")
    out = np.zeros(np.broadcast(xa, ya).shape)
    for m in modes:
        g2 = spec.gammas[m.n] ** 2
        if g2 == 0.0:
            continue
        w = m.n * np.pi / J
        out = out + g2 * m.c_n**2 * np.cos(w * xa) * np.cos(w * ya)
    return float(out) if out.ndim == 0 else out

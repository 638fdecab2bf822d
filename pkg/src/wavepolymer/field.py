"""Field synthesis on the space-time grid and the radius statistic."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from wavepolymer.dynamics import ModePath
from wavepolymer.errors import ConfigError
from wavepolymer.spectrum import DomainConfig, ModeSpec, basis_matrix

DUMP_MAGIC = b"WPFG"
DUMP_VERSION = 1


@dataclass
class FieldGrid:
    """``values[i, j] = u(t_i, x_j)`` at cell midpoints ``x_j``."""

    values: np.ndarray
    cfg: DomainConfig

    def __post_init__(self):
        shape = (self.cfg.n_t + 1, self.cfg.n_x)
        if self.values.shape != shape:
            raise ConfigError(f"field shape {self.values.shape} does not match grid {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field contains non-finite values")


@dataclass
class RadiusStat:
    """Radius ``R``, per-slice ``theta^2`` and optional per-mode shares of ``R^2``."""

    R: float
    theta_sq: np.ndarray
    mode_contrib: np.ndarray | None = None

    @property
    def R_sq_modes(self) -> float | None:
        return None if self.mode_contrib is None else float(self.mode_contrib.sum())


def time_weights(cfg: DomainConfig) -> np.ndarray:
    """Trapezoid weights on the time grid."""
    w = np.full(cfg.n_t + 1, cfg.dt)
    w[0] = w[-1] = 0.5 * cfg.dt
    return w


def synthesize(coeffs: np.ndarray, modes: Sequence[ModeSpec], cfg: DomainConfig) -> np.ndarray:
    """``u = coeffs @ B`` where ``coeffs[..., i, m]`` is ``a_m(t_i)``."""
    return np.asarray(coeffs) @ basis_matrix(modes, cfg.x_grid)


def assemble_field(paths: Sequence[ModePath], cfg: DomainConfig) -> FieldGrid:
    """Truncated Fourier synthesis ``u(t, x) = sum_n a_n(t) phi_n(x)``."""
    if not paths:
        raise ConfigError("no mode paths given")
    for p in paths:
        if p.states.shape[0] != cfg.n_t + 1 or not np.isclose(p.dt, cfg.dt, rtol=1e-12, atol=0):
            raise ConfigError(f"path of mode {p.mode.n} is on a different time grid")
        if p.mode.J != cfg.J:
            raise ConfigError(f"path of mode {p.mode.n} belongs to a different interval length")
    coeffs = np.stack([p.a for p in paths], axis=1)
    return FieldGrid(synthesize(coeffs, [p.mode for p in paths], cfg), cfg)


def spatial_mean(field: FieldGrid) -> np.ndarray:
    """``(1/J) int u(t_i, x) dx`` by the midpoint rule."""
    return field.values.mean(axis=1)


def theta_sq_values(values: np.ndarray) -> np.ndarray:
    """``(1/J) int (u - ubar)^2 dx`` per time row (midpoint rule); broadcasts over leading axes."""
    dev = values - values.mean(axis=-1, keepdims=True)
    return (dev * dev).mean(axis=-1)


def theta_profile(field: FieldGrid) -> np.ndarray:
    """``theta_u(t_i, J)``, the spatial RMS deviation of each slice."""
    return np.sqrt(theta_sq_values(field.values))


def radius_sq_values(values: np.ndarray, cfg: DomainConfig) -> np.ndarray:
    return theta_sq_values(values) @ time_weights(cfg) / cfg.T


def mode_contributions(coeffs: np.ndarray, modes: Sequence[ModeSpec], cfg: DomainConfig) -> np.ndarray:
    """``S_T^n / (T J)`` per mode from the coefficient paths (zero for ``n = 0``).

    ``coeffs[i, m]`` is ``a_m(t_i)``; by orthonormality ``R^2`` is the sum
    of the returned entries.
    """
    sq = np.asarray(coeffs) ** 2
    contrib = (time_weights(cfg) @ sq) / (cfg.T * cfg.J)
    ns = np.array([m.n for m in modes])
    return np.where(ns == 0, 0.0, contrib)


def radius(field: FieldGrid, paths: Sequence[ModePath] | None = None) -> RadiusStat:
    """``R = sqrt((1/(T J)) int int (u - ubar)^2 dx dt)``.

    Midpoint rule in space, trapezoid in time. When ``paths`` are given the
    per-mode Parseval shares are computed from them independently of the
    grid.
    """
    cfg = field.cfg
    th = theta_sq_values(field.values)
    R2 = float(th @ time_weights(cfg) / cfg.T)
    contrib = None
    if paths is not None:
        coeffs = np.stack([p.a for p in paths], axis=1)
        contrib = mode_contributions(coeffs, [p.mode for p in paths], cfg)
    return RadiusStat(float(np.sqrt(max(R2, 0.0))), th, contrib)


def dump_field(field: FieldGrid, path: str | Path) -> None:
    """Write a row-major float64 dump with a 32-byte header.

    Header: magic ``WPFG``, uint32 version, uint32 rows, uint32 cols,
    float64 J, float64 T; little-endian.
    """
    rows, cols = field.values.shape
    header = struct.pack("<4sIIIdd", DUMP_MAGIC, DUMP_VERSION, rows, cols, field.cfg.J, field.cfg.T)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_field_dump(path: str | Path) -> tuple[np.ndarray, float, float]:
    """Read a dump written by :func:`dump_field`; returns ``(values, J, T)``."""
    raw = Path(path).read_bytes()
    magic, version, rows, cols, J, T = struct.unpack("<4sIIIdd", raw[:32])
    if magic != DUMP_MAGIC or version != DUMP_VERSION:
        raise ConfigError("not a field dump")
    vals = np.frombuffer(raw[32:], dtype="<f8").reshape(rows, cols)
    return vals.copy(), J, T

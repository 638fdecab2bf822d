"""Histogram estimates of occupation measures, local times and the
self-intersection functional ``Phi(u) = int_0^T int l_t(y)^2 dy dt``."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wavepolymer import kernels
from wavepolymer.errors import ConfigError, DomainError
from wavepolymer.field import FieldGrid, time_weights
from wavepolymer.spectrum import DomainConfig


@dataclass(frozen=True)
class BinRule:
    """How value bins are laid out for a whole field.

    With ``width=None`` the bins are ``n_bins`` equal cells spanning the
    field's global range padded by ``eps_rel * max(1, max|u|)``. With an
    explicit ``width`` the bins are aligned to integer multiples of it.
    """

    n_bins: int = 256
    width: float | None = None
    eps_rel: float = 1e-9

    def __post_init__(self):
        if self.n_bins < 1:
            raise ConfigError("n_bins must be >= 1")
        if self.width is not None and not (math.isfinite(self.width) and self.width > 0):
            raise ConfigError("bin width must be positive")

    def layout(self, lo: float, hi: float) -> tuple[float, float, int]:
        """``(origin, width, n_bins)`` covering ``[lo, hi]``."""
        if self.width is not None:
            origin = math.floor(lo / self.width) * self.width
            nb = int(math.floor((hi - origin) / self.width)) + 1
            return origin, self.width, nb
        eps = self.eps_rel * max(1.0, abs(lo), abs(hi))
        return lo, (hi - lo + eps) / self.n_bins, self.n_bins


@dataclass
class LocalTimeEstimate:
    """Occupation masses of one time slice on a regular value grid."""

    bin_width: float
    bin_origin: float
    masses: np.ndarray
    t_index: int = 0

    @property
    def density(self) -> np.ndarray:
        """Local-time estimate ``l_t(y)`` on each bin."""
        return self.masses / self.bin_width

    @property
    def bin_edges(self) -> np.ndarray:
        return self.bin_origin + self.bin_width * np.arange(self.masses.size + 1)

    def integral_sq(self) -> float:
        """``int l_t(y)^2 dy`` of the histogram density."""
        return float(np.sum(self.masses**2) / self.bin_width)


@dataclass
class SelfIntersection:
    phi: float
    per_slice: np.ndarray
    bin_width: float
    bin_origin: float
    n_bins: int
    degenerate_slices: list[int] = field(default_factory=list)


def occupation_histogram(
    values: np.ndarray,
    dx: float,
    bin_width: float,
    origin: float | None = None,
    t_index: int = 0,
) -> LocalTimeEstimate:
    """Histogram of the occupation measure of one slice.

    ``masses[k] = dx * #{j : origin + k w <= u_j < origin + (k+1) w}``.
    """
    if not (math.isfinite(bin_width) and bin_width > 0):
        raise DomainError("bin_width must be positive")
    u = np.asarray(values, dtype=float)
    if origin is None:
        origin = math.floor(u.min() / bin_width) * bin_width
    nb = int(math.floor((u.max() - origin) / bin_width)) + 1
    idx = np.clip(np.floor((u - origin) / bin_width).astype(np.int64), 0, nb - 1)
    counts = np.bincount(idx, minlength=nb)
    return LocalTimeEstimate(float(bin_width), float(origin), dx * counts.astype(float), t_index)


def slice_integrals(values: np.ndarray, dx: float, rule: BinRule) -> tuple[np.ndarray, float, float, int, np.ndarray]:
    """Per-row ``int l^2 dy`` on bins shared by all rows.

    Returns ``(per_slice, origin, width, n_bins, degenerate_mask)``.
    """
    vals = np.ascontiguousarray(values, dtype=np.float64)
    origin, width, nb = rule.layout(float(vals.min()), float(vals.max()))
    sumsq, maxcount = kernels.slice_square_counts(vals, origin, width, nb)
    per_slice = (dx * dx) * sumsq.astype(np.float64) / width
    return per_slice, origin, width, nb, maxcount == vals.shape[1]


def phi_values(values: np.ndarray, cfg: DomainConfig, rule: BinRule) -> tuple[float, SelfIntersection]:
    per_slice, origin, width, nb, degen = slice_integrals(values, cfg.dx, rule)
    phi = float(per_slice @ time_weights(cfg))
    si = SelfIntersection(phi, per_slice, width, origin, nb, [int(i) for i in np.flatnonzero(degen)])
    return phi, si


def self_intersection(field_: FieldGrid, bin_rule: BinRule | None = None) -> SelfIntersection:
    """Histogram plug-in for ``Phi``: ``sum_k m_k^2 / w`` per slice, trapezoid in time.

    A slice whose values all fall in one bin (a flat slice) contributes
    ``J^2 / w`` and is listed in ``degenerate_slices``.
    """
    return phi_values(field_.values, field_.cfg, bin_rule or BinRule())[1]


def heuristic_flat_phi(J: float, T: float, R: float) -> float:
    """Self-intersection of a profile spread evenly over a height range ``2R``: ``T J^2 / (2R)``."""
    if not R > 0:
        raise DomainError("R must be positive")
    return 2.0 * T * R * (J / (2.0 * R)) ** 2


def write_slices_csv(si: SelfIntersection, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_index", "phi_slice"])
        for i, v in enumerate(si.per_slice):
            w.writerow([i, repr(float(v))])

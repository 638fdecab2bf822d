"""Polymer measure ``dQ = exp(-beta Phi) dP / Z``: weights, importance
sampling estimates and a preconditioned Crank-Nicolson Metropolis chain."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from wavepolymer.dynamics import LatentNoise, PathGenerator
from wavepolymer.errors import ConfigError, DegenerateWeights, DomainError
from wavepolymer.field import FieldGrid, RadiusStat, radius, synthesize, theta_sq_values, time_weights
from wavepolymer.localtime import BinRule, phi_values, self_intersection


@dataclass
class GibbsSample:
    phi: float
    log_weight: float
    radius: RadiusStat
    replica_id: int = 0
    seed_info: tuple = ()

    @property
    def R(self) -> float:
        return self.radius.R


@dataclass
class GibbsEstimate:
    z_hat: float
    q_mean: float
    ess: float
    n_replicas: int
    q_se: float = math.nan
    log_z_hat: float = math.nan


class FunctionalKind(enum.Enum):
    RADIUS = "Radius"
    RADIUS_SQ = "RadiusSq"
    BELOW = "IndicatorRadiusBelow"
    ABOVE = "IndicatorRadiusAbove"


@dataclass(frozen=True)
class Functional:
    kind: FunctionalKind
    threshold: float | None = None

    def __call__(self, R) -> np.ndarray:
        R = np.asarray(R, dtype=float)
        if self.kind is FunctionalKind.RADIUS:
            return R
        if self.kind is FunctionalKind.RADIUS_SQ:
            return R * R
        if self.kind is FunctionalKind.BELOW:
            return (R < self.threshold).astype(float)
        return (R > self.threshold).astype(float)


Radius = Functional(FunctionalKind.RADIUS)
RadiusSq = Functional(FunctionalKind.RADIUS_SQ)


def IndicatorRadiusBelow(threshold: float) -> Functional:
    return Functional(FunctionalKind.BELOW, float(threshold))


def IndicatorRadiusAbove(threshold: float) -> Functional:
    return Functional(FunctionalKind.ABOVE, float(threshold))


def _check_beta(beta: float) -> None:
    if not (math.isfinite(beta) and beta >= 0):
        raise DomainError(f"beta must be nonnegative, got {beta}")


def weigh(
    field_: FieldGrid,
    beta: float,
    bin_rule: BinRule | None = None,
    replica_id: int = 0,
    seed_info: tuple = (),
) -> GibbsSample:
    """Self-intersection, radius and log-weight ``-beta Phi`` of one field."""
    _check_beta(beta)
    si = self_intersection(field_, bin_rule)
    return GibbsSample(si.phi, -beta * si.phi, radius(field_), replica_id, seed_info)


def is_estimate(log_w: np.ndarray, f: np.ndarray) -> GibbsEstimate:
    """Self-normalised importance estimate from log-weights and functional values."""
    log_w = np.asarray(log_w, dtype=float)
    f = np.asarray(f, dtype=float)
    n = log_w.size
    if n < 2:
        raise ConfigError("at least two samples are required")
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegenerateWeights("all importance weights are zero")
    w = np.exp(log_w - top)
    sw = w.sum()
    wn = w / sw
    q = float(wn @ f)
    ess = float(sw * sw / np.sum(w * w))
    se = float(np.sqrt(np.sum(wn * wn * (f - q) ** 2)))
    log_z = float(logsumexp(log_w) - math.log(n))
    z_hat = math.exp(log_z) if log_z < 709.0 else math.inf
    return GibbsEstimate(z_hat, q, min(max(ess, 1.0), float(n)), n, se, log_z)


def estimate_q(samples: Sequence[GibbsSample], functional: Functional = Radius) -> GibbsEstimate:
    """``E^Q[f(R)]`` by self-normalised importance sampling over prior samples."""
    log_w = np.array([s.log_weight for s in samples])
    R = np.array([s.R for s in samples])
    return is_estimate(log_w, functional(R))


def metropolis_accept(delta_phi: float, beta: float, u: float) -> bool:
    """Accept with probability ``min(1, exp(-beta * delta_phi))`` given a uniform ``u``."""
    log_a = -beta * delta_phi
    if log_a >= 0.0 or u <= 0.0:
        return True
    return math.log(u) < log_a


class FieldPrior:
    """Exact stationary prior on the mean-free modes, parametrised by latent normals.

    ``Phi`` and ``R`` do not depend on the spatial mean, so the zero mode is
    not simulated.
    """

    def __init__(self, generator: PathGenerator, bin_rule: BinRule | None = None):
        self.generator = generator
        if any(m.n == 0 for m in generator.modes):
            modes = [m for m in generator.modes if m.n != 0]
            generator = PathGenerator(generator.cfg, modes, generator.tilt, tilted_init=generator.tilted_init)
            self.generator = generator
        self.cfg = generator.cfg
        self.bin_rule = bin_rule or BinRule()
        self._basis_modes = generator.modes

    def latent(self, replicas) -> LatentNoise:
        return self.generator.white_noise(replicas)

    def draw(self, rng: np.random.Generator) -> LatentNoise:
        N, n_t = self.generator.n_modes, self.cfg.n_t
        return LatentNoise(rng.standard_normal((1, N, 2)), rng.standard_normal((1, N, n_t, 3)))

    def fields(self, z: LatentNoise) -> np.ndarray:
        ps = self.generator.from_white(z)
        return synthesize(ps.coeffs, self._basis_modes, self.cfg)

    def evaluate(self, z: LatentNoise) -> tuple[np.ndarray, np.ndarray, list]:
        """``(phi, R, radius stats)`` for every replica in ``z``."""
        vals = self.fields(z)
        w = time_weights(self.cfg)
        phis = np.empty(vals.shape[0])
        Rs = np.empty(vals.shape[0])
        stats = []
        for r in range(vals.shape[0]):
            phis[r] = phi_values(vals[r], self.cfg, self.bin_rule)[0]
            th = theta_sq_values(vals[r])
            Rs[r] = math.sqrt(max(float(th @ w) / self.cfg.T, 0.0))
            stats.append(RadiusStat(Rs[r], th))
        return phis, Rs, stats

    def samples(self, replicas, beta: float) -> list[GibbsSample]:
        _check_beta(beta)
        reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
        phis, _, stats = self.evaluate(self.latent(reps))
        seed = self.cfg.seed
        return [
            GibbsSample(float(p), -beta * float(p), st, int(r), (seed, int(r)))
            for p, st, r in zip(phis, stats, reps)
        ]


@dataclass
class ChainResult:
    samples: list[GibbsSample]
    acceptance_rate: float
    rho: float
    n_burn: int
    accepted: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, bool))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def values(self, functional: Functional = Radius) -> np.ndarray:
        return functional(np.array([s.R for s in self.samples]))

    def mean_se(self, functional: Functional = Radius, n_batches: int = 20) -> tuple[float, float]:
        """Chain mean and its batch-means standard error."""
        return batch_means(self.values(functional), n_batches)


def batch_means(x: np.ndarray, n_batches: int = 20) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    n = x.size
    b = min(n_batches, n)
    if b < 2:
        return float(x.mean()), math.nan
    size = n // b
    means = x[: size * b].reshape(b, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(b))


def pcn_chain(
    prior_sampler: FieldPrior,
    beta: float,
    rho: float,
    n_steps: int,
    rng: np.random.Generator,
    n_burn: int = 0,
    adapt: bool = False,
    target_accept: float = 0.25,
    block: int | None = None,
    init: LatentNoise | None = None,
) -> ChainResult:
    """Metropolis chain for ``Q`` with pCN proposals in latent space.

    The proposal ``z' = sqrt(1 - rho^2) z + rho xi`` preserves the Gaussian
    prior, so the acceptance probability is ``min(1, exp(-beta dPhi))``.
    With ``block`` set, only a random window of ``block`` time steps of the
    innovations is refreshed per proposal. During burn-in ``rho`` may be
    adapted towards ``target_accept``; it is frozen afterwards.
    """
    _check_beta(beta)
    if not (0.0 < rho <= 1.0):
        raise ConfigError(f"rho must lie in (0, 1], got {rho}")
    if n_steps < 1:
        raise ConfigError("n_steps must be positive")
    n_t = prior_sampler.cfg.n_t
    z = prior_sampler.draw(rng) if init is None else init
    phi, R, st = prior_sampler.evaluate(z)
    cur_phi, cur_stat = float(phi[0]), st[0]
    samples: list[GibbsSample] = []
    accepted = np.zeros(n_burn + n_steps, dtype=bool)
    log_rho = math.log(rho)
    for it in range(n_burn + n_steps):
        xi = prior_sampler.draw(rng)
        window = None
        if block is not None and block < n_t:
            lo = int(rng.integers(0, n_t - block + 1))
            window = (lo, lo + block)
        r = math.exp(log_rho) if adapt else rho
        prop = z.mix(xi, min(r, 1.0), window)
        p_phi, _, p_st = prior_sampler.evaluate(prop)
        u = rng.random()
        if metropolis_accept(float(p_phi[0]) - cur_phi, beta, u):
            z, cur_phi, cur_stat = prop, float(p_phi[0]), p_st[0]
            accepted[it] = True
        if adapt and it < n_burn:
            log_rho += (float(accepted[it]) - target_accept) / math.sqrt(it + 1.0)
            log_rho = min(log_rho, 0.0)
        if it >= n_burn:
            samples.append(GibbsSample(cur_phi, -beta * cur_phi, cur_stat, it - n_burn))
    final_rho = min(math.exp(log_rho), 1.0) if adapt else rho
    return ChainResult(samples, float(accepted[n_burn:].mean()), final_rho, n_burn, accepted)


def log_weights(phis: np.ndarray, beta: float) -> np.ndarray:
    _check_beta(beta)
    return -beta * np.asarray(phis, dtype=float)


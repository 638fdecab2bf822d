"""Change of measure for a constant force ``a phi_1`` added to the noise.

In mode space the force acts only on mode 1, where it shifts the driving
Brownian motion by ``theta t`` with ``theta = a / gamma_1``. On a path with
recorded mode-1 noise ``W_1`` the Girsanov log-density over ``[0, T]`` is
``theta W_1(T) - theta^2 T / 2``. For stationary paths the initial state is
tilted as well; the exact path density then adds the Gaussian log-ratio of
the two stationary laws of ``(a_1, v_1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from wavepolymer.dynamics import PathGenerator, PathSet, TiltParams, stationary_variance
from wavepolymer.errors import ConfigError
from wavepolymer.field import radius_sq_values, synthesize
from wavepolymer.gibbs import FieldPrior, is_estimate
from wavepolymer.localtime import BinRule
from wavepolymer.spectrum import DomainConfig, ModeSpec, NoiseSpectrum, noise_covariance_kernel

_GL_ORDER = 200


@dataclass
class GirsanovDensity:
    a: float
    log_density: np.ndarray
    log_zeta: float


def _mode1(modes: Sequence[ModeSpec]) -> ModeSpec:
    for m in modes:
        if m.n == 1:
            return m
    raise ConfigError("mode 1 is not part of the truncation")


def phi1_f_phi1(spec: NoiseSpectrum, modes: Sequence[ModeSpec], order: int = _GL_ORDER) -> float:
    """``int int phi_1(x) f(x, y) phi_1(y) dx dy`` by tensor Gauss-Legendre quadrature."""
    m1 = _mode1(modes)
    J = m1.J
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x = 0.5 * J * (nodes + 1.0)
    w = 0.5 * J * weights
    p = m1.c_n * np.cos(np.pi * x / J)
    K = noise_covariance_kernel(spec, modes, x[:, None], x[None, :])
    return float((w * p) @ K @ (w * p))


def sigma_x_sq(T: float, spec: NoiseSpectrum, modes: Sequence[ModeSpec], method: str = "mode") -> float:
    """Variance of ``F(T, phi_1) = int_0^T int phi_1(x) F(ds, dx)``.

    ``method="mode"`` uses orthonormality (``T gamma_1^2``), ``"quad"`` the
    double quadrature of ``phi_1 f phi_1``.
    """
    if method == "mode":
        return T * spec.gammas[1] ** 2
    if method == "quad":
        return T * phi1_f_phi1(spec, modes)
    raise ConfigError(f"unknown method {method!r}")


def theta(a: float, gamma_1: float) -> float:
    if a == 0.0:
        return 0.0
    if gamma_1 == 0.0:
        raise ConfigError("mode 1 carries no noise; the tilt is singular")
    return a / gamma_1


def log_density(noise_record, a: float, T: float, modes: Sequence[ModeSpec], spec: NoiseSpectrum | None = None):
    """Girsanov log-density of the tilted law on ``[0, T]`` given the mode-1 noise.

    ``noise_record`` is ``W_1`` on the time grid (last axis) or its terminal
    value. Returns ``theta W_1(T) - theta^2 T / 2``.
    """
    g1 = spec.gammas[1] if spec is not None else _mode1(modes).gamma_n
    th = theta(a, g1)
    w = np.asarray(noise_record, dtype=float)
    wT = w[..., -1] if w.ndim >= 1 else w
    out = th * wT - 0.5 * th * th * T
    return float(out) if np.ndim(out) == 0 else out


def initial_log_ratio(state, a: float, mode1: ModeSpec):
    """Log-ratio of the tilted to untilted stationary densities of ``(a_1, v_1)``."""
    if a == 0.0:
        s = np.asarray(state, dtype=float)
        return 0.0 if s.ndim == 1 else np.zeros(s.shape[:-1])
    var_a, _, _ = stationary_variance(mode1)
    if var_a == 0.0:
        raise ConfigError("mode 1 carries no noise; the tilt is singular")
    m = a / mode1.k_n**2
    x = np.asarray(state, dtype=float)[..., 0]
    out = m * x / var_a - 0.5 * m * m / var_a
    return float(out) if np.ndim(out) == 0 else out


def initial_kl(a: float, mode1: ModeSpec) -> float:
    """Relative entropy of the tilted stationary state with respect to the untilted one."""
    if a == 0.0:
        return 0.0
    var_a, _, _ = stationary_variance(mode1)
    m = a / mode1.k_n**2
    return 0.5 * m * m / var_a


def path_log_density(paths: PathSet, a: float, T: float, modes: Sequence[ModeSpec]) -> np.ndarray:
    """Exact log-density of stationary tilted paths w.r.t. stationary untilted ones."""
    j = [m.n for m in paths.modes].index(1)
    m1 = paths.modes[j]
    return initial_log_ratio(paths.states[:, j, 0, :], a, m1) + log_density(paths.noise[:, j, :], a, T, [m1])


def log_zeta(a: float, T: float, spec: NoiseSpectrum, modes: Sequence[ModeSpec]) -> float:
    """``log zeta(T, a) = E_tilted[log dP_tilted/dP]`` of the force on ``[0, T]``.

    Equals ``a^2 T / (2 q)`` with ``q = int int phi_1 f phi_1`` evaluated by
    quadrature; ``q = gamma_1^2`` under orthonormality.
    """
    if a == 0.0:
        return 0.0
    q = phi1_f_phi1(spec, modes)
    # quadrature leaves round-off of the other modes when gamma_1 vanishes
    if spec.gammas[1] == 0.0 or q <= 0.0:
        raise ConfigError("mode 1 carries no noise; the tilt is singular")
    return 0.5 * a * a * T / q


@dataclass
class ConsistencyReport:
    a: float
    tilted_mean: float
    tilted_se: float
    reweighted_mean: float
    reweighted_se: float
    n_replicas: int

    @property
    def difference(self) -> float:
        return self.tilted_mean - self.reweighted_mean

    @property
    def combined_se(self) -> float:
        return math.hypot(self.tilted_se, self.reweighted_se)

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= 4.0 * self.combined_se or self.difference == 0.0


PathFunctional = Callable[[PathSet], np.ndarray]


def mode1_time_average(paths: PathSet) -> np.ndarray:
    """Trapezoid time average of ``a_1``."""
    j = [m.n for m in paths.modes].index(1)
    a1 = paths.states[:, j, :, 0]
    n_t = a1.shape[-1] - 1
    w = np.full(n_t + 1, 1.0 / n_t)
    w[0] = w[-1] = 0.5 / n_t
    return a1 @ w


def radius_functional(cfg: DomainConfig) -> PathFunctional:
    def g(paths: PathSet) -> np.ndarray:
        vals = synthesize(paths.coeffs, paths.modes, cfg)
        return np.sqrt(np.maximum(radius_sq_values(vals, cfg), 0.0))

    return g


def tilt_consistency(
    functional: PathFunctional,
    a: float,
    n_replicas: int,
    generator: PathGenerator,
    tilted_offset: int = 1 << 32,
) -> ConsistencyReport:
    """Compare ``E_tilted[g]`` from tilted simulation with ``E[g dP_tilted/dP]`` from untilted simulation.

    Both runs use the generator's seed; the tilted run uses replica ids
    shifted by ``tilted_offset`` so the two samples are independent.
    """
    base = generator.with_tilt(TiltParams(0.0))
    tilted = generator.with_tilt(TiltParams(a), tilted_init=True)
    reps = np.arange(n_replicas)
    p_paths = base.batch(reps)
    if a == 0.0:
        g = functional(p_paths)
        m, se = float(g.mean()), float(g.std(ddof=1) / math.sqrt(n_replicas))
        return ConsistencyReport(a, m, se, m, se, n_replicas)
    t_paths = tilted.batch(reps + tilted_offset)
    gt = functional(t_paths)
    gp = functional(p_paths)
    w = np.exp(path_log_density(p_paths, a, generator.cfg.T, generator.modes))
    prod = gp * w
    return ConsistencyReport(
        a,
        float(gt.mean()),
        float(gt.std(ddof=1) / math.sqrt(n_replicas)),
        float(prod.mean()),
        float(prod.std(ddof=1) / math.sqrt(n_replicas)),
        n_replicas,
    )


@dataclass
class MartingaleReport:
    a: float
    mean: float
    se: float

    @property
    def passed(self) -> bool:
        return abs(self.mean - 1.0) <= 4.0 * self.se or self.mean == 1.0


def martingale_check(a: float, n_replicas: int, generator: PathGenerator, spec: NoiseSpectrum | None = None) -> MartingaleReport:
    """Mean of ``exp(log_density)`` over untilted paths; should be 1."""
    base = generator.with_tilt(TiltParams(0.0))
    ps = base.batch(np.arange(n_replicas))
    j = [m.n for m in ps.modes].index(1)
    e = np.exp(log_density(ps.noise[:, j, :], a, generator.cfg.T, ps.modes, spec))
    return MartingaleReport(a, float(e.mean()), float(e.std(ddof=1) / math.sqrt(n_replicas)))


def entropy_identity(a: float, n_replicas: int, generator: PathGenerator, spec: NoiseSpectrum) -> tuple[float, float, float]:
    """MC estimate of ``E_tilted[log dP_tilted/dP]`` for the noise part and its SE, with ``log_zeta``."""
    tilted = generator.with_tilt(TiltParams(a), tilted_init=True)
    ps = tilted.batch(np.arange(n_replicas))
    j = [m.n for m in ps.modes].index(1)
    ld = np.asarray(log_density(ps.noise[:, j, :], a, generator.cfg.T, ps.modes, spec))
    return float(ld.mean()), float(ld.std(ddof=1) / math.sqrt(n_replicas)), log_zeta(a, generator.cfg.T, spec, generator.modes)


@dataclass
class ZTReport:
    beta: float
    a: float
    T: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    rhs_noise_only: float
    log_zeta: float
    init_kl: float
    mean_phi_tilted: float
    n_replicas: int
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def margin_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def holds(self) -> bool:
        return self.margin >= -4.0 * self.margin_se


def zT_lower_bound_report(
    beta: float,
    a: float,
    cfg: DomainConfig,
    spec: NoiseSpectrum,
    modes: Sequence[ModeSpec],
    n_replicas: int = 2000,
    bin_rule: BinRule | None = None,
) -> ZTReport:
    """Both sides of ``(1/T) log Z_T >= -beta E_tilted[Phi]/T - KL/T``.

    The left side is ``(1/T) log z_hat`` from untilted replicas. On the
    right, ``KL = log_zeta + init_kl`` is the exact relative entropy of the
    stationary tilted path law, so the inequality is Jensen's inequality
    applied to the estimator-defined ``Phi``. ``rhs_noise_only`` omits the
    initial-state term, which is bounded in ``T``.
    """
    if beta < 0:
        raise ConfigError("beta must be nonnegative")
    rule = bin_rule or BinRule()
    mm = [m for m in spec.apply(modes) if m.n != 0]
    gen = PathGenerator(cfg, mm)
    prior = FieldPrior(gen, rule)
    reps = np.arange(n_replicas)
    phis, _, _ = prior.evaluate(prior.latent(reps))
    if beta == 0.0:
        lhs, lhs_se = 0.0, 0.0
    else:
        est = is_estimate(-beta * phis, np.zeros_like(phis))
        w = np.exp(-beta * phis - est.log_z_hat)
        lhs = est.log_z_hat / cfg.T
        # delta method for the log of a sample mean
        lhs_se = float(w.std(ddof=1) / math.sqrt(n_replicas)) / cfg.T
    tgen = gen.with_tilt(TiltParams(a), tilted_init=True)
    tprior = FieldPrior(tgen, rule)
    tphis, _, _ = tprior.evaluate(tprior.latent(reps + (1 << 32)))
    lz = log_zeta(a, cfg.T, spec, mm)
    ikl = initial_kl(a, _mode1(mm))
    mphi = float(tphis.mean())
    se_phi = float(tphis.std(ddof=1) / math.sqrt(n_replicas))
    rhs = -beta * mphi / cfg.T - (lz + ikl) / cfg.T
    return ZTReport(
        beta, a, cfg.T, float(lhs), float(lhs_se), float(rhs), beta * se_phi / cfg.T,
        float(-beta * mphi / cfg.T - lz / cfg.T), lz, ikl, mphi, n_replicas,
    )

"""Radius scaling study under the polymer measure and the exponent heuristic."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import stats

from wavepolymer.dynamics import PathGenerator, stream_rng
from wavepolymer.errors import ConfigError, DegenerateWeights, NoSolution
from wavepolymer.gibbs import FieldPrior, is_estimate, pcn_chain
from wavepolymer.localtime import BinRule
from wavepolymer.spectrum import DomainConfig, attach_spectrum, build_eigenbasis


@dataclass(frozen=True)
class BetaRule:
    """``beta(J)``: ``"constant"`` gives ``beta0``; ``"theorem"`` gives ``max(beta0, J^(25/3))``."""

    kind: str = "constant"
    beta0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "theorem"):
            raise ConfigError(f"unknown beta rule {self.kind!r}")
        if not self.beta0 >= 0:
            raise ConfigError("beta0 must be nonnegative")

    def __call__(self, J: float) -> float:
        if self.kind == "constant":
            return self.beta0
        return max(self.beta0, J ** (25.0 / 3.0))


@dataclass(frozen=True)
class SweepTemplate:
    """Per-point settings shared by every ``J`` of a sweep."""

    T: float = 8.0
    n_modes: int = 16
    n_x: int = 64
    n_t: int = 160
    c: float = 1.0
    alpha: float = 2.0
    seed: int = 0
    n_bins: int = 256
    ess_floor: float = 50.0
    pcn_steps: int = 12000
    pcn_burn: int = 2000
    pcn_rho: float = 0.3
    pcn_block: int | None = None
    envelope: tuple[float, float] = (0.05, 1.0)
    chunk: int = 64


@dataclass
class SweepPoint:
    J: float
    beta: float
    T: float
    q_radius_mean: float
    q_radius_se: float
    ess: float
    sampler: str
    prior_radius_mean: float = math.nan
    prior_radius_se: float = math.nan
    envelope_prob: float = math.nan
    acceptance_rate: float = math.nan
    flagged: bool = False
    n_replicas: int = 0


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    ci_low: float
    ci_high: float
    residuals: list[float] = field(default_factory=list)
    slope_se: float = math.nan


def _point_cfg(J: float, tpl: SweepTemplate) -> DomainConfig:
    return DomainConfig(J=float(J), T=tpl.T, n_modes=tpl.n_modes, n_x=tpl.n_x, n_t=tpl.n_t, seed=tpl.seed)


def make_prior(cfg: DomainConfig, c: float, alpha: float, bin_rule: BinRule) -> FieldPrior:
    basis = build_eigenbasis(cfg)
    modes = attach_spectrum(basis, c, alpha).apply(basis)
    return FieldPrior(PathGenerator(cfg, [m for m in modes if m.n != 0]), bin_rule)


def evaluate_replicas(prior: FieldPrior, n_replicas: int, chunk: int = 64, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``(phi, R)`` of replicas ``0 .. n_replicas-1``; independent of ``threads``."""
    starts = list(range(0, n_replicas, chunk))

    def job(s: int):
        reps = np.arange(s, min(s + chunk, n_replicas))
        phi, R, _ = prior.evaluate(prior.latent(reps))
        return phi, R

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _sweep_point(idx: int, J: float, beta: float, tpl: SweepTemplate, n_replicas: int, threads: int) -> SweepPoint:
    cfg = _point_cfg(J, tpl)
    prior = make_prior(cfg, tpl.c, tpl.alpha, BinRule(tpl.n_bins))
    phi, R = evaluate_replicas(prior, n_replicas, tpl.chunk, threads)
    prior_mean = float(R.mean())
    prior_se = float(R.std(ddof=1) / math.sqrt(R.size))
    lo, hi = tpl.envelope[0] * J ** (5.0 / 3.0), tpl.envelope[1] * J ** (5.0 / 3.0)
    inside = ((R >= lo) & (R <= hi)).astype(float)
    est = None
    try:
        est = is_estimate(-beta * phi, R)
    except DegenerateWeights:
        est = None
    if est is not None and est.ess >= tpl.ess_floor:
        env = float(is_estimate(-beta * phi, inside).q_mean)
        return SweepPoint(J, beta, tpl.T, est.q_mean, est.q_se, est.ess, "IS", prior_mean, prior_se, env, math.nan, False, n_replicas)
    rng = stream_rng(tpl.seed, 1 << 40, idx)
    chain = pcn_chain(prior, beta, tpl.pcn_rho, tpl.pcn_steps, rng, n_burn=tpl.pcn_burn, adapt=True, block=tpl.pcn_block)
    if chain.acceptance_rate == 0.0:
        raise DegenerateWeights(f"importance sampling and pCN both failed at J={J}")
    vals = chain.values()
    mean, se = chain.mean_se()
    var = float(vals.var(ddof=1))
    ess = var / (se * se) if se > 0 else float(len(vals))
    env = float(np.mean((vals >= lo) & (vals <= hi)))
    return SweepPoint(
        J, beta, tpl.T, mean, se, min(ess, float(len(vals))), "pCN", prior_mean, prior_se, env,
        chain.acceptance_rate, ess < tpl.ess_floor, n_replicas,
    )


def run_sweep(
    J_values: Sequence[float],
    beta_rule: BetaRule | Callable[[float], float],
    cfg_template: SweepTemplate,
    n_replicas: int,
    threads: int = 1,
) -> list[SweepPoint]:
    """``E^Q[R]`` at every ``J``.

    Importance sampling from exact prior replicas is used when its ESS
    reaches ``ess_floor``; otherwise a pCN chain is run.
    """
    Js = [float(j) for j in J_values]
    if len(Js) < 4:
        raise ConfigError("a sweep needs at least four J values")
    if any(b <= a for a, b in zip(Js, Js[1:])):
        raise ConfigError("J values must be strictly increasing")
    if n_replicas < 2:
        raise ConfigError("n_replicas must be at least 2")
    jobs = [(i, J, float(beta_rule(J))) for i, J in enumerate(Js)]
    if threads > 1:
        inner = max(1, threads // len(jobs))
        with ThreadPoolExecutor(min(threads, len(jobs))) as ex:
            return list(ex.map(lambda a: _sweep_point(*a, cfg_template, n_replicas, inner), jobs))
    return [_sweep_point(*a, cfg_template, n_replicas, 1) for a in jobs]


def fit_exponent(points: Sequence[SweepPoint] | tuple[Sequence[float], Sequence[float]], level: float = 0.95) -> ScalingFit:
    """OLS of ``log q_radius_mean`` on ``log J`` with a t-based CI for the slope."""
    if isinstance(points, tuple):
        J, y = (np.asarray(v, dtype=float) for v in points)
    else:
        J = np.array([p.J for p in points], dtype=float)
        y = np.array([p.q_radius_mean for p in points], dtype=float)
    if J.size < 4:
        raise ConfigError("fit needs at least four points")
    if np.any(y <= 0) or np.any(J <= 0):
        raise ConfigError("J and radius means must be positive")
    X, Y = np.log(J), np.log(y)
    A = np.column_stack([X, np.ones_like(X)])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    res = Y - A @ coef
    dof = X.size - 2
    sxx = float(np.sum((X - X.mean()) ** 2))
    s2 = float(res @ res) / dof
    se = math.sqrt(s2 / sxx)
    sst = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(res @ res) / sst if sst > 0 else 1.0
    q = float(stats.t.ppf(0.5 + level / 2.0, dof))
    return ScalingFit(slope, intercept, r2, slope - q * se, slope + q * se, [float(r) for r in res], se)


def heuristic_exponent(p1, q1, p2, q2) -> Fraction:
    """Exponent ``e`` with ``R = J^e`` balancing ``J^p1 R^q1 = J^p2 R^q2``."""
    p1, q1, p2, q2 = (Fraction(v) for v in (p1, q1, p2, q2))
    if q1 == q2:
        raise NoSolution("the two forms have the same power of R")
    return (p1 - p2) / (q2 - q1)


def neumann_minimizer(R: float, J: float) -> tuple[Polynomial, Polynomial]:
    """C^1 piecewise quadratic from ``u(0) = R`` to ``u(J) = -R`` with ``u'(0) = u'(J) = 0``.

    ``u = R - a x^2`` on ``[0, J/2]`` and ``a (J - x)^2 - R`` on ``[J/2, J]``
    with ``a = 4R/J^2``.
    """
    if not (R > 0 and J > 0):
        raise ConfigError("R and J must be positive")
    a = 4.0 * R / J**2
    left = Polynomial([R, 0.0, -a])
    right = Polynomial([a * J * J - R, -2.0 * a * J, a])
    return left, right


def neumann_minimizer_check(R: float, J: float) -> float:
    """Bending energy ``(1/2) int_0^J u''(x)^2 dx`` of :func:`neumann_minimizer`, integrated exactly."""
    left, right = neumann_minimizer(R, J)
    total = 0.0
    for p, (lo, hi) in ((left, (0.0, J / 2.0)), (right, (J / 2.0, J))):
        F = (p.deriv(2) ** 2).integ()
        total += F(hi) - F(lo)
    return 0.5 * total

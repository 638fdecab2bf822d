"""Numerical checks of the analytic inequalities behind the scaling argument.

Every check compares two independently computed quantities: quadrature
against closed forms, pathwise simulation against algebraic bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

from wavepolymer.dynamics import stationary_variance
from wavepolymer.errors import DomainError
from wavepolymer.field import FieldGrid, radius, time_weights
from wavepolymer.localtime import BinRule, self_intersection
from wavepolymer.spectrum import ModeSpec, Regime, make_mode


@dataclass
class LemmaReport:
    """Outcome of one check; ``passed`` is ``worst_margin >= -tolerance``."""

    lemma_id: str
    n_cases: int
    worst_margin: float
    tolerance: float = 0.0
    details: dict = field(default_factory=dict)
    details_path: str | None = None

    @property
    def passed(self) -> bool:
        return bool(self.worst_margin >= -self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return _jsonable(d)

    def write(self, path: str | Path) -> None:
        self.details_path = str(path)
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


# ---------------------------------------------------------------- mode kernels


def position_kernel(mode: ModeSpec):
    """Response ``K(u)`` of ``a_n`` to a unit impulse on the velocity ``u`` time units earlier."""
    if mode.regime is Regime.CRITICAL:
        return lambda u: u * np.exp(-u / 2.0)
    if mode.regime is Regime.UNDERDAMPED:
        w = mode.omega_n
        return lambda u: np.exp(-u / 2.0) * np.sin(w * u) / w
    w = mode.omega_n
    return lambda u: (np.exp((-1.0 + w) * u / 2.0) - np.exp((-1.0 - w) * u / 2.0)) / w


def _quad_inf(f, scale: float) -> float:
    # split at a few decay lengths so quad sees the bulk first
    head, _ = integrate.quad(f, 0.0, 10.0 * scale, epsabs=1e-13, epsrel=1e-12, limit=500)
    tail, _ = integrate.quad(f, 10.0 * scale, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)
    return head + tail


def _decay_scale(mode: ModeSpec) -> float:
    if mode.regime is Regime.OVERDAMPED:
        return 2.0 / (1.0 - mode.omega_n)
    return 2.0


def variance_oracle(mode: ModeSpec) -> float:
    """``gamma_n^2 int_0^inf K(u)^2 du`` by adaptive quadrature."""
    if mode.n == 0:
        raise DomainError("the zero mode has no stationary variance")
    K = position_kernel(mode)
    return mode.gamma_n**2 * _quad_inf(lambda u: K(u) ** 2, _decay_scale(mode))


def drift_oracle(mode: ModeSpec, a: float) -> float:
    """Long-run mean ``a int_0^inf K(u) du`` of ``a_n`` under a constant force ``a``."""
    K = position_kernel(mode)
    return a * _quad_inf(K, _decay_scale(mode))


# ---------------------------------------------------------- variance lower bound


def pair_variance(x1: np.ndarray, x2: np.ndarray, J: float, gammas: np.ndarray) -> np.ndarray:
    """``sum_{n>=1} E[a_n^2] (phi_n(x1) - phi_n(x2))^2`` for ``gammas[n-1] = gamma_n``."""
    n = np.arange(1, gammas.size + 1)
    var = np.array([stationary_variance(make_mode(int(k), J, float(g)))[0] for k, g in zip(n, gammas)])
    c = math.sqrt(2.0 / J)
    w = np.pi * n / J
    diff = c * (np.cos(np.outer(x1, w)) - np.cos(np.outer(x2, w)))
    return (diff * diff) @ var


def _admissible_pairs(rng: np.random.Generator, J: float, delta0: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform pairs in ``[0, J]^2`` with ``0 < |x1 - x2| <= delta0 J`` by rejection."""
    xs1, xs2 = [], []
    got = 0
    while got < n:
        x1 = rng.uniform(0.0, J, 2 * n)
        x2 = x1 + rng.uniform(-delta0 * J, delta0 * J, 2 * n)
        ok = (x2 >= 0.0) & (x2 <= J) & (x1 != x2)
        xs1.append(x1[ok])
        xs2.append(x2[ok])
        got += int(ok.sum())
    return np.concatenate(xs1)[:n], np.concatenate(xs2)[:n]


def check_variance_lower_bound(
    J_grid: Iterable[float],
    n_pairs: int = 10_000,
    delta0: float = 0.5,
    n_modes: int = 256,
    gamma=lambda n: 1.0 / n,
    seed: int = 0,
    max_rel_change: float = 0.01,
) -> LemmaReport:
    """Scan ``sigma^2(x1, x2) J^2 / |x1 - x2|`` over random admissible pairs.

    For each ``J`` the minimum ratio must be strictly positive and change by
    less than ``max_rel_change`` when the truncation doubles.
    """
    details = {}
    margins = []
    for idx, J in enumerate(J_grid):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(idx,))))
        x1, x2 = _admissible_pairs(rng, J, delta0, n_pairs)
        sep = np.abs(x1 - x2)
        out = {}
        for N in (n_modes, 2 * n_modes):
            g = np.array([gamma(k) for k in range(1, N)])
            ratio = pair_variance(x1, x2, J, g) * J * J / sep
            out[N] = ratio
        r1, r2 = out[n_modes], out[2 * n_modes]
        m1, m2 = float(r1.min()), float(r2.min())
        change = abs(m2 - m1) / m1 if m1 > 0 else math.inf
        i = int(np.argmin(r1))
        details[f"J={J}"] = {
            "min_ratio": m1,
            "min_ratio_refined": m2,
            "rel_change": change,
            "argmin_pair": [float(x1[i]), float(x2[i])],
            "min_separation": float(sep.min()),
            "n_pairs": int(sep.size),
        }
        margins.append(min(m1, max_rel_change - change))
    return LemmaReport("variance_lower_bound", len(margins), float(min(margins)), -np.finfo(float).tiny, details)


# ------------------------------------------------------- Brownian decomposition


def _brownian_on(s_points: np.ndarray, n_unit: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Brownian motion sampled on ``[0, 1]`` (``n_unit`` steps) and at ``s_points >= 1``.

    Returns the supremum of ``|B|`` over the unit grid and ``B(s_points)``.
    """
    u = np.linspace(0.0, 1.0, n_unit + 1)
    inc = rng.standard_normal(n_unit) * np.sqrt(np.diff(u))
    B_unit = np.concatenate([[0.0], np.cumsum(inc)])
    ds = np.diff(s_points)
    inc2 = rng.standard_normal(ds.size) * np.sqrt(ds)
    B_s = B_unit[-1] + np.concatenate([[0.0], np.cumsum(inc2)])
    return float(np.abs(B_unit).max()), B_s


def _trap(y: np.ndarray, dt: float) -> float:
    return float(dt * (y.sum() - 0.5 * (y[0] + y[-1])))


def decomposition_sides(
    sup_unit: float, B_s: np.ndarray, T: int, steps_per_unit: int, a: float, b: float
) -> tuple[float, float, float]:
    """``(LHS, RHS, RHS_complete)`` on one discretised path.

    ``B_s[i]`` is ``B(exp(b t_i))`` on ``t_i = i / steps_per_unit``.
    ``RHS`` is the decomposition as stated (last window omitted);
    ``RHS_complete`` also includes ``2 int_{T-1}^T e^{-at} Bt^2_{e^{b(T-1)}, e^{bt}} dt``.
    """
    dt = 1.0 / steps_per_unit
    t = np.arange(T * steps_per_unit + 1) * dt
    e = np.exp(-a * t)
    run = np.maximum(np.maximum.accumulate(np.abs(B_s)), sup_unit)
    lhs = _trap(e * run**2, dt)
    idx = lambda k: k * steps_per_unit
    seg = lambda k: slice(idx(k), idx(k + 1) + 1)
    first = _trap(e[seg(0)] * run[seg(0)] ** 2, dt)
    Ie = [_trap(e[seg(k)], dt) for k in range(T)]
    Bb = run[idx(1)]
    rhs = first + Bb**2 * sum(18.0**k * Ie[k] for k in range(1, T))

    def window_sup(m: int) -> np.ndarray:
        s = seg(m)
        return np.maximum.accumulate(np.abs(B_s[s] - B_s[idx(m)]))

    for m in range(1, T - 1):
        ws = window_sup(m)
        rhs += ws[-1] ** 2 * sum(2.0 * 18.0 ** (k - m) * Ie[k] for k in range(m + 1, T))
        rhs += 2.0 * _trap(e[seg(m)] * ws**2, dt)
    wl = window_sup(T - 1)
    complete = rhs + 2.0 * _trap(e[seg(T - 1)] * wl**2, dt)
    return lhs, rhs, complete


def check_brownian_decomposition(
    T_values: Sequence[int],
    n_paths: int,
    a: float,
    b: float,
    rng: np.random.Generator,
    dt: float = 1e-4,
    n_unit: int = 10_000,
    refine: bool = True,
) -> LemmaReport:
    """Pathwise ``LHS <= RHS`` for the dyadic-window bound of ``int_0^T e^{-at} Bt^2_{e^{bt}} dt``.

    Each path is simulated on a grid of step ``dt/2`` (when ``refine``) and
    evaluated both there and on the every-other-point subgrid of step
    ``dt``.
    """
    steps = int(round(1.0 / dt))
    if abs(steps * dt - 1.0) > 1e-9:
        raise DomainError("1/dt must be an integer")
    details = {}
    worst = math.inf
    n_cases = 0
    for T in T_values:
        if int(T) != T or T <= 2:
            raise DomainError("T must be an integer > 2")
        T = int(T)
        fine = 2 * steps if refine else steps
        t = np.arange(T * fine + 1) / fine
        s_points = np.exp(b * t)
        viol = viol_fine = 0
        rel = []
        rel_fine = []
        stated_vs_complete = 0.0
        for _ in range(n_paths):
            sup_unit, B_s = _brownian_on(s_points, n_unit, rng)
            coarse = B_s[:: fine // steps]
            lhs, rhs, comp = decomposition_sides(sup_unit, coarse, T, steps, a, b)
            viol += lhs > rhs
            rel.append((rhs - lhs) / rhs if rhs > 0 else 0.0)
            stated_vs_complete = max(stated_vs_complete, (comp - rhs) / comp if comp > 0 else 0.0)
            if refine:
                lf, rf, _ = decomposition_sides(sup_unit, B_s, T, fine, a, b)
                viol_fine += lf > rf
                rel_fine.append((rf - lf) / rf if rf > 0 else 0.0)
            n_cases += 1
        worst = min(worst, min(rel), min(rel_fine) if rel_fine else math.inf)
        details[f"T={T}"] = {
            "violations_dt": int(viol),
            "violations_dt_half": int(viol_fine) if refine else None,
            "min_rel_margin_dt": float(min(rel)),
            "min_rel_margin_dt_half": float(min(rel_fine)) if refine else None,
            "max_share_of_omitted_last_window": float(stated_vs_complete),
        }
    details.update({"a": a, "b": b, "dt": dt, "n_paths": n_paths})
    return LemmaReport("brownian_decomposition", n_cases, float(worst), 0.0, details)


# ------------------------------------------------------------ Gaussian tail integral


def tail_integral(sigma: float, gamma: float) -> float:
    """``int_1^inf P(X >= sqrt(log x / gamma)) dx`` for ``X ~ N(0, sigma^2)``.

    After ``y = log x`` the integrand is ``exp(y + log Phi_c(sqrt(y/gamma)/sigma))``,
    integrated adaptively in log space.
    """
    if not 1.0 - 2.0 * gamma * sigma**2 > 0:
        raise DomainError("need 1 - 2 gamma sigma^2 > 0")
    f = lambda y: math.exp(y + float(log_ndtr(-math.sqrt(y / gamma) / sigma)))
    scale = 2.0 * gamma * sigma**2 / (1.0 - 2.0 * gamma * sigma**2)
    head, _ = integrate.quad(f, 0.0, scale, epsabs=1e-14, epsrel=1e-12, limit=400)
    tail, _ = integrate.quad(f, scale, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return head + tail


def tail_integral_closed_form(sigma: float, gamma: float) -> float:
    """Exact value ``(1/sqrt(1 - 2 gamma sigma^2) - 1) / 2`` (integration by parts)."""
    return 0.5 * (1.0 / math.sqrt(1.0 - 2.0 * gamma * sigma**2) - 1.0)


def tail_bound(sigma: float, gamma: float) -> float:
    return sigma**2 * gamma / math.sqrt(1.0 - 2.0 * gamma * sigma**2)


def check_tail_integral_bound(sigma_grid: Iterable[float], gamma_grid: Iterable[float]) -> LemmaReport:
    cases = []
    worst = math.inf
    for s in sigma_grid:
        for g in gamma_grid:
            if not 1.0 - 2.0 * g * s * s > 0:
                raise DomainError(f"pair sigma={s}, gamma={g} violates 1 - 2 gamma sigma^2 > 0")
            I = tail_integral(s, g)
            bound = tail_bound(s, g)
            margin = (bound - I) / bound
            worst = min(worst, margin)
            cases.append(
                {"sigma": s, "gamma": g, "integral": I, "closed_form": tail_integral_closed_form(s, g), "bound": bound}
            )
    return LemmaReport("tail_integral_bound", len(cases), float(worst), 0.0, {"cases": cases})


# --------------------------------------------------------------- exp vs quadratic


def check_exp_quadratic(t_max: float, step: float) -> LemmaReport:
    """``t^2 + 1 <= exp(0.9 t)`` on ``{0, step, ..., t_max}``."""
    if not t_max > 0 or not step > 0:
        raise DomainError("t_max and step must be positive")
    n = int(math.floor(t_max / step + 1e-9))
    t = np.arange(n + 1) * step
    margin = np.exp(0.9 * t) - t * t - 1.0
    i = int(np.argmin(margin))
    t0 = 180.0 / 119.0
    details = {
        "argmin_t": float(t[i]),
        "margin_at_180_over_119": math.exp(0.9 * t0) - t0 * t0 - 1.0,
        "exp_at_180_over_119": math.exp(0.9 * t0),
        "quadratic_at_180_over_119": t0 * t0 + 1.0,
        "n_points": int(t.size),
    }
    return LemmaReport("exp_quadratic", int(t.size), float(margin.min()), 0.0, details)


# -------------------------------------------------------------------- Jensen chain


def jensen_chain_case(field_: FieldGrid, K: float, bin_rule: BinRule | None = None) -> dict:
    """Discretised set-measure chain on one field with ``R <= K``.

    Returns the three relative margins (time measure of good slices over
    ``T/2``, worst spatial measure over ``J/2``, ``Phi`` over its lower
    bound), each minus one.
    """
    cfg = field_.cfg
    if not K > 0:
        raise DomainError("K must be positive")
    vals = field_.values
    dev = vals - vals.mean(axis=1, keepdims=True)
    th2 = (dev * dev).mean(axis=1)
    w = time_weights(cfg)
    good = th2 <= 2.0 * K * K
    t_meas = float(w[good].sum())
    x_meas = (np.abs(dev[good]) <= 2.0 * K).sum(axis=1) * cfg.dx
    si = self_intersection(field_, bin_rule)
    eps = si.bin_width / (2.0 * K + si.bin_width)
    bound = cfg.T * cfg.J**2 / (32.0 * K) * (1.0 - eps)
    return {
        "time_margin": t_meas / (cfg.T / 2.0) - 1.0,
        "space_margin": float(x_meas.min() / (cfg.J / 2.0) - 1.0) if x_meas.size else -1.0,
        "phi_margin": si.phi / bound - 1.0,
        "eps_disc": eps,
        "space_strict": bool(x_meas.size and x_meas.min() > cfg.J / 2.0),
    }


def check_jensen_chain(fields: Sequence[FieldGrid], K: float | None = None, bin_rule: BinRule | None = None) -> LemmaReport:
    """Zero violations of the chain over ``fields`` with ``R <= K``.

    ``K=None`` uses each field's own radius, the tightest admissible level.
    """
    worst = math.inf
    n = 0
    skipped = 0
    strict_fail = 0
    per = []
    for f in fields:
        R = radius(f).R
        k = R if K is None else K
        if not k > 0:
            skipped += 1
            continue
        if R > k * (1.0 + 1e-12):
            skipped += 1
            continue
        c = jensen_chain_case(f, k, bin_rule)
        strict_fail += not c["space_strict"]
        m = min(c["time_margin"], c["space_margin"], c["phi_margin"])
        worst = min(worst, m)
        per.append({"K": k, **c})
        n += 1
    if strict_fail:
        worst = min(worst, -1.0)
    details = {"cases": per, "skipped": skipped, "space_strict_failures": strict_fail}
    return LemmaReport("jensen_chain", n, float(worst if n else 0.0), 0.0, details)

"""Run configuration: loading, validation, canonical hashing."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from wavepolymer.errors import ConfigError, SpectrumDivergent
from wavepolymer.experiments import BetaRule, SweepTemplate
from wavepolymer.localtime import BinRule
from wavepolymer.spectrum import Custom, DomainConfig, NoiseSpectrum, PowerLaw, attach_spectrum, build_eigenbasis

TOP_KEYS = {
    "J", "T", "n_modes", "n_x", "n_t", "dt", "beta", "seed", "threads", "c", "alpha", "profile",
    "gammas", "gamma0", "n_bins", "bin_width", "n_replicas", "gibbs", "sweep", "girsanov", "verify",
}
GIBBS_KEYS = {"rho", "n_steps", "n_burn", "adapt", "block", "ess_floor"}
SWEEP_KEYS = {"J_values", "beta_rule", "beta0", "n_replicas", "envelope", "ess_floor", "pcn_steps", "pcn_burn", "pcn_rho"}
GIRSANOV_KEYS = {"a_values", "n_replicas", "J"}
VERIFY_KEYS = {
    "variance_J", "variance_pairs", "variance_modes", "delta0", "bm_T", "bm_paths", "bm_dt",
    "tail_sigma", "tail_gamma", "exp_t_max", "exp_step", "jensen_samples",
}
DEFAULTS: dict[str, Any] = {
    "c": 1.0, "alpha": 2.0, "profile": "PowerLaw", "seed": 0, "threads": 1, "n_bins": 256, "n_replicas": 64,
}


@dataclass
class RunConfig:
    raw: dict
    domain: DomainConfig
    beta: float | None
    threads: int
    c: float
    alpha: float
    profile: PowerLaw | Custom
    gamma0: float | None
    bin_rule: BinRule
    n_replicas: int
    gibbs: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    girsanov: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)

    def spectrum(self, modes=None) -> NoiseSpectrum:
        modes = build_eigenbasis(self.domain) if modes is None else modes
        return attach_spectrum(modes, self.c, self.alpha, self.profile, self.gamma0)

    def modes(self):
        basis = build_eigenbasis(self.domain)
        return self.spectrum(basis).apply(basis)

    def sweep_template(self) -> SweepTemplate:
        s = self.sweep
        d = self.domain
        base = SweepTemplate()
        return SweepTemplate(
            T=d.T, n_modes=d.n_modes, n_x=d.n_x, n_t=d.n_t, c=self.c, alpha=self.alpha, seed=d.seed,
            n_bins=self.bin_rule.n_bins,
            ess_floor=float(s.get("ess_floor", base.ess_floor)),
            pcn_steps=int(s.get("pcn_steps", base.pcn_steps)),
            pcn_burn=int(s.get("pcn_burn", base.pcn_burn)),
            pcn_rho=float(s.get("pcn_rho", base.pcn_rho)),
            envelope=tuple(s.get("envelope", base.envelope)),
        )

    def beta_rule(self) -> BetaRule:
        s = self.sweep
        beta0 = s.get("beta0", self.beta if self.beta is not None else 1.0)
        return BetaRule(s.get("beta_rule", "constant"), float(beta0))

    def with_seed(self, seed: int) -> "RunConfig":
        raw = dict(self.raw)
        raw["seed"] = int(seed)
        return parse_config_dict(raw)

    def with_threads(self, threads: int) -> "RunConfig":
        self.threads = int(threads)
        return self


def _num(d: dict, key: str, kind=float, positive: bool = False, required: bool = True):
    if key not in d:
        if required:
            raise ConfigError(f"missing required key '{key}'")
        return None
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"key '{key}' must be a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(f"key '{key}' must be an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"key '{key}' must be finite")
    if positive and not v > 0:
        raise ConfigError(f"key '{key}' must be positive, got {v}")
    return v


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"section '{where}' must be an object")
    bad = sorted(set(d) - allowed)
    if bad:
        raise ConfigError(f"unknown key(s) {bad} in {where}")


def parse_config_dict(raw: dict) -> RunConfig:
    """Validate a configuration mapping.

    Raises
    ------
    ConfigError
        With the offending key named; subclasses ``AliasRule`` and
        ``SpectrumDivergent`` flag the two cross-field constraints.
    """
    _check_keys(raw, TOP_KEYS, "config")
    d = {**DEFAULTS, **raw}
    J = _num(d, "J", positive=True)
    T = _num(d, "T", positive=True)
    n_modes = _num(d, "n_modes", int, positive=True)
    n_x = _num(d, "n_x", int, positive=True)
    n_t = _num(d, "n_t", int, positive=True, required=False)
    dt = _num(d, "dt", positive=True, required=False)
    if n_t is None and dt is None:
        raise ConfigError("one of 'n_t' or 'dt' is required")
    if n_t is None:
        n_t = int(round(T / dt))
        if n_t < 1 or not math.isclose(n_t * dt, T, rel_tol=1e-12):
            raise ConfigError(f"'dt'={dt} does not divide T={T}")
    elif dt is not None and not math.isclose(n_t * dt, T, rel_tol=1e-12):
        raise ConfigError(f"'dt'*'n_t' must equal T (dt={dt}, n_t={n_t}, T={T})")
    seed = _num(d, "seed", int)
    threads = _num(d, "threads", int, positive=True)
    domain = DomainConfig(J=J, T=T, n_modes=n_modes, n_x=n_x, n_t=n_t, seed=seed)
    beta = _num(d, "beta", required=False)
    if beta is not None and beta < 0:
        raise ConfigError(f"key 'beta' must be nonnegative, got {beta}")
    c = _num(d, "c", positive=True)
    alpha = _num(d, "alpha")
    if alpha <= 0:
        raise ConfigError(f"key 'alpha' must be positive, got {alpha}")
    prof = d["profile"]
    if prof == "PowerLaw":
        if "gammas" in raw:
            raise ConfigError("key 'gammas' requires profile 'Custom'")
        if alpha <= 1:
            raise SpectrumDivergent(f"key 'alpha'={alpha}: PowerLaw spectrum needs alpha > 1")
        profile = PowerLaw()
    elif prof == "Custom":
        g = d.get("gammas")
        if not isinstance(g, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in g):
            raise ConfigError("key 'gammas' must be a list of numbers for profile 'Custom'")
        profile = Custom(g)
    else:
        raise ConfigError(f"key 'profile' must be 'PowerLaw' or 'Custom', got {prof!r}")
    gamma0 = _num(d, "gamma0", required=False)
    n_bins = _num(d, "n_bins", int, positive=True)
    bw = _num(d, "bin_width", positive=True, required=False)
    n_rep = _num(d, "n_replicas", int, positive=True)
    sections = {}
    for name, keys in (("gibbs", GIBBS_KEYS), ("sweep", SWEEP_KEYS), ("girsanov", GIRSANOV_KEYS), ("verify", VERIFY_KEYS)):
        sec = d.get(name, {})
        _check_keys(sec, keys, name)
        sections[name] = dict(sec)
    rho = sections["gibbs"].get("rho", 0.5)
    if not (isinstance(rho, (int, float)) and 0 < rho <= 1):
        raise ConfigError(f"key 'gibbs.rho' must lie in (0, 1], got {rho!r}")
    cfg = RunConfig(
        raw=dict(raw), domain=domain, beta=beta, threads=threads, c=c, alpha=alpha, profile=profile,
        gamma0=gamma0, bin_rule=BinRule(n_bins, bw), n_replicas=n_rep, **sections,
    )
    cfg.spectrum()
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config_dict(raw)


def _normalize(x):
    if isinstance(x, dict):
        return {k: _normalize(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_normalize(v) for v in x]
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x


def canonical_json(raw: dict) -> str:
    """Sorted keys, integral floats written as integers, no whitespace."""
    return json.dumps(_normalize(raw), sort_keys=True, separators=(",", ":"))


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical form; ``threads`` is excluded since it never affects results."""
    body = {k: v for k, v in raw.items() if k != "threads"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()

import math

import numpy as np
import pytest

from wavepolymer.dynamics import PathGenerator
from wavepolymer.errors import ConfigError
from wavepolymer.girsanov import (
    entropy_identity,
    initial_kl,
    initial_log_ratio,
    log_density,
    log_zeta,
    martingale_check,
    mode1_time_average,
    phi1_f_phi1,
    radius_functional,
    sigma_x_sq,
    theta,
    tilt_consistency,
    zT_lower_bound_report,
)
from wavepolymer.spectrum import Custom, DomainConfig, attach_spectrum, build_eigenbasis


def _setup(J=math.pi, T=1.0, n_t=20, c=1.0):
    cfg = DomainConfig(J=J, T=T, n_modes=4, n_x=16, n_t=n_t, seed=11)
    basis = build_eigenbasis(cfg)
    spec = attach_spectrum(basis, c, 2.0)
    modes = spec.apply(basis)
    return cfg, spec, modes


def test_quadrature_matches_mode_variance():
    cfg, spec, modes = _setup()
    assert phi1_f_phi1(spec, modes) == pytest.approx(spec.gammas[1] ** 2, rel=1e-12)
    assert sigma_x_sq(2.0, spec, modes, "quad") == pytest.approx(sigma_x_sq(2.0, spec, modes), rel=1e-12)
    with pytest.raises(ConfigError):
        sigma_x_sq(1.0, spec, modes, "bogus")


def test_log_zeta_formula():
    cfg, spec, modes = _setup(c=4.0)
    g1 = spec.gammas[1]
    assert log_zeta(0.5, 3.0, spec, modes) == pytest.approx(0.25 * 3.0 / (2 * g1 * g1))
    assert log_zeta(0.0, 3.0, spec, modes) == 0.0


def test_log_density_terminal_value():
    cfg, spec, modes = _setup()
    th = theta(0.5, spec.gammas[1])
    assert log_density(np.array([0.0, 0.3, 1.2]), 0.5, 2.0, modes) == pytest.approx(th * 1.2 - th * th)
    assert theta(0.0, 0.0) == 0.0
    with pytest.raises(ConfigError):
        theta(1.0, 0.0)


def test_initial_ratio_is_gaussian_log_ratio():
    cfg, spec, modes = _setup()
    m1 = modes[1]
    var = spec.gammas[1] ** 2 / (2 * m1.k_n**2)
    m = 0.4 / m1.k_n**2
    x = 0.17
    ref = (-(x - m) ** 2 + x * x) / (2 * var)
    assert initial_log_ratio(np.array([x, 0.0]), 0.4, m1) == pytest.approx(ref)
    assert initial_kl(0.4, m1) == pytest.approx(m * m / (2 * var))


def test_martingale_and_entropy():
    cfg, spec, modes = _setup()
    gen = PathGenerator(cfg, [m for m in modes if m.n])
    rep = martingale_check(0.5, 4000, gen, spec)
    assert rep.passed
    mean, se, lz = entropy_identity(0.5, 4000, gen, spec)
    assert abs(mean - lz) <= 4 * se


def test_tilt_consistency_two_functionals():
    cfg, spec, modes = _setup()
    gen = PathGenerator(cfg, [m for m in modes if m.n])
    for g in (mode1_time_average, radius_functional(cfg)):
        assert tilt_consistency(g, 0.5, 3000, gen).passed
    zero = tilt_consistency(mode1_time_average, 0.0, 100, gen)
    assert zero.difference == 0.0


def test_custom_spectrum_with_zero_gamma1_is_singular():
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=3, n_x=12, n_t=4)
    basis = build_eigenbasis(cfg)
    spec = attach_spectrum(basis, 1.0, 2.0, Custom([0.0, 0.0]))
    with pytest.raises(ConfigError):
        log_zeta(0.5, 1.0, spec, spec.apply(basis))


def test_zT_report_beta_zero_holds():
    cfg, spec, modes = _setup(J=1.0, n_t=10)
    rep = zT_lower_bound_report(0.0, 0.3, cfg, spec, build_eigenbasis(cfg), n_replicas=50)
    assert rep.lhs == 0.0 and rep.holds
    assert rep.rhs == pytest.approx(-(rep.log_zeta + rep.init_kl) / cfg.T)


def test_zT_report_positive_beta_holds():
    cfg, spec, modes = _setup(J=1.0, n_t=10)
    rep = zT_lower_bound_report(0.5, 0.3, cfg, spec, build_eigenbasis(cfg), n_replicas=400)
    assert rep.holds
    assert rep.rhs_noise_only >= rep.rhs


def test_log_zeta_homogeneous_in_a():
    cfg, spec, modes = _setup()
    assert log_zeta(2.0, 1.0, spec, modes) / log_zeta(1.0, 1.0, spec, modes) == pytest.approx(4.0, rel=1e-12)
    assert log_density(np.array([0.0, 1.0]), 0.0, 1.0, modes) == 0.0


def test_zT_both_sides_zero_without_tilt():
    cfg, spec, modes = _setup(J=1.0, n_t=10)
    rep = zT_lower_bound_report(0.0, 0.0, cfg, spec, build_eigenbasis(cfg), n_replicas=20)
    assert rep.lhs == 0.0 and rep.rhs == 0.0


def test_zT_small_instance():
    cfg = DomainConfig(J=1.0, T=2.0, n_modes=4, n_x=16, n_t=20, seed=2)
    basis = build_eigenbasis(cfg)
    spec = attach_spectrum(basis, 1.0, 2.0)
    assert zT_lower_bound_report(0.25, 0.2, cfg, spec, basis, n_replicas=500).holds

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from wavepolymer.dynamics import (
    ModeState,
    PathGenerator,
    TiltParams,
    apply_tilt,
    build_transition,
    compose,
    drift_matrix,
    evolve_path,
    evolve_zero_mode,
    mean_map_closed_form,
    sample_stationary,
    stationary_cov_matrix,
    stationary_mean,
    stream_rng,
)
from wavepolymer.errors import ConfigError, DomainError
from wavepolymer.spectrum import DomainConfig, make_mode

REGIME_MODES = [(2 * math.pi, 1), (math.pi, 1), (8 * math.pi, 1), (4 * math.pi, 2), (1.0, 3)]


@pytest.mark.parametrize("J,n", REGIME_MODES)
@pytest.mark.parametrize("t", [1e-3, 0.1, 2.0])
def test_closed_form_mean_map_matches_expm(J, n, t):
    m = make_mode(n, J, 1.0)
    assert np.allclose(mean_map_closed_form(m, t), expm(drift_matrix(m) * t), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("J,n", REGIME_MODES)
def test_stationary_covariance_solves_lyapunov(J, n):
    m = make_mode(n, J, 0.7)
    M = drift_matrix(m)
    S = stationary_cov_matrix(m)
    resid = M @ S + S @ M.T + np.diag([0.0, 0.49])
    assert np.abs(resid).max() < 1e-12 * max(1.0, np.abs(S).max())


@pytest.mark.parametrize("J,n", REGIME_MODES)
def test_stationary_law_is_invariant(J, n):
    m = make_mode(n, J, 1.0)
    k = build_transition(m, 0.3)
    S = stationary_cov_matrix(m)
    S1 = k.mean_map @ S @ k.mean_map.T + k.cov
    assert np.allclose(S1, S, rtol=1e-10, atol=1e-14)


def test_zero_mode_has_no_stationary_law():
    z = make_mode(0, 1.0, 1.0)
    with pytest.raises(DomainError):
        stationary_mean(z)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 40.0), st.integers(1, 6), st.floats(1e-3, 0.5))
def test_chapman_kolmogorov_property(J, n, dt):
    m = make_mode(n, J, 1.0)
    F, S = compose(build_transition(m, dt), build_transition(m, dt))
    k2 = build_transition(m, 2 * dt)
    assert np.allclose(F, k2.mean_map, rtol=1e-10, atol=1e-13)
    assert np.allclose(S, k2.cov, rtol=1e-10, atol=1e-15)


def test_joint_noise_covariance():
    m = make_mode(1, math.pi, 1.0)
    k = build_transition(m, 0.5)
    assert k.joint_cov[2, 2] == 0.5
    assert np.all(np.linalg.eigvalsh(k.joint_cov) > -1e-14)
    assert np.allclose(k.factor @ k.factor.T, k.joint_cov, atol=1e-14)


def test_forcing_vector_integrates_mean_map():
    m = make_mode(1, 2.0, 1.0)
    k = build_transition(m, 0.4)
    u = np.linspace(0, 0.4, 4001)
    vals = np.array([mean_map_closed_form(m, 0.4 - s)[:, 1] for s in u])
    assert np.allclose(k.forcing, np.trapezoid(vals, u, axis=0), rtol=1e-6)


def test_build_transition_rejects_bad_dt():
    with pytest.raises(ConfigError):
        build_transition(make_mode(1, 1.0, 1.0), 0.0)


def test_evolve_path_shapes_and_noise():
    m = make_mode(1, 1.0, 0.5)
    k = build_transition(m, 0.01)
    p = evolve_path(m, ModeState(0.1, 0.0), k, 50, stream_rng(0, 1))
    assert p.states.shape == (51, 2)
    assert p.noise[0] == 0.0 and len(p) == 51
    assert p.state(0) == ModeState(0.1, 0.0)
    with pytest.raises(ConfigError):
        evolve_path(make_mode(1, 1.0, 0.4), ModeState(0, 0), k, 5, stream_rng(0))


def test_zero_mode_mean_and_variance():
    g, t = 0.8, 2.0
    finals = np.array([evolve_zero_mode(g, (0.3, 0.5), 0.5, 4, stream_rng(1, i)).a[-1] for i in range(4000)])
    mean = 0.3 + 0.5 * (1 - math.exp(-t))
    var = g * g * (t - 2 * (1 - math.exp(-t)) + 0.5 * (1 - math.exp(-2 * t)))
    assert abs(finals.mean() - mean) < 4 * math.sqrt(var / finals.size)
    assert finals.var() == pytest.approx(var, rel=0.1)


def test_stream_independence_and_reproducibility():
    a = stream_rng(5, 1, 2).standard_normal(3)
    assert np.array_equal(a, stream_rng(5, 1, 2).standard_normal(3))
    assert not np.array_equal(a, stream_rng(5, 2, 1).standard_normal(3))


def _gen(cfg_seed=1, **kw):
    cfg = DomainConfig(J=2.0, T=1.0, n_modes=4, n_x=16, n_t=10, seed=cfg_seed)
    modes = [make_mode(n, 2.0, 1.0 / max(n, 1)) for n in range(4)]
    return PathGenerator(cfg, modes, **kw)


def test_batching_does_not_change_replicas():
    g = _gen()
    full = g.batch(np.arange(6))
    part = g.batch([4, 5])
    assert np.array_equal(full.states[4:], part.states)
    assert np.array_equal(full.coeffs.shape, (6, 11, 4))


def test_zero_tilt_reproduces_untilted_paths():
    g = _gen()
    t = apply_tilt(g, TiltParams(0.0))
    assert np.array_equal(g.batch([0, 1]).states, t.batch([0, 1]).states)
    tilted = apply_tilt(g, TiltParams(0.7))
    diff = tilted.batch([0]).states[0] - g.batch([0]).states[0]
    assert np.all(diff[[0, 2, 3]] == 0.0)
    assert np.any(diff[1] != 0.0)


def test_sample_stationary_shift():
    m = make_mode(1, math.pi, 1.0)
    xs = np.array([sample_stationary(m, stream_rng(0, i), a=0.5).a for i in range(3000)])
    assert abs(xs.mean() - 0.5) < 4 * math.sqrt(0.5 / 3000)


def test_tilt_param_validation():
    with pytest.raises(ConfigError):
        TiltParams(math.nan)


def test_small_dt_limit():
    m = make_mode(1, 1.0, 1.0)
    k = build_transition(m, 1e-8)
    assert np.abs(k.mean_map - np.eye(2)).max() <= 1e-6
    assert np.abs(k.cov).max() <= 1e-8


def test_critical_closed_form_value():
    m = make_mode(1, 2 * math.pi, 1.0)
    t = 0.37
    ref = 0.25 * math.exp(-t / 2) * np.array([[4 + 2 * t, 4 * t], [-t, 4 - 2 * t]])
    assert np.allclose(build_transition(m, t).mean_map, ref, rtol=1e-14)


def test_noiseless_overdamped_flow():
    m = make_mode(1, 8 * math.pi, 0.0)
    k = build_transition(m, 0.1)
    p = evolve_path(m, ModeState(1.0, 0.0), k, 30, stream_rng(0))
    ref = np.array([expm(drift_matrix(m) * 0.1 * i) @ [1.0, 0.0] for i in range(31)])
    assert np.allclose(p.states, ref, rtol=1e-12, atol=1e-14)


def test_lag_variance_and_autocovariance():
    cfg = DomainConfig(J=math.pi, T=1.0, n_modes=2, n_x=8, n_t=10, seed=4)
    m = make_mode(1, math.pi, 1.0)
    ps = PathGenerator(cfg, [m]).batch(np.arange(10_000))
    x = ps.states[:, 0, :, :]
    S = stationary_cov_matrix(m)
    v = x[:, -1, 0]
    se = v.var() * math.sqrt(2 / v.size)
    assert abs(v.var() - S[0, 0]) < 4 * se
    # E[s_{i+1} s_i^T] = F E[s_i s_i^T]; conditioning on the sampled s_i leaves
    # only the independent innovations as noise
    F = build_transition(m, cfg.dt).mean_map
    s4, s5 = x[:, 4], x[:, 5]
    lagged = s5.T @ s4 / s4.shape[0]
    ref = F @ (s4.T @ s4 / s4.shape[0])
    resid = (s5 - s4 @ F.T)[:, 0] * s4[:, 0]
    assert abs(lagged[0, 0] - ref[0, 0]) < 4 * resid.std() / math.sqrt(resid.size)


def test_zero_mode_noiseless_and_velocity_variance():
    p = evolve_zero_mode(0.0, (0.2, 1.5), 0.25, 8, stream_rng(0))
    t = np.arange(9) * 0.25
    assert np.allclose(p.a, 0.2 + 1.5 * (1 - np.exp(-t)), rtol=1e-13)
    vs = np.array([evolve_zero_mode(0.6, (0, 0), 20.0, 1, stream_rng(3, i)).v[-1] for i in range(4000)])
    se = vs.var() * math.sqrt(2 / vs.size)
    assert abs(vs.var() - 0.18) < 4 * se


def test_zero_mode_increment_covariance():
    from scipy import integrate

    g = 1.0
    ends = np.array([evolve_zero_mode(g, (0, 0), 1.0, 2, stream_rng(8, i)).a for i in range(20_000)])
    i1, i2 = ends[:, 1] - ends[:, 0], ends[:, 2] - ends[:, 1]
    ref = g * g * integrate.quad(lambda s: (1 - math.exp(-(1 - s))) * (math.exp(-(1 - s)) - math.exp(-(2 - s))), 0, 1)[0]
    prod = i1 * i2
    assert abs(prod.mean() - ref) < 4 * prod.std() / math.sqrt(prod.size)


def test_stationary_draw_moments():
    m = make_mode(2, 3.0, 1.0)
    xs = np.array([sample_stationary(m, stream_rng(6, i)).a for i in range(20_000)])
    var = stationary_cov_matrix(m)[0, 0]
    assert abs(xs.mean()) < 4 * math.sqrt(var / xs.size)
    assert abs(xs.var() - var) < 4 * var * math.sqrt(2 / xs.size)

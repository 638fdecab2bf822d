import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavepolymer.errors import ConfigError, DomainError
from wavepolymer.field import FieldGrid
from wavepolymer.localtime import (
    BinRule,
    heuristic_flat_phi,
    occupation_histogram,
    phi_values,
    self_intersection,
    write_slices_csv,
)
from wavepolymer.spectrum import DomainConfig


def test_histogram_mass_conservation():
    u = np.random.default_rng(0).normal(size=100)
    est = occupation_histogram(u, 0.01, 0.1)
    assert est.masses.sum() == pytest.approx(1.0)
    assert est.bin_edges[0] <= u.min() and est.bin_edges[-1] > u.max()
    assert est.density.sum() * 0.1 == pytest.approx(1.0)


def test_linear_profile_has_exact_phi():
    # u(x) = x on [0, J]: occupation density 1 on [0, J], so int l^2 = J
    cfg = DomainConfig(J=2.0, T=1.0, n_modes=2, n_x=1000, n_t=4)
    vals = np.tile(cfg.x_grid, (cfg.n_t + 1, 1))
    si = self_intersection(FieldGrid(vals, cfg), BinRule(n_bins=50))
    # midpoints span J - dx, so the estimate carries an O(dx / J) bias
    assert si.phi == pytest.approx(cfg.T * cfg.J, rel=2 * cfg.dx / cfg.J)
    assert si.degenerate_slices == []


def test_flat_slice_is_degenerate_and_finite():
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=2, n_x=16, n_t=2)
    vals = np.zeros((3, 16))
    vals[2] = np.linspace(0, 1, 16)
    rule = BinRule(width=0.25)
    si = self_intersection(FieldGrid(vals, cfg), rule)
    assert si.degenerate_slices == [0, 1]
    assert si.per_slice[0] == pytest.approx(cfg.J**2 / 0.25)


@settings(max_examples=30)
@given(st.integers(1, 64), st.integers(0, 2**20))
def test_phi_lower_bound_by_cauchy_schwarz(nb, seed):
    # int l^2 >= (int l)^2 / range, for each slice
    cfg = DomainConfig(J=1.5, T=1.0, n_modes=2, n_x=24, n_t=3)
    vals = np.random.default_rng(seed).normal(size=(4, 24))
    phi, si = phi_values(vals, cfg, BinRule(n_bins=nb))
    span = si.n_bins * si.bin_width
    assert np.all(si.per_slice >= cfg.J**2 / span * (1 - 1e-12))
    assert phi >= 0.0


@settings(max_examples=20)
@given(st.floats(-3, 3))
def test_phi_shift_invariant_with_explicit_width(shift):
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=2, n_x=16, n_t=2)
    vals = np.random.default_rng(4).normal(size=(3, 16))
    a = phi_values(vals, cfg, BinRule(n_bins=32))[0]
    b = phi_values(vals + shift, cfg, BinRule(n_bins=32))[0]
    assert b == pytest.approx(a, rel=1e-6)


def test_bin_rule_validation():
    with pytest.raises(ConfigError):
        BinRule(n_bins=0)
    with pytest.raises(ConfigError):
        BinRule(width=-1.0)
    with pytest.raises(DomainError):
        occupation_histogram(np.zeros(3), 1.0, 0.0)


def test_heuristic_flat_phi():
    assert heuristic_flat_phi(2.0, 3.0, 0.5) == pytest.approx(3.0 * 4.0 / 1.0)
    with pytest.raises(DomainError):
        heuristic_flat_phi(1.0, 1.0, 0.0)


def test_slices_csv_lf(tmp_path):
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=2, n_x=16, n_t=2)
    si = self_intersection(FieldGrid(np.random.default_rng(0).normal(size=(3, 16)), cfg))
    p = tmp_path / "s.csv"
    write_slices_csv(si, p)
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.count(b"\n") == 4


def test_ramp_occupation_masses():
    n = 1000
    x = (np.arange(n) + 0.5) / n
    est = occupation_histogram(x, 1.0 / n, 0.1, origin=0.0)
    assert np.allclose(est.masses, 0.1) and np.allclose(est.density, 1.0)
    steep = occupation_histogram(2 * x, 1.0 / n, 0.1, origin=0.0)
    assert np.allclose(steep.density, 0.5)
    flat = occupation_histogram(np.full(n, 0.3), 1.0 / n, 0.1)
    assert flat.masses.max() == pytest.approx(1.0) and np.count_nonzero(flat.masses) == 1


@pytest.mark.parametrize("slope,expected", [(1.0, 1.0), (2.0, 0.5)])
def test_ramp_phi(slope, expected):
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=2, n_x=1000, n_t=4)
    vals = np.tile(slope * cfg.x_grid, (cfg.n_t + 1, 1))
    phi = self_intersection(FieldGrid(vals, cfg), BinRule(width=0.01 * slope)).phi
    assert phi == pytest.approx(expected, rel=1e-9)


def test_flat_phi_documented_values():
    assert heuristic_flat_phi(1.0, 1.0, 0.5) == pytest.approx(1.0)
    assert heuristic_flat_phi(2.0, 1.0, 1.0) == pytest.approx(2.0)
    assert heuristic_flat_phi(2.0, 2.0, 1.0) == pytest.approx(4.0)


@settings(max_examples=20)
@given(st.integers(0, 2**20))
def test_mass_conservation_every_slice(seed):
    cfg = DomainConfig(J=1.7, T=1.0, n_modes=2, n_x=40, n_t=3)
    vals = np.random.default_rng(seed).normal(size=(4, 40))
    for row in vals:
        assert occupation_histogram(row, cfg.dx, 0.05).masses.sum() == pytest.approx(cfg.J, abs=1e-9)


@pytest.mark.parametrize("slope", [0.5, 1.0, 3.0])
def test_bin_refinement_on_ramps(slope):
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=2, n_x=4000, n_t=1)
    vals = np.tile(slope * cfg.x_grid, (2, 1))
    a = phi_values(vals, cfg, BinRule(n_bins=100))[0]
    b = phi_values(vals, cfg, BinRule(n_bins=200))[0]
    assert abs(b - a) / a < 0.02


@settings(max_examples=20)
@given(st.integers(0, 2**20), st.integers(4, 64))
def test_binned_lower_bound(seed, nb):
    cfg = DomainConfig(J=1.0, T=1.0, n_modes=2, n_x=64, n_t=1)
    row = np.random.default_rng(seed).normal(size=64)
    W = row.max() - row.min()
    w = W / nb
    est = occupation_histogram(row, cfg.dx, w, origin=row.min())
    assert est.integral_sq() >= cfg.J**2 / W * (1 - 2 * w / W)


def test_level_set_formula_piecewise_linear():
    # tent slice: u rises with slope 2 on [0, 0.5] then falls with slope 1 on [0.5, 1.5]
    # so u spans [0, 1] and l(y) = 1/2 + 1, int l^2 = 2.25
    J = 1.5
    n = 30000
    x = (np.arange(n) + 0.5) * J / n
    u = np.where(x < 0.5, 2 * x, 1 - (x - 0.5))
    est = occupation_histogram(u, J / n, 1.0 / 200, origin=0.0)
    assert est.integral_sq() == pytest.approx(2.25, rel=0.03)

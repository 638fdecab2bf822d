import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavepolymer import _fallback, kernels


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.available_backends()


def _inputs(B, n, seed):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(B, 3, 3)) * 0.3
    L = rng.normal(size=(B, 3, 3))
    drift = rng.normal(size=(B, 3))
    s0 = rng.normal(size=(B, 3))
    z = rng.normal(size=(B, n, 3))
    return F, L, drift, s0, z


def test_fallback_propagate_recursion():
    F, L, d, s0, z = _inputs(2, 5, 0)
    out = _fallback.propagate(F, L, d, s0, z)
    s = s0[1]
    for i in range(5):
        s = F[1] @ s + d[1] + L[1] @ z[1, i]
        assert np.allclose(out[1, i + 1], s, rtol=1e-13)


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 30), st.integers(0, 2**31))
def test_backends_bit_identical(B, n, seed):
    args = _inputs(B, n, seed)
    cy = kernels.available_backends()["cython"]
    assert np.array_equal(cy.propagate(*args), _fallback.propagate(*args))
    vals = np.random.default_rng(seed).normal(size=(n + 1, 16))
    lo, hi = vals.min(), vals.max()
    w = (hi - lo + 1e-9) / 7
    a = cy.slice_square_counts(vals, lo, w, 7)
    b = _fallback.slice_square_counts(vals, lo, w, 7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_slice_counts_against_histogram():
    vals = np.random.default_rng(3).normal(size=(4, 50))
    lo, hi = vals.min(), vals.max()
    w = (hi - lo + 1e-9) / 10
    sumsq, maxc = kernels.slice_square_counts(vals, lo, w, 10)
    for r in range(4):
        c, _ = np.histogram(vals[r], bins=10, range=(lo, lo + 10 * w))
        assert sumsq[r] == int((c * c).sum())
        assert maxc[r] == c.max()

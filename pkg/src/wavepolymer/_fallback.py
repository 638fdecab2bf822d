"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def propagate(F, L, drift, s0, z):
    """Run ``B`` independent linear-Gaussian chains, vectorised over ``B``.

    Same contract as ``_kernels.propagate``; the summation order per
    component is identical so results match bit for bit.
    """
    F = np.asarray(F, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    drift = np.asarray(drift, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    B, d, _ = F.shape
    n = z.shape[1]
    out = np.empty((B, n + 1, d), dtype=np.float64)
    out[:, 0] = s0
    for i in range(n):
        s = out[:, i]
        acc = F[:, :, 0] * s[:, None, 0]
        for k in range(1, d):
            acc = acc + F[:, :, k] * s[:, None, k]
        acc = acc + drift
        zi = z[:, i]
        for k in range(d):
            acc = acc + L[:, :, k] * zi[:, None, k]
        out[:, i + 1] = acc
    return out


def slice_square_counts(values, origin, width, nbins):
    values = np.asarray(values, dtype=np.float64)
    rows, _ = values.shape
    idx = np.floor((values - origin) / width)
    idx = np.clip(idx, 0, nbins - 1).astype(np.int64)
    flat = idx + (np.arange(rows, dtype=np.int64) * nbins)[:, None]
    counts = np.bincount(flat.ravel(), minlength=rows * nbins).reshape(rows, nbins)
    return (counts * counts).sum(axis=1).astype(np.int64), counts.max(axis=1).astype(np.int64)

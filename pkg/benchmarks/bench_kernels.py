"""Time the compiled and numpy backends on the two hot kernels.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from wavepolymer import kernels
from wavepolymer.dynamics import PathGenerator
from wavepolymer.spectrum import DomainConfig, attach_spectrum, build_eigenbasis


def propagate_inputs(n_replicas: int = 32, n_modes: int = 32, n_t: int = 400):
    cfg = DomainConfig(J=2.0, T=4.0, n_modes=n_modes, n_x=4 * n_modes, n_t=n_t)
    basis = build_eigenbasis(cfg)
    modes = [m for m in attach_spectrum(basis, 1.0, 2.0).apply(basis) if m.n != 0]
    gen = PathGenerator(cfg, modes)
    z = gen.white_noise(np.arange(n_replicas))
    B = n_replicas * len(modes)
    F = np.ascontiguousarray(np.broadcast_to(gen._F[None], (n_replicas,) + gen._F.shape).reshape(B, 3, 3))
    L = np.ascontiguousarray(np.broadcast_to(gen._L[None], (n_replicas,) + gen._L.shape).reshape(B, 3, 3))
    drift = np.zeros((B, 3))
    s0 = np.zeros((B, 3))
    s0[:, :2] = z.init.reshape(B, 2)
    steps = np.ascontiguousarray(z.steps.reshape(B, n_t, 3))
    return F, L, drift, s0, steps


def histogram_inputs(n_t: int = 400, n_x: int = 256, seed: int = 0):
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.standard_normal((n_t + 1, n_x)), axis=1) / np.sqrt(n_x)
    lo, hi = float(values.min()), float(values.max())
    return values, lo, (hi - lo + 1e-9) / 256, 256


def main(argv=None) -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    prop = propagate_inputs()
    hist = histogram_inputs()
    backends = kernels.available_backends()
    ref = {}
    print(f"{'kernel':<20}{'backend':<10}{'best [ms]':>12}{'speedup':>10}")
    for name, args_, fn in (("propagate", prop, "propagate"), ("slice_histogram", hist, "slice_square_counts")):
        base = None
        for bname in ("python", "cython"):
            if bname not in backends:
                print(f"{name:<20}{bname:<10}{'n/a':>12}")
                continue
            f = getattr(backends[bname], fn)
            out = f(*args_)
            if name in ref:
                same = all(np.array_equal(a, b) for a, b in zip(np.atleast_1d(ref[name]), np.atleast_1d(out))) \
                    if isinstance(out, tuple) else np.array_equal(ref[name], out)
                if not same:
                    raise SystemExit(f"{name}: backends disagree")
            ref[name] = out
            t = min(timeit.repeat(lambda: f(*args_), number=1, repeat=args.repeat)) * 1e3
            base = base or t
            print(f"{name:<20}{bname:<10}{t:>12.2f}{base / t:>10.1f}x")
    print(f"active backend: {kernels.BACKEND}")


if __name__ == "__main__":
    main()

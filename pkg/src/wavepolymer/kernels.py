"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Setting ``WAVEPOLYMER_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from wavepolymer import _fallback


def _load_compiled() -> ModuleType | None:
    try:
        from wavepolymer import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if _compiled is not None and not os.environ.get("WAVEPOLYMER_PURE_PYTHON"):
    _impl: ModuleType = _compiled
    BACKEND = "cython"
else:
    _impl = _fallback
    BACKEND = "python"


def available_backends() -> dict[str, ModuleType]:
    backends = {"python": _fallback}
    if _compiled is not None:
        backends["cython"] = _compiled
    return backends


def propagate(F, L, drift, s0, z):
    return _impl.propagate(F, L, drift, s0, z)


def slice_square_counts(values, origin, width, nbins):
    return _impl.slice_square_counts(values, float(origin), float(width), int(nbins))

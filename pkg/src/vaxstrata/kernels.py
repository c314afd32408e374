"""Kernel dispatch.

The compiled extension is used when importable; otherwise the numpy
implementation is selected. Set ``VAXSTRATA_PURE_PYTHON=1`` to force the
fallback.

Both kernels return, per resample, a float vector with entries

====  ==========================================================
 0    status (0 ok, 1 a required cell is empty)
 1    rho0: infected fraction, placebo arm
 2    rho1: infected fraction, vaccine arm
 3    mean Y in (Z=1, S=1)
 4    mean Y in (Z=0, S=1)
 5    mean Y in (Z=1, S=0)
 6    trimming fraction q (clamped to [0, 1])
 7    lower trimmed mean of the (Z=1, S=0) cell
 8    upper trimmed mean of the (Z=1, S=0) cell
 9    lower bound
 10   upper bound
 11   flag bits: 1 q clamped at 0, 2 q clamped at 1, 4 tie-aware
      path, 8 strict path fell back to the tie-aware count
====  ==========================================================
"""
from __future__ import annotations

import os

from . import _kernels_py

IMPLEMENTATION = "python"
if os.environ.get("VAXSTRATA_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl
        IMPLEMENTATION = "compiled"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py
else:  # pragma: no cover - exercised via subprocess in tests
    _impl = _kernels_py

bounds_from_counts = _impl.bounds_from_counts
bounds_batch = _impl.bounds_batch

IDX_STATUS, IDX_RHO0, IDX_RHO1, IDX_MU11, IDX_MU01, IDX_MU10 = range(6)
IDX_Q, IDX_LOW, IDX_HIGH, IDX_LOWER, IDX_UPPER, IDX_FLAGS = range(6, 12)
FLAG_Q_NEG, FLAG_Q_GT1, FLAG_TIES, FLAG_STRICT_FALLBACK = 1, 2, 4, 8

__all__ = ["IMPLEMENTATION", "bounds_from_counts", "bounds_batch"]

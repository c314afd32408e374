"""Small numerical helpers shared across modules."""
from __future__ import annotations

import math

import numpy as np

DENOM_GUARD = 1e-12


def expit(v):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def wmean(v, w=None) -> float:
    """Compensated (order-insensitive) mean; ``w`` are weights summing to 1."""
    v = np.asarray(v, dtype=float)
    if w is None:
        return math.fsum(v.tolist()) / v.size
    return math.fsum((v * w).tolist())


def wvar(v, w=None) -> float:
    """Population variance (mean of squares minus squared mean)."""
    m = wmean(v, w)
    return max(wmean((np.asarray(v, dtype=float) - m) ** 2, w), 0.0)


def guard(den: float, what: str, estimand: str | None = None) -> float:
    from .diagnostics import EstimationError

    if not np.isfinite(den) or abs(den) < DENOM_GUARD:
        raise EstimationError(f"degenerate denominator {what} = {den!r}", estimand)
    return den

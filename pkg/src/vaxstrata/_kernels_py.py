"""Pure numpy implementation of the bounds kernels.

Semantics match the compiled module exactly; see :mod:`vaxstrata.kernels`
for the layout of the returned summary vector.
"""
from __future__ import annotations

import math

import numpy as np

N_OUT = 12
_TIE_EPS = 1e-9


def _take_sum(vals: np.ndarray, cnt: np.ndarray, k: int) -> float:
    """Sum of the first ``k`` units of ``vals`` repeated ``cnt`` times."""
    cum = np.cumsum(cnt)
    j = int(np.searchsorted(cum, k))
    full = float(np.dot(vals[:j], cnt[:j]))
    before = int(cum[j - 1]) if j > 0 else 0
    return full + (k - before) * float(vals[j])


def _trimmed(cnt: np.ndarray, vals: np.ndarray, m: int, q: float, mu10: float):
    if q <= 0.0:
        return mu10, mu10, 0
    keep = cnt > 0
    v, c = vals[keep], cnt[keep]
    ties = bool(np.any(c > 1)) or bool(np.any(v[1:] == v[:-1]))
    k = min(max(math.ceil(q * m - _TIE_EPS), 1), m)
    flags = 0
    if ties:
        flags |= 4
        n_low = n_high = k
    else:
        n_low = math.ceil(q * m - _TIE_EPS) - 1
        n_high = m - math.ceil((1.0 - q) * m - _TIE_EPS)
        if n_low < 1:
            n_low = k
            flags |= 8
        if n_high < 1:
            n_high = k
            flags |= 8
    low = _take_sum(v, c, n_low) / n_low
    high = _take_sum(v[::-1], c[::-1], n_high) / n_high
    return low, high, flags


def bounds_from_counts(counts, z, s, y, order10) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros(N_OUT)
    cell = 2 * np.asarray(z, dtype=np.int64) + np.asarray(s, dtype=np.int64)
    n_cell = np.bincount(cell, weights=counts, minlength=4)
    s_cell = np.bincount(cell, weights=counts * y, minlength=4)
    n00, n01, n10, n11 = (int(round(v)) for v in n_cell)
    n0, n1 = n00 + n01, n10 + n11
    if n0 == 0 or n1 == 0 or n01 == 0:
        out[0] = 1.0
        return out
    rho0, rho1 = n01 / n0, n11 / n1
    mu11 = s_cell[3] / n11 if n11 > 0 else 0.0
    mu01 = s_cell[1] / n01
    mu10 = s_cell[2] / n10 if n10 > 0 else 0.0
    flags = 0
    if rho1 >= 1.0:
        q = 0.0
        flags |= 1
    else:
        q = (rho0 - rho1) / (1.0 - rho1)
        if q < 0.0:
            q, flags = 0.0, flags | 1
        elif q > 1.0:
            q, flags = 1.0, flags | 2
    if q > 0.0 and n10 == 0:
        out[0] = 1.0
        return out
    order10 = np.asarray(order10, dtype=np.int64)
    low, high, tflags = _trimmed(counts[order10], np.asarray(y)[order10], n10, q, mu10)
    wd = min(rho1 / rho0, 1.0)
    out[1:12] = (
        rho0, rho1, mu11, mu01, mu10, q, low, high,
        mu11 * wd + low * (1.0 - wd), mu11 * wd + high * (1.0 - wd), flags | tflags,
    )
    return out


def bounds_batch(counts, z, s, y, order10) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    return np.vstack([bounds_from_counts(row, z, s, y, order10) for row in counts]) \
        if len(counts) else np.zeros((0, N_OUT))

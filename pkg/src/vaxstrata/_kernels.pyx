# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bounds kernels.

Each kernel takes a vector of integer resample counts (one per observation;
all ones for the original sample) and returns the summary vector described
in :mod:`vaxstrata.kernels`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil

cnp.import_array()

cdef double TIE_EPS = 1e-9

cdef int N_OUT = 12


cdef void _trimmed(const long long[:] counts, const double[:] y,
                   const long long[:] order10, long long m, double q,
                   double mu10, double[:] out) noexcept nogil:
    # out[7] = low, out[8] = high, out[11] |= flags
    cdef Py_ssize_t j, n10 = order10.shape[0]
    cdef long long k, c, take, seen, jl, ju, n_low, n_high
    cdef bint ties = False
    cdef double prev = 0.0, acc, v
    cdef bint have_prev = False
    cdef int flags = 0

    if q <= 0.0:
        out[7] = mu10
        out[8] = mu10
        return
    for j in range(n10):
        c = counts[order10[j]]
        if c <= 0:
            continue
        if c > 1:
            ties = True
            break
        v = y[order10[j]]
        if have_prev and v == prev:
            ties = True
            break
        prev = v
        have_prev = True

    k = <long long>ceil(q * m - TIE_EPS)
    if k < 1:
        k = 1
    if k > m:
        k = m

    if ties:
        flags |= 4
        n_low = k
        n_high = k
    else:
        jl = <long long>ceil(q * m - TIE_EPS)
        ju = <long long>ceil((1.0 - q) * m - TIE_EPS)
        n_low = jl - 1
        n_high = m - ju
        if n_low < 1:
            n_low = k
            flags |= 8
        if n_high < 1:
            n_high = k
            flags |= 8

    acc = 0.0
    seen = 0
    for j in range(n10):
        if seen >= n_low:
            break
        c = counts[order10[j]]
        if c <= 0:
            continue
        take = c if c < n_low - seen else n_low - seen
        acc += take * y[order10[j]]
        seen += take
    out[7] = acc / n_low

    acc = 0.0
    seen = 0
    for j in range(n10 - 1, -1, -1):
        if seen >= n_high:
            break
        c = counts[order10[j]]
        if c <= 0:
            continue
        take = c if c < n_high - seen else n_high - seen
        acc += take * y[order10[j]]
        seen += take
    out[8] = acc / n_high
    out[11] = <double>(<int>out[11] | flags)


cdef void _bounds(const long long[:] counts, const signed char[:] z,
                  const signed char[:] s, const double[:] y,
                  const long long[:] order10, double[:] out) noexcept nogil:
    cdef Py_ssize_t i, n = counts.shape[0]
    cdef long long c, n0 = 0, n1 = 0, n01 = 0, n11 = 0, n10 = 0
    cdef double s01 = 0.0, s11 = 0.0, s10 = 0.0
    cdef double rho0, rho1, mu11, mu01, mu10, q, wd
    cdef int flags = 0

    for i in range(N_OUT):
        out[i] = 0.0
    for i in range(n):
        c = counts[i]
        if c == 0:
            continue
        if z[i] == 1:
            n1 += c
            if s[i] == 1:
                n11 += c
                s11 += c * y[i]
            else:
                n10 += c
                s10 += c * y[i]
        else:
            n0 += c
            if s[i] == 1:
                n01 += c
                s01 += c * y[i]
    if n0 == 0 or n1 == 0 or n01 == 0:
        out[0] = 1.0
        return
    rho0 = <double>n01 / n0
    rho1 = <double>n11 / n1
    mu11 = s11 / n11 if n11 > 0 else 0.0
    mu01 = s01 / n01
    mu10 = s10 / n10 if n10 > 0 else 0.0
    if rho1 >= 1.0:
        q = 0.0
        flags |= 1
    else:
        q = (rho0 - rho1) / (1.0 - rho1)
        if q < 0.0:
            q = 0.0
            flags |= 1
        elif q > 1.0:
            q = 1.0
            flags |= 2
    if q > 0.0 and n10 == 0:
        out[0] = 1.0
        return
    out[1] = rho0
    out[2] = rho1
    out[3] = mu11
    out[4] = mu01
    out[5] = mu10
    out[6] = q
    out[11] = flags
    _trimmed(counts, y, order10, n10, q, mu10, out)
    wd = rho1 / rho0
    if wd > 1.0:
        wd = 1.0
    out[9] = mu11 * wd + out[7] * (1.0 - wd)
    out[10] = mu11 * wd + out[8] * (1.0 - wd)


def bounds_from_counts(const long long[:] counts, const signed char[:] z,
                       const signed char[:] s, const double[:] y,
                       const long long[:] order10):
    out = np.zeros(N_OUT, dtype=np.float64)
    cdef double[:] ov = out
    with nogil:
        _bounds(counts, z, s, y, order10, ov)
    return out


def bounds_batch(const long long[:, :] counts, const signed char[:] z,
                 const signed char[:] s, const double[:] y,
                 const long long[:] order10):
    cdef Py_ssize_t b, nb = counts.shape[0]
    out = np.zeros((nb, N_OUT), dtype=np.float64)
    cdef double[:, :] ov = out
    with nogil:
        for b in range(nb):
            _bounds(counts[b], z, s, y, order10, ov[b])
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops; same signatures as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


def _real_view(a):
    # interleaved (re, im) pairs, one row per effect
    return np.ascontiguousarray(a).view(np.float64).reshape(a.shape[0], -1)


def effect_probabilities(effects, rho):
    cdef double[:, ::1] e = _real_view(effects)
    rt = np.ascontiguousarray(rho.T)
    v_arr = rt.view(np.float64).ravel().copy()
    v_arr[1::2] *= -1.0
    cdef double[::1] v = v_arr
    cdef int K = e.shape[0], m = e.shape[1], one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char trans = b"T"
    out = np.empty(K, dtype=np.float64)
    cdef double[::1] p = out
    if K == 0:
        return out
    # Re tr(E rho) as a real dot product; row-major (K, m) is column-major (m, K)
    with nogil:
        dgemv(&trans, &m, &K, &alpha, &e[0, 0], &m, &v[0], &one, &beta, &p[0], &one)
    return out


def weighted_effect_sum(effects, const double[::1] weights):
    cdef double[:, ::1] e = _real_view(effects)
    cdef int K = e.shape[0], m = e.shape[1], one = 1
    cdef Py_ssize_t d = effects.shape[1]
    cdef double alpha = 1.0, beta = 0.0
    cdef char trans = b"N"
    acc_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] r = acc_arr
    if K > 0:
        with nogil:
            dgemv(&trans, &m, &K, &alpha, &e[0, 0], &m, &weights[0], &one, &beta, &r[0], &one)
    return acc_arr.view(np.complex128).reshape(d, d)


def log_likelihood(const double[::1] counts, const double[::1] probs, double floor):
    cdef Py_ssize_t k, K = counts.shape[0]
    cdef double acc = 0.0, p
    with nogil:
        for k in range(K):
            if counts[k] > 0:
                p = probs[k]
                if p < floor:
                    p = floor
                acc = acc + counts[k] * log(p)
    return acc


def tally(const long long[::1] setting_ids, const long long[::1] outcome_ids, Py_ssize_t n_settings, Py_ssize_t n_outcomes):
    out = np.zeros((n_settings, n_outcomes), dtype=np.int64)
    cdef long long[:, ::1] c = out
    cdef Py_ssize_t s, n = setting_ids.shape[0]
    with nogil:
        for s in range(n):
            c[setting_ids[s], outcome_ids[s]] += 1
    return out


def parity_products(const long long[:, ::1] bits):
    cdef Py_ssize_t s, q, n = bits.shape[0], m = bits.shape[1]
    cdef long long acc
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] r = out
    with nogil:
        for s in range(n):
            acc = 0
            for q in range(m):
                acc = acc + bits[s, q]
            r[s] = 1 - 2 * (acc % 2)
    return out

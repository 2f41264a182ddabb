# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled enumeration kernel for the exact posterior-mean detector.

Walks all 2^K bit vectors per symbol in Gray-code order, updating the log
weight incrementally (O(K) per hypothesis), with a two-pass max-shifted
accumulation for numerical stability. Matches the numpy fallback bit-for-bit
up to floating point rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, INFINITY

BACKEND = "compiled"


def io_soft_outputs(corr, quad):
    """Soft outputs of the exact posterior-mean detector.

    Same contract as the numpy fallback: ``corr`` is (T, K) with log weight
    ``b @ corr[t] - b @ quad @ b`` for bit vector b, ``quad`` is the scaled
    (K, K) Gram matrix. Returns the (T, K) posterior means.
    """
    corr_arr = np.ascontiguousarray(corr, dtype=np.float64)
    quad_arr = np.ascontiguousarray(quad, dtype=np.float64)
    if corr_arr.ndim != 2:
        raise ValueError("corr must have shape (T, K)")
    n_sym = corr_arr.shape[0]
    n_users = corr_arr.shape[1]
    if quad_arr.shape[0] != n_users or quad_arr.shape[1] != n_users:
        raise ValueError("quad must have shape (K, K)")
    if n_users > 62:
        raise ValueError("enumeration kernel supports at most 62 users")

    soft = np.empty((n_sym, n_users), dtype=np.float64)
    _enumerate_all(corr_arr, quad_arr, soft)
    return soft


cdef void _enumerate_all(double[:, ::1] corr, double[:, ::1] quad,
                         double[:, ::1] soft) noexcept:
    cdef Py_ssize_t n_sym = corr.shape[0]
    cdef Py_ssize_t n_users = corr.shape[1]
    cdef long long n_hyp = (<long long> 1) << n_users
    cdef Py_ssize_t t, k, i
    cdef long long j, g
    cdef double lin0, quad0, lin, qval, log_w, max_log, w, tot, delta
    cdef double[::1] row_sums = np.empty(n_users, dtype=np.float64)
    cdef double[::1] v = np.empty(n_users, dtype=np.float64)
    cdef double[::1] num = np.empty(n_users, dtype=np.float64)
    cdef signed char[::1] b = np.empty(n_users, dtype=np.int8)

    # Initial state: all bits -1.
    quad0 = 0.0
    for k in range(n_users):
        row_sums[k] = 0.0
        for i in range(n_users):
            row_sums[k] += quad[k, i]
            quad0 += quad[k, i]

    for t in range(n_sym):
        lin0 = 0.0
        for k in range(n_users):
            lin0 -= corr[t, k]

        # Pass 1: maximum log weight over all hypotheses.
        for k in range(n_users):
            b[k] = -1
            v[k] = -row_sums[k]
        lin = lin0
        qval = quad0
        max_log = lin - qval
        for j in range(1, n_hyp):
            g = j
            i = 0
            while not (g & 1):
                g >>= 1
                i += 1
            # Flip bit i: delta = b_new - b_old = -2 b_old.
            delta = -2.0 * b[i]
            lin += delta * corr[t, i]
            qval += 2.0 * delta * v[i] + 4.0 * quad[i, i]
            for k in range(n_users):
                v[k] += delta * quad[k, i]
            b[i] = -b[i]
            log_w = lin - qval
            if log_w > max_log:
                max_log = log_w

        # Pass 2: accumulate shifted weights and per-user numerators.
        for k in range(n_users):
            b[k] = -1
            v[k] = -row_sums[k]
            num[k] = 0.0
        lin = lin0
        qval = quad0
        tot = 0.0
        w = exp(lin - qval - max_log)
        tot += w
        for k in range(n_users):
            num[k] -= w
        for j in range(1, n_hyp):
            g = j
            i = 0
            while not (g & 1):
                g >>= 1
                i += 1
            delta = -2.0 * b[i]
            lin += delta * corr[t, i]
            qval += 2.0 * delta * v[i] + 4.0 * quad[i, i]
            for k in range(n_users):
                v[k] += delta * quad[k, i]
            b[i] = -b[i]
            w = exp(lin - qval - max_log)
            tot += w
            for k in range(n_users):
                if b[k] > 0:
                    num[k] += w
                else:
                    num[k] -= w

        for k in range(n_users):
            soft[t, k] = num[k] / tot

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled versions of the hot kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libcpp.algorithm cimport nth_element, sort
from libcpp.vector cimport vector

cnp.import_array()


def local_wiener(double[:, ::1] padded, int window, double noise_var):
    cdef Py_ssize_t r = window // 2
    cdef Py_ssize_t h = padded.shape[0] - 2 * r
    cdef Py_ssize_t w = padded.shape[1] - 2 * r
    cdef double inv_n = 1.0 / (window * window)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, a, b
    cdef double c, s, mean_delta, var, t, mu, gain
    with nogil:
        for i in range(h):
            for j in range(w):
                c = padded[i + r, j + r]
                s = 0.0
                for a in range(window):
                    for b in range(window):
                        s += padded[i + a, j + b] - c
                mean_delta = s * inv_n
                var = 0.0
                for a in range(window):
                    for b in range(window):
                        t = padded[i + a, j + b] - c - mean_delta
                        var += t * t
                var *= inv_n
                mu = c + mean_delta
                gain = var - noise_var
                if gain < 0.0:
                    gain = 0.0
                gain /= var if var > 1e-12 else 1e-12
                out[i, j] = mu + gain * (c - mu)
    return out_arr


def phase_fold(double[:, ::1] residual, int period):
    cdef Py_ssize_t h = residual.shape[0], w = residual.shape[1]
    sums_arr = np.zeros((period, period), dtype=np.float64)
    cdef double[:, ::1] sums = sums_arr
    cdef Py_ssize_t i, j, pi = 0, pj
    with nogil:
        for i in range(h):
            pj = 0
            for j in range(w):
                sums[pi, pj] += residual[i, j]
                pj += 1
                if pj == period:
                    pj = 0
            pi += 1
            if pi == period:
                pi = 0
    # bin (a, b) holds ceil((h - a) / P) * ceil((w - b) / P) pixels
    rows = (h - np.arange(period) + period - 1) // period
    cols = (w - np.arange(period) + period - 1) // period
    return sums_arr / np.outer(rows, cols)


cdef void _mean_cov(double[:, ::1] x, vector[Py_ssize_t]& idx,
                    double* m, double* s) noexcept nogil:
    cdef Py_ssize_t k, n = idx.size()
    cdef double mx = 0.0, my = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0, dx, dy
    for k in range(n):
        mx += x[idx[k], 0]
        my += x[idx[k], 1]
    mx /= n
    my /= n
    for k in range(n):
        dx = x[idx[k], 0] - mx
        dy = x[idx[k], 1] - my
        sxx += dx * dx
        sxy += dx * dy
        syy += dy * dy
    m[0] = mx
    m[1] = my
    s[0] = sxx / n
    s[1] = sxy / n
    s[2] = syy / n


cdef void _h_smallest(double[:, ::1] x, double* m, double* s, Py_ssize_t h,
                      vector[double]& d2, vector[double]& work,
                      vector[Py_ssize_t]& out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], k
    cdef double ridge = 1e-10 * 0.5 * (s[0] + s[2]) + 1e-300
    cdef double a = s[0] + ridge, b = s[1], c = s[2] + ridge
    cdef double det = a * c - b * b, dx, dy, tau
    for k in range(n):
        dx = x[k, 0] - m[0]
        dy = x[k, 1] - m[1]
        d2[k] = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
        work[k] = d2[k]
    nth_element(work.begin(), work.begin() + (h - 1), work.end())
    tau = work[h - 1]
    out.clear()
    for k in range(n):
        if d2[k] < tau:
            out.push_back(k)
    for k in range(n):
        if <Py_ssize_t>out.size() >= h:
            break
        if d2[k] == tau:
            out.push_back(k)


def mcd_search(double[:, ::1] x, Py_ssize_t h, cnp.int64_t[:, ::1] starts,
               int max_steps=100):
    cdef Py_ssize_t n = x.shape[0], n_starts = starts.shape[0], st, k, step
    cdef vector[double] d2 = vector[double](n)
    cdef vector[double] work = vector[double](n)
    cdef vector[Py_ssize_t] idx, new_idx, best_idx
    cdef double m[2]
    cdef double s[3]
    cdef double m_new[2]
    cdef double s_new[3]
    cdef double best_m[2]
    cdef double best_s[3]
    cdef double det, det_new, best_det = INFINITY
    cdef bint have_best = False
    with nogil:
        for st in range(n_starts):
            idx.clear()
            for k in range(starts.shape[1]):
                idx.push_back(starts[st, k])
            _mean_cov(x, idx, m, s)
            det = INFINITY
            for step in range(max_steps):
                _h_smallest(x, m, s, h, d2, work, new_idx)
                _mean_cov(x, new_idx, m_new, s_new)
                det_new = s_new[0] * s_new[2] - s_new[1] * s_new[1]
                if det_new >= det:
                    break
                m[0] = m_new[0]; m[1] = m_new[1]
                s[0] = s_new[0]; s[1] = s_new[1]; s[2] = s_new[2]
                det = det_new
                idx = new_idx
            if not have_best or det < best_det:
                have_best = True
                best_det = det
                best_m[0] = m[0]; best_m[1] = m[1]
                best_s[0] = s[0]; best_s[1] = s[1]; best_s[2] = s[2]
                best_idx = idx
        sort(best_idx.begin(), best_idx.end())
    support = np.empty(best_idx.size(), dtype=np.int64)
    for k in range(<Py_ssize_t>best_idx.size()):
        support[k] = best_idx[k]
    mean = np.array([best_m[0], best_m[1]])
    cov = np.array([[best_s[0], best_s[1]], [best_s[1], best_s[2]]])
    return mean, cov, best_det, support

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror :mod:`mvopl._pykernels`."""
import numpy as np

from libc.math cimport exp, fabs, log, INFINITY, M_PI

LOG_2PI = log(2.0 * M_PI)


def diag_gauss_logpdf(const double[:, ::1] actions, const double[::1] mean,
                      const double[::1] sigmas):
    cdef Py_ssize_t n = actions.shape[0]
    cdef Py_ssize_t d = actions.shape[1]
    cdef Py_ssize_t i, k
    cdef double norm_const = 0.0, quad, z
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    if mean.shape[0] != d or sigmas.shape[0] != d:
        raise ValueError("dimension mismatch between actions and Gaussian parameters")
    for k in range(d):
        norm_const += log(sigmas[k])
    norm_const += 0.5 * d * LOG_2PI
    for i in range(n):
        quad = 0.0
        for k in range(d):
            z = (actions[i, k] - mean[k]) / sigmas[k]
            quad += z * z
        res[i] = -0.5 * quad - norm_const
    return out


def weight_summary(const double[::1] log_w, const double[::1] rewards):
    cdef Py_ssize_t n = log_w.shape[0]
    cdef Py_ssize_t i
    cdef double shift = -INFINITY
    cdef double w, wa, wr, r, dev
    cdef double s_w = 0.0, s_w2 = 0.0, m_w = 0.0, s_wr = 0.0
    cdef double s_wa = 0.0, s_wa2 = 0.0, m_wa = 0.0
    cdef double ss_ips = 0.0, ss_snips = 0.0, ss_w = 0.0
    cdef double ips, snips, mean_w
    if rewards.shape[0] != n:
        raise ValueError("weights and rewards differ in length")
    if n == 0:
        raise ValueError("empty input")
    for i in range(n):
        if log_w[i] > shift:
            shift = log_w[i]
    if shift == -INFINITY:
        return (shift, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    buf = np.empty(n, dtype=np.float64)
    cdef double[::1] ws = buf
    for i in range(n):
        w = exp(log_w[i] - shift)
        ws[i] = w
        r = rewards[i]
        wr = w * r
        wa = fabs(wr)
        s_w += w
        s_w2 += w * w
        if w > m_w:
            m_w = w
        s_wr += wr
        s_wa += wa
        if wa > m_wa:
            m_wa = wa
    ips = s_wr / n
    snips = s_wr / s_w
    mean_w = s_w / n
    for i in range(n):
        w = ws[i]
        r = rewards[i]
        dev = w * r - ips
        ss_ips += dev * dev
        dev = w * (r - snips)
        ss_snips += dev * dev
        dev = w - mean_w
        ss_w += dev * dev
        if m_wa > 0.0:
            # divide rather than multiply by 1 / m_wa, which overflows for subnormal m_wa
            dev = fabs(w * r) / m_wa
            s_wa2 += dev * dev
    return (shift, s_w, s_w2, m_w, s_wr, s_wa, s_wa2, m_wa, ss_ips, ss_snips, ss_w)

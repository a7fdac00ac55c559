# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fusion kernels.

Drop-in twin of ``_pure``: same signatures, same cache layouts, same math.
The matrices involved are small (graph nodes x shared dim), so the win
comes from cutting per-call Python and dispatch overhead in the training
inner loop, not from BLAS-scale arithmetic.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND = "compiled"


cdef void _mm_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept nogil:
    # out = a @ b
    cdef Py_ssize_t i, j, p
    cdef double acc
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for p in range(a.shape[1]):
                acc = acc + a[i, p] * b[p, j]
            out[i, j] = acc


cdef void _mm_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept nogil:
    # out = a.T @ b
    cdef Py_ssize_t i, j, p
    cdef double acc
    for i in range(a.shape[1]):
        for j in range(b.shape[1]):
            acc = 0.0
            for p in range(a.shape[0]):
                acc = acc + a[p, i] * b[p, j]
            out[i, j] = acc


cdef void _mm_nt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept nogil:
    # out = a @ b.T
    cdef Py_ssize_t i, j, p
    cdef double acc
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            acc = 0.0
            for p in range(a.shape[1]):
                acc = acc + a[i, p] * b[j, p]
            out[i, j] = acc


cdef inline cnp.ndarray _c64(object x):
    return np.ascontiguousarray(x, dtype=np.float64)


def gcn2_forward(object a_in, object h_in, object w1_in, object b1_in,
                 object w2_in, object b2_in):
    cdef cnp.ndarray a = _c64(a_in)
    cdef cnp.ndarray h = _c64(h_in)
    cdef cnp.ndarray w1 = _c64(w1_in)
    cdef cnp.ndarray b1 = _c64(b1_in)
    cdef cnp.ndarray w2 = _c64(w2_in)
    cdef cnp.ndarray b2 = _c64(b2_in)
    cdef Py_ssize_t n = a.shape[0], d = h.shape[1]
    cdef cnp.ndarray ah = np.empty((n, d))
    cdef cnp.ndarray u1 = np.empty((n, d))
    cdef cnp.ndarray x1 = np.empty((n, d))
    cdef cnp.ndarray ax1 = np.empty((n, d))
    cdef cnp.ndarray out = np.empty((n, d))
    cdef double[:, ::1] ah_v = ah, u1_v = u1, x1_v = x1, ax1_v = ax1, out_v = out
    cdef double[::1] b1_v = b1, b2_v = b2
    cdef Py_ssize_t i, j
    _mm_nn(a, h, ah_v)
    _mm_nn(ah, w1, u1_v)
    for i in range(n):
        for j in range(d):
            u1_v[i, j] = u1_v[i, j] + b1_v[j]
            x1_v[i, j] = u1_v[i, j] if u1_v[i, j] > 0.0 else 0.0
    _mm_nn(a, x1, ax1_v)
    _mm_nn(ax1, w2, out_v)
    for i in range(n):
        for j in range(d):
            out_v[i, j] = out_v[i, j] + b2_v[j]
    return out, (ah, u1, x1, ax1)


def gcn2_backward(object d_out_in, object a_in, object w1_in, object w2_in, tuple cache):
    cdef cnp.ndarray d_out = _c64(d_out_in)
    cdef cnp.ndarray a = _c64(a_in)
    cdef cnp.ndarray w1 = _c64(w1_in)
    cdef cnp.ndarray w2 = _c64(w2_in)
    cdef cnp.ndarray ah = _c64(cache[0])
    cdef cnp.ndarray u1 = _c64(cache[1])
    cdef cnp.ndarray x1 = _c64(cache[2])
    cdef cnp.ndarray ax1 = _c64(cache[3])
    cdef Py_ssize_t n = a.shape[0], d = d_out.shape[1]
    cdef cnp.ndarray d_w2 = np.empty((d, d))
    cdef cnp.ndarray d_b2 = np.empty(d)
    cdef cnp.ndarray at_dout = np.empty((n, d))
    cdef cnp.ndarray d_x1 = np.empty((n, d))
    cdef cnp.ndarray d_u1 = np.empty((n, d))
    cdef cnp.ndarray d_w1 = np.empty((d, d))
    cdef cnp.ndarray d_b1 = np.empty(d)
    cdef cnp.ndarray du1_w1t = np.empty((n, d))
    cdef cnp.ndarray d_h = np.empty((n, d))
    cdef double[:, ::1] d_out_v = d_out, u1_v = u1, d_x1_v = d_x1, d_u1_v = d_u1
    cdef double[::1] d_b1_v = d_b1, d_b2_v = d_b2
    cdef Py_ssize_t i, j
    cdef double acc
    _mm_tn(ax1, d_out, d_w2)
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc = acc + d_out_v[i, j]
        d_b2_v[j] = acc
    _mm_tn(a, d_out, at_dout)
    _mm_nt(at_dout, w2, d_x1)
    for i in range(n):
        for j in range(d):
            d_u1_v[i, j] = d_x1_v[i, j] if u1_v[i, j] > 0.0 else 0.0
    _mm_tn(ah, d_u1, d_w1)
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc = acc + d_u1_v[i, j]
        d_b1_v[j] = acc
    _mm_nt(d_u1, w1, du1_w1t)
    _mm_tn(a, du1_w1t, d_h)
    return d_h, d_w1, d_b1, d_w2, d_b2


cdef void _stage_forward(double[:, ::1] x, double[::1] y,
                         double[:, ::1] wq, double[:, ::1] wk, double[:, ::1] wv,
                         double inv_sqrt_d,
                         double[:, ::1] q, double[::1] k, double[::1] w,
                         double[:, ::1] v, double[:, ::1] o) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, p
    cdef double acc, mx, z
    _mm_nn(x, wq, q)
    _mm_nn(x, wv, v)
    for j in range(d):
        acc = 0.0
        for p in range(d):
            acc = acc + y[p] * wk[p, j]
        k[j] = acc
    mx = -1e300
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc = acc + q[i, j] * k[j]
        w[i] = acc * inv_sqrt_d
        if w[i] > mx:
            mx = w[i]
    z = 0.0
    for i in range(n):
        w[i] = exp(w[i] - mx)
        z = z + w[i]
    for i in range(n):
        w[i] = w[i] / z
    for i in range(n):
        for j in range(d):
            o[i, j] = w[i] * v[i, j]


def attn_fuse_forward(object e_v_in, object h_v_in, object h_t_in,
                      object wq_in, object wk_in, object wv_in):
    cdef cnp.ndarray e_v = _c64(e_v_in)
    cdef cnp.ndarray h_v = _c64(h_v_in)
    cdef cnp.ndarray h_t = _c64(h_t_in)
    cdef cnp.ndarray wq = _c64(wq_in)
    cdef cnp.ndarray wk = _c64(wk_in)
    cdef cnp.ndarray wv = _c64(wv_in)
    cdef Py_ssize_t n = e_v.shape[0], d = e_v.shape[1]
    cdef double inv_sqrt_d = 1.0 / sqrt(<double> d)
    cdef cnp.ndarray q1 = np.empty((n, d)), v1 = np.empty((n, d)), o1 = np.empty((n, d))
    cdef cnp.ndarray q2 = np.empty((n, d)), v2 = np.empty((n, d)), o2 = np.empty((n, d))
    cdef cnp.ndarray k1 = np.empty(d), k2 = np.empty(d)
    cdef cnp.ndarray w1 = np.empty(n), w2 = np.empty(n)
    cdef cnp.ndarray e = np.empty(d)
    cdef double[:, ::1] o2_v = o2
    cdef double[::1] e_view = e
    cdef Py_ssize_t i, j
    cdef double acc
    _stage_forward(e_v, h_v, wq, wk, wv, inv_sqrt_d, q1, k1, w1, v1, o1)
    _stage_forward(o1, h_t, wq, wk, wv, inv_sqrt_d, q2, k2, w2, v2, o2)
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc = acc + o2_v[i, j]
        e_view[j] = acc / n
    return e, (q1, k1, w1, v1, o1, q2, k2, w2, v2)


cdef void _stage_backward(double[:, ::1] d_o, double[:, ::1] x, double[::1] y,
                          double[:, ::1] wq, double[:, ::1] wk, double[:, ::1] wv,
                          double[:, ::1] q, double[::1] k, double[::1] w,
                          double[:, ::1] v, double inv_sqrt_d,
                          double[:, ::1] d_x, double[::1] d_y,
                          double[:, ::1] d_wq, double[:, ::1] d_wk, double[:, ::1] d_wv,
                          double[:, ::1] d_v, double[:, ::1] d_q, double[::1] d_k,
                          double[::1] d_w) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, p
    cdef double dot, acc
    for i in range(n):
        for j in range(d):
            d_v[i, j] = w[i] * d_o[i, j]
    _mm_tn(x, d_v, d_wv)
    _mm_nt(d_v, wv, d_x)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc = acc + d_o[i, j] * v[i, j]
        d_w[i] = acc
    dot = 0.0
    for i in range(n):
        dot = dot + w[i] * d_w[i]
    for i in range(n):
        d_w[i] = w[i] * (d_w[i] - dot)
    for i in range(n):
        for j in range(d):
            d_q[i, j] = d_w[i] * k[j] * inv_sqrt_d
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc = acc + d_w[i] * q[i, j]
        d_k[j] = acc * inv_sqrt_d
    _mm_tn(x, d_q, d_wq)
    # d_x += d_q @ wq.T
    for i in range(n):
        for j in range(d):
            acc = 0.0
            for p in range(d):
                acc = acc + d_q[i, p] * wq[j, p]
            d_x[i, j] = d_x[i, j] + acc
    for i in range(d):
        for j in range(d):
            d_wk[i, j] = y[i] * d_k[j]
    for j in range(d):
        acc = 0.0
        for p in range(d):
            acc = acc + d_k[p] * wk[j, p]
        d_y[j] = acc


def attn_fuse_backward(object d_e_in, object e_v_in, object h_v_in, object h_t_in,
                       object wq_in, object wk_in, object wv_in, tuple cache):
    cdef cnp.ndarray d_e = _c64(d_e_in)
    cdef cnp.ndarray e_v = _c64(e_v_in)
    cdef cnp.ndarray h_v = _c64(h_v_in)
    cdef cnp.ndarray h_t = _c64(h_t_in)
    cdef cnp.ndarray wq = _c64(wq_in)
    cdef cnp.ndarray wk = _c64(wk_in)
    cdef cnp.ndarray wv = _c64(wv_in)
    cdef cnp.ndarray q1 = _c64(cache[0]), k1 = _c64(cache[1]), w1 = _c64(cache[2])
    cdef cnp.ndarray v1 = _c64(cache[3]), o1 = _c64(cache[4])
    cdef cnp.ndarray q2 = _c64(cache[5]), k2 = _c64(cache[6]), w2 = _c64(cache[7])
    cdef cnp.ndarray v2 = _c64(cache[8])
    cdef Py_ssize_t n = e_v.shape[0], d = e_v.shape[1]
    cdef double inv_sqrt_d = 1.0 / sqrt(<double> d)
    cdef cnp.ndarray d_o2 = np.empty((n, d))
    cdef cnp.ndarray d_o1 = np.empty((n, d)), d_e_v = np.empty((n, d))
    cdef cnp.ndarray d_h_t = np.empty(d), d_h_v = np.empty(d)
    cdef cnp.ndarray d_wq_a = np.empty((d, d)), d_wk_a = np.empty((d, d)), d_wv_a = np.empty((d, d))
    cdef cnp.ndarray d_wq_b = np.empty((d, d)), d_wk_b = np.empty((d, d)), d_wv_b = np.empty((d, d))
    cdef cnp.ndarray s_dv = np.empty((n, d)), s_dq = np.empty((n, d))
    cdef cnp.ndarray s_dk = np.empty(d), s_dw = np.empty(n)
    cdef double[:, ::1] d_o2_v = d_o2
    cdef double[::1] d_e_view = d_e
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(d):
            d_o2_v[i, j] = d_e_view[j] / n
    _stage_backward(d_o2, o1, h_t, wq, wk, wv, q2, k2, w2, v2, inv_sqrt_d,
                    d_o1, d_h_t, d_wq_a, d_wk_a, d_wv_a, s_dv, s_dq, s_dk, s_dw)
    _stage_backward(d_o1, e_v, h_v, wq, wk, wv, q1, k1, w1, v1, inv_sqrt_d,
                    d_e_v, d_h_v, d_wq_b, d_wk_b, d_wv_b, s_dv, s_dq, s_dk, s_dw)
    return (d_e_v, d_h_v, d_h_t,
            np.add(d_wq_a, d_wq_b), np.add(d_wk_a, d_wk_b), np.add(d_wv_a, d_wv_b))

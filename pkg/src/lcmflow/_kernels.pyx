# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``lcmflow._pure`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline Py_ssize_t _clampi(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


cdef inline void _cr_weights(double t, double* w) noexcept nogil:
    # Catmull-Rom (a = -0.5) weights for taps at -1, 0, 1, 2
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    w[0] = -0.5 * t3 + t2 - 0.5 * t
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w[3] = 0.5 * t3 - 0.5 * t2


def bicubic_sample(const double[:, :, ::1] fields, const double[:, ::1] xs,
                   const double[:, ::1] ys):
    cdef Py_ssize_t nf = fields.shape[0]
    cdef Py_ssize_t h = fields.shape[1]
    cdef Py_ssize_t w = fields.shape[2]
    cdef Py_ssize_t oh = xs.shape[0]
    cdef Py_ssize_t ow = xs.shape[1]
    out_arr = np.empty((nf, oh, ow), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double wx[4]
    cdef double wy[4]
    cdef Py_ssize_t cols[4]
    cdef Py_ssize_t rows[4]
    cdef Py_ssize_t i, j, f, a, b, x0, y0
    cdef double x, y, acc, row
    with nogil:
        for i in range(oh):
            for j in range(ow):
                x = xs[i, j]
                y = ys[i, j]
                if x < 0.0:
                    x = 0.0
                elif x > w - 1:
                    x = w - 1
                if y < 0.0:
                    y = 0.0
                elif y > h - 1:
                    y = h - 1
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                _cr_weights(x - x0, wx)
                _cr_weights(y - y0, wy)
                for a in range(4):
                    cols[a] = _clampi(x0 - 1 + a, w)
                    rows[a] = _clampi(y0 - 1 + a, h)
                for f in range(nf):
                    acc = 0.0
                    for b in range(4):
                        row = 0.0
                        for a in range(4):
                            row = row + wx[a] * fields[f, rows[b], cols[a]]
                        acc = acc + wy[b] * row
                    out[f, i, j] = acc
    return out_arr


def stencil_apply(const double[:, ::1] center, const double[:, :, ::1] coef,
                  const long[:, ::1] offsets, const double[:, ::1] x,
                  bint transpose=False):
    cdef Py_ssize_t h = x.shape[0]
    cdef Py_ssize_t w = x.shape[1]
    cdef Py_ssize_t nk = offsets.shape[0]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, ni, nj, dx, dy
    cdef double acc, xv
    with nogil:
        if not transpose:
            for i in range(h):
                for j in range(w):
                    acc = center[i, j] * x[i, j]
                    for k in range(nk):
                        dx = offsets[k, 0]
                        dy = offsets[k, 1]
                        ni = i + dy
                        nj = j + dx
                        if ni >= 0 and ni < h and nj >= 0 and nj < w:
                            acc = acc + coef[i, j, k] * x[ni, nj]
                    out[i, j] = acc
        else:
            for i in range(h):
                for j in range(w):
                    out[i, j] = center[i, j] * x[i, j]
            for i in range(h):
                for j in range(w):
                    xv = x[i, j]
                    for k in range(nk):
                        dx = offsets[k, 0]
                        dy = offsets[k, 1]
                        ni = i + dy
                        nj = j + dx
                        if ni >= 0 and ni < h and nj >= 0 and nj < w:
                            out[ni, nj] = out[ni, nj] + coef[i, j, k] * xv
    return out_arr


def diffusion_apply(const double[:, ::1] wx, const double[:, ::1] wy,
                    const double[:, ::1] x):
    cdef Py_ssize_t h = x.shape[0]
    cdef Py_ssize_t w = x.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double flux
    with nogil:
        for i in range(h):
            for j in range(w - 1):
                flux = wx[i, j] * (x[i, j] - x[i, j + 1])
                out[i, j] = out[i, j] + flux
                out[i, j + 1] = out[i, j + 1] - flux
        for i in range(h - 1):
            for j in range(w):
                flux = wy[i, j] * (x[i, j] - x[i + 1, j])
                out[i, j] = out[i, j] + flux
                out[i + 1, j] = out[i + 1, j] - flux
    return out_arr


def sor_sweeps(const int[::1] indptr, const int[::1] indices, const double[::1] data,
               const double[::1] b, double[::1] x, double omega, int iters):
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t it, r, p, c
    cdef double diag, acc
    with nogil:
        for it in range(iters):
            for r in range(n):
                acc = b[r]
                diag = 0.0
                for p in range(indptr[r], indptr[r + 1]):
                    c = indices[p]
                    if c == r:
                        diag = diag + data[p]
                    else:
                        acc = acc - data[p] * x[c]
                if diag != 0.0:
                    x[r] = (1.0 - omega) * x[r] + omega * acc / diag
    return np.asarray(x)


cdef void _gather_pass(Py_ssize_t n, Py_ssize_t nk, const double* center, double sign,
                       const double* coef, const int* nbr, const double* xu,
                       const double* xv, double* yu, double* yv) noexcept nogil:
    # y = center * x + sign * sum_k coef[p, k] * x[nbr[p, k]]
    cdef Py_ssize_t p, k, q
    cdef double au, av, c
    for p in range(n):
        au = 0.0
        av = 0.0
        for k in range(nk):
            q = nbr[p * nk + k]
            c = coef[p * nk + k]
            au = au + c * xu[q]
            av = av + c * xv[q]
        yu[p] = center[p] * xu[p] + sign * au
        yv[p] = center[p] * xv[p] + sign * av


cdef void _diff_pass(Py_ssize_t n, Py_ssize_t nk, const double* coef, const int* nbr,
                     const double* xu, const double* xv, double* yu, double* yv) noexcept nogil:
    # y = sum_k coef[p, k] * (x[p] - x[nbr[p, k]]); exactly zero on constant input
    cdef Py_ssize_t p, k, q
    cdef double au, av, c
    for p in range(n):
        au = 0.0
        av = 0.0
        for k in range(nk):
            q = nbr[p * nk + k]
            c = coef[p * nk + k]
            au = au + c * (xu[p] - xu[q])
            av = av + c * (xv[p] - xv[q])
        yu[p] = au
        yv[p] = av


def ring_smooth_apply(const double[::1] center, const double[:, ::1] lap,
                      const double[:, ::1] t, const double[:, ::1] lap_t,
                      const double[:, ::1] t_t, const double[::1] psi,
                      const int[:, ::1] nbr, const double[::1] xu, const double[::1] xv):
    cdef Py_ssize_t n = center.shape[0]
    cdef Py_ssize_t nk = nbr.shape[1]
    cdef Py_ssize_t p
    cdef double[::1] minus = -np.ones(n)
    au_arr = np.zeros(n + 1)
    av_arr = np.zeros(n + 1)
    bu_arr = np.zeros(n + 1)
    bv_arr = np.zeros(n + 1)
    cdef double[::1] au = au_arr, av = av_arr, bu = bu_arr, bv = bv_arr
    with nogil:
        # delta = L x (inputs carry a trailing ghost zero)
        _diff_pass(n, nk, &lap[0, 0], &nbr[0, 0], &xu[0], &xv[0], &au[0], &av[0])
        # s = psi * G delta
        _gather_pass(n, nk, &minus[0], 1.0, &t[0, 0], &nbr[0, 0], &au[0], &av[0], &bu[0], &bv[0])
        for p in range(n):
            bu[p] = psi[p] * bu[p]
            bv[p] = psi[p] * bv[p]
        # y = G^T s
        _gather_pass(n, nk, &minus[0], 1.0, &t_t[0, 0], &nbr[0, 0], &bu[0], &bv[0], &au[0], &av[0])
        # z = L^T y
        _gather_pass(n, nk, &center[0], -1.0, &lap_t[0, 0], &nbr[0, 0], &au[0], &av[0], &bu[0], &bv[0])
    return bu_arr[:n], bv_arr[:n]


def ring_delta_grad(const double[::1] center, const double[:, ::1] lap,
                    const double[:, ::1] t, const int[:, ::1] nbr,
                    const double[::1] xu, const double[::1] xv):
    cdef Py_ssize_t n = center.shape[0]
    cdef Py_ssize_t nk = nbr.shape[1]
    cdef double[::1] minus = -np.ones(n)
    du_arr = np.zeros(n + 1)
    dv_arr = np.zeros(n + 1)
    gu_arr = np.empty(n)
    gv_arr = np.empty(n)
    cdef double[::1] du = du_arr, dv = dv_arr, gu = gu_arr, gv = gv_arr
    with nogil:
        _diff_pass(n, nk, &lap[0, 0], &nbr[0, 0], &xu[0], &xv[0], &du[0], &dv[0])
        _gather_pass(n, nk, &minus[0], 1.0, &t[0, 0], &nbr[0, 0], &du[0], &dv[0], &gu[0], &gv[0])
    return du_arr[:n], dv_arr[:n], gu_arr, gv_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``.

Loops run over the leading spatial (or wavenumber) index with OpenMP when the
extension was built with it; no reductions, so results do not depend on the
thread count.
"""

from cython.parallel cimport prange

import numpy as np

NAME = "cython"

_num_threads = 1


def set_num_threads(int n):
    global _num_threads
    _num_threads = max(1, n)


def contract(double[:, :, :, ::1] a, double[:, :, :, :, ::1] g,
             double[:, :, :, ::1] out, bint transpose=False, bint accumulate=False):
    cdef Py_ssize_t nx = a.shape[1], ny = a.shape[2], nz = a.shape[3]
    cdef Py_ssize_t i, x, y, z
    cdef double r0, r1, r2, a0, a1, a2
    cdef int nt = _num_threads
    for x in prange(nx, nogil=True, num_threads=nt, schedule="static"):
        for y in range(ny):
            for z in range(nz):
                a0 = a[0, x, y, z]
                a1 = a[1, x, y, z]
                a2 = a[2, x, y, z]
                if transpose:
                    r0 = a0 * g[0, 0, x, y, z] + a1 * g[1, 0, x, y, z] + a2 * g[2, 0, x, y, z]
                    r1 = a0 * g[0, 1, x, y, z] + a1 * g[1, 1, x, y, z] + a2 * g[2, 1, x, y, z]
                    r2 = a0 * g[0, 2, x, y, z] + a1 * g[1, 2, x, y, z] + a2 * g[2, 2, x, y, z]
                else:
                    r0 = a0 * g[0, 0, x, y, z] + a1 * g[0, 1, x, y, z] + a2 * g[0, 2, x, y, z]
                    r1 = a0 * g[1, 0, x, y, z] + a1 * g[1, 1, x, y, z] + a2 * g[1, 2, x, y, z]
                    r2 = a0 * g[2, 0, x, y, z] + a1 * g[2, 1, x, y, z] + a2 * g[2, 2, x, y, z]
                if accumulate:
                    out[0, x, y, z] += r0
                    out[1, x, y, z] += r1
                    out[2, x, y, z] += r2
                else:
                    out[0, x, y, z] = r0
                    out[1, x, y, z] = r1
                    out[2, x, y, z] = r2
    return out.base if out.base is not None else out


def project_dealias(double complex[:, :, :, ::1] w, const double[::1] kx,
                    const double[::1] ky, const double[::1] kz,
                    const double[:, :, ::1] inv_k2, const double[:, :, ::1] mask):
    cdef Py_ssize_t nx = w.shape[1], ny = w.shape[2], nz = w.shape[3]
    cdef Py_ssize_t x, y, z
    cdef double complex s
    cdef double m
    cdef int nt = _num_threads
    for x in prange(nx, nogil=True, num_threads=nt, schedule="static"):
        for y in range(ny):
            for z in range(nz):
                m = mask[x, y, z]
                if m == 0.0:
                    w[0, x, y, z] = 0
                    w[1, x, y, z] = 0
                    w[2, x, y, z] = 0
                    continue
                s = (kx[x] * w[0, x, y, z] + ky[y] * w[1, x, y, z]
                     + kz[z] * w[2, x, y, z]) * inv_k2[x, y, z]
                w[0, x, y, z] = (w[0, x, y, z] - kx[x] * s) * m
                w[1, x, y, z] = (w[1, x, y, z] - ky[y] * s) * m
                w[2, x, y, z] = (w[2, x, y, z] - kz[z] * s) * m
    return w.base if w.base is not None else w


def _as_real(a):
    # interleaved (re, im) view: the decay factor is real, so each part is
    # scaled independently and no complex multiply is needed
    return a.view(np.float64)


def if_euler(v, n0, decay, double dt, out):
    _if_euler(_as_real(v), _as_real(n0), decay, dt, _as_real(out))
    return out


def if_ab2(v, n0, n1, decay, double dt, out):
    _if_ab2(_as_real(v), _as_real(n0), _as_real(n1), decay, dt, _as_real(out))
    return out


cdef void _if_euler(const double[:, :, :, ::1] v, const double[:, :, :, ::1] n0,
                    const double[:, :, ::1] decay, double dt, double[:, :, :, ::1] out) noexcept:
    cdef Py_ssize_t nc = v.shape[0], nx = v.shape[1], ny = v.shape[2], nz2 = v.shape[3]
    cdef Py_ssize_t c, x, y, z
    cdef int nt = _num_threads
    for x in prange(nx, nogil=True, num_threads=nt, schedule="static"):
        for c in range(nc):
            for y in range(ny):
                for z in range(nz2):
                    out[c, x, y, z] = decay[x, y, z >> 1] * (v[c, x, y, z] + dt * n0[c, x, y, z])


cdef void _if_ab2(const double[:, :, :, ::1] v, const double[:, :, :, ::1] n0,
                  const double[:, :, :, ::1] n1, const double[:, :, ::1] decay,
                  double dt, double[:, :, :, ::1] out) noexcept:
    cdef Py_ssize_t nc = v.shape[0], nx = v.shape[1], ny = v.shape[2], nz2 = v.shape[3]
    cdef Py_ssize_t c, x, y, z
    cdef double e
    cdef int nt = _num_threads
    for x in prange(nx, nogil=True, num_threads=nt, schedule="static"):
        for c in range(nc):
            for y in range(ny):
                for z in range(nz2):
                    e = decay[x, y, z >> 1]
                    out[c, x, y, z] = e * (v[c, x, y, z] + dt * (1.5 * n0[c, x, y, z] - 0.5 * (e * n1[c, x, y, z])))

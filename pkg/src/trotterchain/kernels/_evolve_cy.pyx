# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled evolution kernel: tight loop over phase/bond layers."""

import numpy as np

cimport numpy as cnp

ctypedef double complex cplx


cdef void _apply(cplx[::1] psi,
                 int[::1] kinds, cplx[:, ::1] zbuf,
                 int[::1] offs, int[::1] nbs, cplx[:, :, ::1] mats) noexcept nogil:
    cdef Py_ssize_t i, j, n, L, o, nb
    cdef cplx s0, s1
    n = kinds.shape[0]
    L = psi.shape[0]
    for i in range(n):
        if kinds[i] & 1:
            for j in range(L):
                psi[j] = psi[j] * zbuf[i, j]
        if kinds[i] & 2:
            o = offs[i]
            nb = nbs[i]
            for j in range(nb):
                s0 = psi[o + 2 * j]
                s1 = psi[o + 2 * j + 1]
                psi[o + 2 * j] = mats[i, j, 0] * s0 + mats[i, j, 1] * s1
                psi[o + 2 * j + 1] = mats[i, j, 2] * s0 + mats[i, j, 3] * s1


def run_program(psi, head, body, tail, rec_inv, int M, int dM, int half, occ):
    cdef cplx[::1] ps = psi
    cdef double[::1] oc = occ

    cdef int[::1] hk = head[0]
    cdef cplx[:, ::1] hz = head[1]
    cdef int[::1] ho = head[2]
    cdef int[::1] hn = head[3]
    cdef cplx[:, :, ::1] hm = head[4]

    cdef int[::1] bk = body[0]
    cdef cplx[:, ::1] bz = body[1]
    cdef int[::1] bo = body[2]
    cdef int[::1] bn = body[3]
    cdef cplx[:, :, ::1] bm = body[4]

    cdef int[::1] tk = tail[0]
    cdef cplx[:, ::1] tz = tail[1]
    cdef int[::1] to = tail[2]
    cdef int[::1] tn = tail[3]
    cdef cplx[:, :, ::1] tm = tail[4]

    cdef int[::1] rk = rec_inv[0]
    cdef cplx[:, ::1] rz = rec_inv[1]
    cdef int[::1] ro = rec_inv[2]
    cdef int[::1] rn = rec_inv[3]
    cdef cplx[:, :, ::1] rm = rec_inv[4]

    cdef bint record = oc.shape[0] > 0
    cdef bint need_inv = rk.shape[0] > 0
    cdef Py_ssize_t L = ps.shape[0]
    tmp_arr = np.empty(L, dtype=complex)
    cdef cplx[::1] tmp = tmp_arr
    cdef Py_ssize_t step, j
    cdef double acc

    with nogil:
        _apply(ps, hk, hz, ho, hn, hm)
        for step in range(1, M + 1):
            _apply(ps, bk, bz, bo, bn, bm)
            if record and step % dM == 0 and step < M:
                if need_inv:
                    for j in range(L):
                        tmp[j] = ps[j]
                    _apply(tmp, rk, rz, ro, rn, rm)
                    acc = 0.0
                    for j in range(half):
                        acc += tmp[j].real * tmp[j].real + tmp[j].imag * tmp[j].imag
                else:
                    acc = 0.0
                    for j in range(half):
                        acc += ps[j].real * ps[j].real + ps[j].imag * ps[j].imag
                oc[step / dM - 1] = acc
        _apply(ps, tk, tz, to, tn, tm)
    return psi

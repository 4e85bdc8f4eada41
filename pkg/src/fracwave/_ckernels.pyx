# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter-based mode Gaussians and the fused draw/split pass."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

from ._kernels_np import box_muller

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0, c1, c2, c3
    cdef int r
    c0 = c[0]; c1 = c[1]; c2 = c[2]; c3 = c[3]
    for r in range(10):
        if r:
            k0 = k0 + W0
            k1 = k1 + W1
        p0 = M0 * <uint64_t>c0
        p1 = M1 * <uint64_t>c2
        c0, c1, c2, c3 = (<uint32_t>(p1 >> 32)) ^ c1 ^ k0, <uint32_t>p1, (<uint32_t>(p0 >> 32)) ^ c3 ^ k1, <uint32_t>p0
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3


cdef inline bint _uniforms(uint64_t seed, int64_t j, int64_t k1, int64_t k2,
                           double* u1, double* u2) noexcept nogil:
    """Philox uniforms of the canonical member of the Hermitian pair; returns canonicity."""
    cdef bint canon = (j > 0) or (j == 0 and (k1 > 0 or (k1 == 0 and k2 >= 0)))
    cdef uint32_t c[4]
    if not canon:
        j = -j; k1 = -k1; k2 = -k2
    c[0] = <uint32_t>(<uint64_t>j); c[1] = <uint32_t>(<uint64_t>k1)
    c[2] = <uint32_t>(<uint64_t>k2); c[3] = 0
    _philox(c, <uint32_t>seed, <uint32_t>(seed >> 32))
    u1[0] = (<double>(c[0] >> 5) * 67108864.0 + <double>(c[1] >> 6) + 0.5) * TWO_M53
    u2[0] = (<double>(c[2] >> 5) * 67108864.0 + <double>(c[3] >> 6) + 0.5) * TWO_M53
    return canon


def philox4x32(ctr, key):
    """Single Philox4x32-10 block; ``ctr`` four words, ``key`` two words."""
    cdef uint32_t c[4]
    for i in range(4):
        c[i] = <uint32_t>(int(ctr[i]) & 0xFFFFFFFF)
    _philox(c, <uint32_t>(int(key[0]) & 0xFFFFFFFF), <uint32_t>(int(key[1]) & 0xFFFFFFFF))
    return c[0], c[1], c[2], c[3]


def mode_gaussian(seed, j, k1, k2):
    """Vectorized counter-based complex Gaussian (see the numpy backend).

    Philox runs here; the Box-Muller step is the numpy one, so both backends
    return identical bits.
    """
    jb, k1b, k2b = np.broadcast_arrays(np.asarray(j, np.int64), np.asarray(k1, np.int64),
                                       np.asarray(k2, np.int64))
    shape = jb.shape
    cdef cnp.int64_t[::1] jj = np.ascontiguousarray(jb).ravel()
    cdef cnp.int64_t[::1] kk1 = np.ascontiguousarray(k1b).ravel()
    cdef cnp.int64_t[::1] kk2 = np.ascontiguousarray(k2b).ravel()
    cdef Py_ssize_t n = jj.shape[0], i
    U1 = np.empty(n)
    U2 = np.empty(n)
    C = np.empty(n, dtype=np.uint8)
    S = np.empty(n, dtype=np.uint8)
    cdef double[::1] u1 = U1
    cdef double[::1] u2 = U2
    cdef cnp.uint8_t[::1] cc = C
    cdef cnp.uint8_t[::1] ss = S
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with nogil:
        for i in range(n):
            cc[i] = _uniforms(s, jj[i], kk1[i], kk2[i], &u1[i], &u2[i])
            ss[i] = jj[i] == 0 and kk1[i] == 0 and kk2[i] == 0
    return box_muller(U1, U2, C.view(bool), S.view(bool)).reshape(shape)


def draw(seed, j, wxi, k1, k2, weta):
    """Coefficient matrix A[q, e] = Z(j_q, k_e) * wxi[q] * weta[e]."""
    Z = mode_gaussian(seed, np.asarray(j)[:, None], np.asarray(k1)[None, :], np.asarray(k2)[None, :])
    return Z * (np.asarray(wxi, np.float64)[:, None] * np.asarray(weta, np.float64)[None, :])


def draw_split(seed, j, xi, wxi, k1, k2, rho, weta, double thr):
    """Fused draw and time-synthesis split; see ``_kernels_np.draw_split``."""
    A = draw(seed, j, wxi, k1, k2, weta)
    cdef double[:, ::1] a = A.view(np.float64)
    cdef double[::1] x = np.ascontiguousarray(xi, np.float64)
    cdef double[::1] rh = np.ascontiguousarray(rho, np.float64)
    cdef Py_ssize_t nq = A.shape[0], ne = A.shape[1], q, e, nres = 0
    B = np.empty((nq, ne), dtype=np.complex128)
    Su = np.zeros(ne, dtype=np.complex128)
    Sv = np.zeros(ne, dtype=np.complex128)
    cdef double[:, ::1] b = B.view(np.float64)
    cdef double[::1] su = Su.view(np.float64)
    cdef double[::1] sv = Sv.view(np.float64)
    rq = np.empty(1024, dtype=np.int64)
    re_ = np.empty_like(rq)
    cdef double gr, gi, dm, dp, r
    for q in range(nq):
        for e in range(ne):
            gr = a[q, 2 * e]
            gi = a[q, 2 * e + 1]
            r = rh[e]
            if r == 0.0 or fabs(r - fabs(x[q])) < thr:
                b[q, 2 * e] = 0.0
                b[q, 2 * e + 1] = 0.0
                if nres == rq.shape[0]:
                    rq = np.resize(rq, 2 * nres)
                    re_ = np.resize(re_, 2 * nres)
                rq[nres] = q
                re_[nres] = e
                nres += 1
                continue
            dm = 1.0 / (r - x[q])
            dp = 1.0 / (r + x[q])
            b[q, 2 * e] = gr * (dm + dp)
            b[q, 2 * e + 1] = gi * (dm + dp)
            su[2 * e] += gr * dm
            su[2 * e + 1] += gi * dm
            sv[2 * e] += gr * dp
            sv[2 * e + 1] += gi * dp
    rq = rq[:nres].copy()
    re_ = re_[:nres].copy()
    return B, Su, Sv, rq, re_, A[rq, re_]

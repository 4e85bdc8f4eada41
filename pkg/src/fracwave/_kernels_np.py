"""Pure-numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` operation for operation; selected automatically when
the compiled module is unavailable (or forced with FRACWAVE_BACKEND=numpy).
"""
from __future__ import annotations

import numpy as np

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = np.uint64(0x9E3779B9)
W1 = np.uint64(0xBB67AE85)
MASK = np.uint64(0xFFFFFFFF)
TWO_M53 = 2.0 ** -53
TWO_PI = 2.0 * np.pi


def philox4x32(ctr, key):
    """Philox4x32-10 block function.

    Parameters
    ----------
    ctr : ndarray, shape (4, N), uint64 holding 32-bit words
    key : ndarray, shape (2, N) or (2,), uint64 holding 32-bit words
    """
    c0, c1, c2, c3 = (np.asarray(ctr[i], dtype=np.uint64) & MASK for i in range(4))
    k0 = np.asarray(key[0], dtype=np.uint64) & MASK
    k1 = np.asarray(key[1], dtype=np.uint64) & MASK
    for r in range(10):
        if r:
            k0 = (k0 + W0) & MASK
            k1 = (k1 + W1) & MASK
        p0 = M0 * c0
        p1 = M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & MASK
        hi1, lo1 = p1 >> np.uint64(32), p1 & MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _canonical(j, k1, k2):
    """True where (j, k) is the canonical member of its Hermitian pair."""
    return (j > 0) | ((j == 0) & ((k1 > 0) | ((k1 == 0) & (k2 >= 0))))


def mode_gaussian(seed, j, k1, k2):
    """Standard complex Gaussian attached to mode (j, k1, k2).

    Each real component has variance 1/2.  The Hermitian partner (-j, -k) gets
    the conjugate value and the self-paired mode (0, 0, 0) is real N(0, 1).
    """
    j, k1, k2 = np.broadcast_arrays(np.asarray(j, np.int64), np.asarray(k1, np.int64),
                                    np.asarray(k2, np.int64))
    canon = _canonical(j, k1, k2)
    cj = np.where(canon, j, -j)
    ck1 = np.where(canon, k1, -k1)
    ck2 = np.where(canon, k2, -k2)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    key = (np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32))
    ctr = (cj.astype(np.uint64) & MASK, ck1.astype(np.uint64) & MASK,
           ck2.astype(np.uint64) & MASK, np.zeros(cj.shape, np.uint64))
    x0, x1, x2, x3 = philox4x32(ctr, key)
    u1 = ((x0 >> np.uint64(5)).astype(np.float64) * 67108864.0
          + (x1 >> np.uint64(6)).astype(np.float64) + 0.5) * TWO_M53
    u2 = ((x2 >> np.uint64(5)).astype(np.float64) * 67108864.0
          + (x3 >> np.uint64(6)).astype(np.float64) + 0.5) * TWO_M53
    selfp = (j == 0) & (k1 == 0) & (k2 == 0)
    return box_muller(u1, u2, canon, selfp)


def box_muller(u1, u2, canon, selfp):
    """Complex Gaussian from two uniforms; shared by both backends so results agree bit for bit."""
    r = np.sqrt(-np.log(u1))
    th = TWO_PI * u2
    re = r * np.cos(th)
    im = r * np.sin(th)
    im = np.where(canon, im, -im)
    re = np.where(selfp, np.sqrt(2.0) * re, re)
    im = np.where(selfp, 0.0, im)
    return re + 1j * im


def draw(seed, j, wxi, k1, k2, weta):
    """Coefficient matrix A[q, e] = Z(j_q, k_e) * wxi[q] * weta[e]."""
    Z = mode_gaussian(seed, np.asarray(j)[:, None], np.asarray(k1)[None, :], np.asarray(k2)[None, :])
    return Z * (np.asarray(wxi)[:, None] * np.asarray(weta)[None, :])


def draw_split(seed, j, xi, wxi, k1, k2, rho, weta, thr):
    """Draw coefficients and fold them into the time-synthesis factors.

    Returns ``B, Su, Sv, res_q, res_e, res_a`` where, for every mode kept in the
    fast path, ``B = a (1/(rho-xi) + 1/(rho+xi))``, ``Su = sum a/(rho-xi)`` and
    ``Sv = sum a/(rho+xi)``.  Modes with ``rho == 0`` or ``|rho - |xi|| < thr`` are
    zeroed there and returned in the ``res_*`` arrays for direct evaluation.
    """
    A = draw(seed, j, wxi, k1, k2, weta)
    xi = np.asarray(xi, float)[:, None]
    rho = np.asarray(rho, float)[None, :]
    near = (np.abs(rho - np.abs(xi)) < thr) | (rho == 0.0)
    dm = 1.0 / np.where(near, 1.0, rho - xi)
    dp = 1.0 / np.where(near, 1.0, rho + xi)
    Af = np.where(near, 0.0, A)
    B = Af * (dm + dp)
    Su = (Af * dm).sum(axis=0)
    Sv = (Af * dp).sum(axis=0)
    rq, re_ = np.nonzero(near)
    return B, Su, Sv, rq.astype(np.int64), re_.astype(np.int64), A[rq, re_]

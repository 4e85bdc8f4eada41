"""Deterministic kernels: gamma, Lambda, K^H, the wave multiplier and Gamma^{H0,n}.

Notation
--------
gamma_t(xi, rho) = exp(i xi t) * int_0^t exp(-i xi s) sin(s rho)/rho ds

is the time-frequency response of the wave propagator to a temporal mode
exp(i xi s) at spatial frequency rho = |eta|.  Its squared modulus, weighted by
|xi|^(1-2 H0) and integrated over xi, gives the spectral density of the
linear solution at spatial frequency rho.
"""
from __future__ import annotations

import functools

import numpy as np
from scipy.special import beta as _beta

from ._quadrature import gk_batch, QuadratureError

DELTA = 1e-6          # removable-singularity threshold on |t d|
RHO_SERIES = 1e-4     # below this value of rho*t the bracket difference cancels; use a series in rho
LAMBDA_REF = (0.7, 1.9, 0.5)


def _phi(d, t):
    """int_0^t exp(i d s) ds, accurate through d -> 0."""
    z = t * d
    small = np.abs(z) < DELTA
    dd = np.where(small, 1.0, d)
    re = np.where(small, t * (1.0 - z * z / 6.0), np.sin(z) / dd)
    im = np.where(small, t * (0.5 * z - z ** 3 / 24.0), 2.0 * np.sin(0.5 * z) ** 2 / dd)
    return re + 1j * im


def _moment(k, z):
    """m_k(z) = int_0^1 u^k exp(-i z u) du for k in {1, 3}."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) <= 2.0
    if small.any():
        zs = z[small]
        term = np.ones_like(zs, dtype=complex)
        acc = np.zeros_like(zs, dtype=complex)
        for j in range(40):
            acc += term / (k + j + 1)
            term = term * (-1j * zs) / (j + 1)
        out[small] = acc
    big = ~small
    if big.any():
        a = -1j * z[big]
        ea = np.exp(a)
        m = (ea - 1.0) / a
        for kk in range(1, k + 1):
            m = ea / a - (kk / a) * m
        out[big] = m
    return out


def gamma(xi, rho, t):
    """Closed-form gamma_t(xi, rho).

    Parameters
    ----------
    xi : array_like
        Temporal frequency.
    rho : array_like
        Spatial frequency modulus, ``rho >= 0``.
    t : array_like
        Time, ``t >= 0``.

    Returns
    -------
    ndarray of complex
    """
    xi, rho, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(rho, float), np.asarray(t, float))
    if np.any(rho < 0) or np.any(t < 0):
        raise ValueError("gamma requires rho >= 0 and t >= 0")
    out = np.empty(xi.shape, dtype=complex)
    ser = rho * t < RHO_SERIES
    reg = ~ser
    if reg.any():
        x, r, tt = xi[reg], rho[reg], t[reg]
        br = _phi(r - x, tt) - _phi(-(r + x), tt)
        out[reg] = np.exp(1j * x * tt) * br / (2j * r)
    if ser.any():
        x, r, tt = xi[ser], rho[ser], t[ser]
        z = x * tt
        m1 = tt ** 2 * _moment(1, z)
        m3 = tt ** 4 * _moment(3, z)
        out[ser] = np.exp(1j * z) * (m1 - r * r * m3 / 6.0)
    return out


def gamma_sq(xi, rho, t):
    g = gamma(xi, rho, t)
    return g.real ** 2 + g.imag ** 2


def lambda_t(xi, rho, t):
    """Lambda_t(xi, rho) written through sinc factors so that xi = +-rho is regular."""
    xi, rho, t = np.broadcast_arrays(np.asarray(xi, float), np.asarray(rho, float), np.asarray(t, float))
    if np.any(rho <= 0):
        raise ValueError("lambda_t requires rho > 0")
    u = 0.5 * t * (xi - rho)
    v = 0.5 * t * (xi + rho)
    su = np.sinc(u / np.pi)
    sv = np.sinc(v / np.pi)
    return 0.5 * t * t / (rho * rho) * (su * su - np.cos(t * rho) * su * sv)


def gamma_sq_via_lambda(xi, rho, t):
    """Return Lambda_t(xi, rho) + Lambda_t(-xi, rho) (without the constant)."""
    xi = np.asarray(xi, float)
    return lambda_t(xi, rho, t) + lambda_t(-xi, rho, t)


@functools.lru_cache(maxsize=None)
def lambda_constant(ref=LAMBDA_REF):
    """Constant c with |gamma|^2 = c (Lambda(xi) + Lambda(-xi)), fitted once at ``ref``."""
    xi, rho, t = ref
    return float(gamma_sq(xi, rho, t) / gamma_sq_via_lambda(xi, rho, t))


def wave_multiplier(t, lam):
    """sin(t lam)/lam with the limit t at lam = 0."""
    t = np.asarray(t, float)
    lam = np.asarray(lam, float)
    return t * np.sinc(t * lam / np.pi)


def k_kernel(eta, h):
    """K^H(eta) = |eta1|^(1-2H1) |eta2|^(1-2H2) / (1 + |eta|^(1+2H0)).

    ``eta`` has shape (..., 2); zero components are a domain error.
    """
    eta = np.asarray(eta, float)
    e1, e2 = eta[..., 0], eta[..., 1]
    if np.any(e1 == 0) or np.any(e2 == 0):
        raise ValueError("k_kernel is singular on the axes; use cell-averaged weights there")
    r = np.hypot(e1, e2)
    return np.abs(e1) ** (1 - 2 * h.h1) * np.abs(e2) ** (1 - 2 * h.h2) / (1 + r ** (1 + 2 * h.h0))


def angular_mass(h1, h2):
    """int_0^{2 pi} |cos|^(1-2 h1) |sin|^(1-2 h2) d theta."""
    return 2.0 * _beta(1.0 - h1, 1.0 - h2)


# ----------------------------------------------------------------- xi integrals

def _xi_breaks(rho, t, R):
    c = np.minimum(np.maximum(0.5 * rho, 0.25), R)
    tw = 2.0 / max(t, 1e-3)
    pts = np.stack([c, rho - tw, rho, rho + tw, np.full_like(rho, R)], axis=1)
    pts = np.clip(pts, c[:, None], R)
    return c, np.sort(pts, axis=1)


def xi_integral(rho, s, t, h0, R, rtol=1e-9):
    """int_{-R}^{R} Re(gamma_s conj(gamma_t))(xi, rho) |xi|^(1-2 h0) d xi for each rho.

    The integrand is even in xi; the cell containing 0 is mapped through
    xi = c v^(1/(2-2 h0)), which turns the power weight into a constant.
    """
    rho = np.atleast_1d(np.asarray(rho, float))
    npar = rho.size
    if s == 0 or t == 0:
        return np.zeros(npar)
    p = 1.0 / (2.0 - 2.0 * h0)
    c, bp = _xi_breaks(rho, max(s, t), R)

    def dens(x, r):
        if s == t:
            return gamma_sq(x, r, t)
        return (gamma(x, r, s) * np.conj(gamma(x, r, t))).real

    def f_sub(v, o):
        cc = c[o]
        return 2.0 * dens(cc * v ** p, rho[o]) * cc ** (2.0 - 2.0 * h0) * p

    own = np.arange(npar)
    I0, _ = gk_batch(f_sub, np.zeros(npar), np.ones(npar), own, npar, rtol)
    a = bp[:, :-1].ravel()
    b = bp[:, 1:].ravel()
    o = np.repeat(own, bp.shape[1] - 1)
    keep = b > a

    def f(x, o_):
        return 2.0 * dens(x, rho[o_]) * x ** (1.0 - 2.0 * h0)

    I1, _ = gk_batch(f, a[keep], b[keep], o[keep], npar, rtol)
    return I0 + I1


def big_gamma_n(rho, t, h0, n, rtol=1e-7):
    """Gamma^{H0,n}_t(rho) = int_{|xi| <= 2^n} |gamma_t(xi, rho)|^2 |xi|^(1-2 h0) d xi.

    Raises
    ------
    QuadratureError
        If adaptive refinement stalls; the achieved tolerance is attached.
    """
    if not 0.0 < h0 < 1.0:
        raise ValueError("h0 must lie in (0,1)")
    scalar = np.ndim(rho) == 0
    out = xi_integral(rho, t, t, h0, 2.0 ** n, rtol=min(rtol, 1e-9))
    out = np.maximum(out, 0.0)
    return float(out[0]) if scalar else out


__all__ = ["gamma", "gamma_sq", "lambda_t", "gamma_sq_via_lambda", "lambda_constant",
           "wave_multiplier", "k_kernel", "big_gamma_n", "xi_integral", "angular_mass",
           "QuadratureError"]

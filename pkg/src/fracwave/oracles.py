"""Truncation studies for the integral lemmas behind the convergence proofs.

Every integral is computed on a sequence of truncation radii R_k = 2^k; the
verdict looks at how the partial values behave under doubling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import hyp2f1

from .core import HurstTriple
from .kernels import angular_mass, k_kernel
from ._quadrature import gk_batch, gauss_legendre_panels

CONVERGED_RATIO = 0.95
DIVERGING_GROWTH = 1.05


@dataclass
class TruncationReport:
    integral: str
    params: dict
    radii: list
    values: list
    verdict: str = ""
    ratios: list = field(default_factory=list)
    growth: list = field(default_factory=list)

    def __post_init__(self):
        if not self.verdict:
            self.verdict, self.ratios, self.growth = verdict(self.values)


def verdict(values, window=3):
    """Classify partial values on doubling radii.

    converged: each of the last ``window`` successive differences shrinks,
    |d_{k+1}| <= 0.95 |d_k|.  diverging: otherwise, when each of the last
    ``window`` doublings increases the partial value by at least 5% and the
    increments do not shrink.  Anything else is inconclusive.
    """
    v = np.asarray(values, float)
    d = np.diff(v)
    ratios = list(np.abs(d[1:]) / np.where(d[:-1] == 0, np.inf, np.abs(d[:-1])))
    growth = list(v[1:] / np.where(v[:-1] == 0, np.nan, v[:-1]))
    if len(v) < window + 2:
        return "inconclusive", ratios, growth
    r = np.asarray(ratios[-window:])
    if np.all(r <= CONVERGED_RATIO) or np.all(d[-window:] == 0):
        return "converged", ratios, growth
    if (np.all(np.asarray(growth[-window:]) >= DIVERGING_GROWTH) and np.all(d[-window:] > 0)
            and np.all(r > CONVERGED_RATIO)):
        return "diverging", ratios, growth
    return "inconclusive", ratios, growth


def _radii(R):
    return [float(r) for r in np.atleast_1d(R)]


# ------------------------------------------------------------------ first order

def integral_first_order(h: HurstTriple, alpha, R, rtol=1e-10):
    """int_{|eta| <= R} K^H(eta) (1 + |eta|^2)^(-alpha) d eta, by polar coordinates.

    The angular factor |cos|^(1-2h1) |sin|^(1-2h2) is integrated exactly (Beta
    function), so the axis singularities never meet a quadrature node.
    """
    e = 3.0 - 2.0 * (h.h1 + h.h2)
    q = 1.0 + 2.0 * h.h0

    def f(r, o):
        return r ** e / ((1.0 + r ** q) * (1.0 + r * r) ** alpha)

    radii = _radii(R)
    out = []
    c = min(0.125, radii[0])
    p = 1.0 / (e + 1.0)
    # cell at 0: r = c v^(1/(e+1)) absorbs the power r^e
    I0, _ = gk_batch(lambda v, o: c ** (e + 1.0) * p / ((1.0 + (c * v ** p) ** q) * (1.0 + (c * v ** p) ** 2) ** alpha),
                     [0.0], [1.0], [0], 1, rtol)
    edges = sorted(set([c] + [2.0 ** k for k in range(-2, 64) if c < 2.0 ** k < max(radii)] + radii))
    edges = np.array(edges)
    I, _ = gk_batch(f, edges[:-1], edges[1:], np.arange(edges.size - 1), edges.size - 1, rtol)
    cum = np.concatenate([[0.0], np.cumsum(I)])
    A = angular_mass(h.h1, h.h2)
    for R_ in radii:
        k = int(np.searchsorted(edges, R_))
        out.append(A * (I0[0] + cum[k]))
    return out[0] if np.ndim(R) == 0 else out


def first_order_box(h: HurstTriple, alpha, R, rtol=1e-9):
    """Same integrand over the box |eta|_inf <= R, by nested adaptive Gauss-Kronrod (4 quadrants)."""
    a1 = 1.0 - 2.0 * h.h1
    a2 = 1.0 - 2.0 * h.h2
    q = 1.0 + 2.0 * h.h0
    edges = np.array([0.0] + [2.0 ** k for k in range(-30, 64) if 2.0 ** k < R] + [R])

    def inner(y):
        # int_0^R x^a1 / ((1 + (x^2+y^2)^(q/2)) (1 + x^2 + y^2)^alpha) dx for each y
        y = np.asarray(y, float).ravel()
        ny = y.size
        a = np.tile(edges[:-1], ny)
        b = np.tile(edges[1:], ny)
        o = np.repeat(np.arange(ny), edges.size - 1)

        def f(x, oo):
            r2 = x * x + y[oo] ** 2
            return x ** a1 / ((1.0 + r2 ** (q / 2)) * (1.0 + r2) ** alpha)

        v, _ = gk_batch(f, a, b, o, ny, rtol * 1e-1)
        return v

    def outer(y, o):
        return y ** a2 * inner(y).reshape(y.shape)

    v, _ = gk_batch(outer, edges[:-1], edges[1:], np.zeros(edges.size - 1, int), 1, rtol)
    return 4.0 * float(v[0])


# ------------------------------------------------------------------ 4D integrals

def _eta_nodes(R, lo_exp=-20, npts=8):
    """Gauss-Legendre nodes on dyadic panels [2^k, 2^(k+1)] up to R, with panel upper edges."""
    top = int(round(math.log2(R)))
    edges = 2.0 ** np.arange(lo_exp, top + 1)
    x, w, p = gauss_legendre_panels(edges, npts)
    return x, w, edges[1:][p]


def _r_nodes(lo_exp=-20, npts=8, top=1.0):
    """Nodes on [0, top] refined geometrically toward 0."""
    edges = np.concatenate([[0.0], top * 2.0 ** np.arange(lo_exp, 1)])
    x, w, _ = gauss_legendre_panels(edges, npts)
    return x, w


def _j1(h, ht, alpha, radii, npts=10):
    """4D tensor Gauss rule for J1 on boxes |eta|_inf, |eta~|_inf <= R (all four quadrants each)."""
    out = []
    for R in radii:
        x, w, _ = _eta_nodes(R, -30, npts)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        r2 = X1 ** 2 + X2 ** 2
        damp = (1.0 + r2) ** (-alpha)
        f = damp * k_kernel(np.stack([X1, X2], -1), h) * W
        g = damp * k_kernel(np.stack([X1, X2], -1), ht) * W
        # the 4D tensor rule sum_ijkl f_ij g_kl of a product integrand collapses exactly
        out.append(16.0 * float(f.sum()) * float(g.sum()))
    return out


def _j2(h, ht, alpha, radii, npts=8):
    """J2 with eta~2 = eta2 (1 + r): inner eta1 and eta~1 integrals factorize."""
    Rm = max(radii)
    x, w, top = _eta_nodes(Rm, -20, npts)
    r, wr = _r_nodes(-20, npts)
    out = np.zeros(len(radii))
    q0 = 1.0 + 2.0 * h.h0
    q0t = 1.0 + 2.0 * ht.h0
    for ib, (e2, w2) in enumerate(zip(x, w)):
        d2 = (e2 * r) ** 2                        # (eta2 - eta~2)^2 per r
        et2 = e2 * (1.0 + r)                      # eta~2 per r
        base = 1.0 + d2[None, :] + x[:, None] ** 2  # over (eta1, r)
        Ka = x[:, None] ** (1 - 2 * h.h1) * e2 ** (1 - 2 * h.h2) / (1.0 + np.hypot(x[:, None], e2) ** q0)
        Kb = x[:, None] ** (1 - 2 * ht.h1) * et2[None, :] ** (1 - 2 * ht.h2) / (
            1.0 + np.hypot(x[:, None], et2[None, :]) ** q0t)
        fa = base ** (-alpha) * Ka
        fb = base ** (-alpha) * Kb
        for k, R in enumerate(radii):
            if e2 > R:
                continue
            m = top <= R
            A = w[m] @ fa[m]
            B = w[m] @ fb[m]
            out[k] += w2 * e2 * float(np.sum(wr * A * B))
    return list(out)


def _j34(h, ht, alpha, radii, which, npts=6, lo_exp=-12):
    """J3 or J4 by a tensor Gauss rule in (outer variables, relative offsets r1, r2).

    J3: eta~_i in [eta_i, 2 eta_i], eta~_i = eta_i (1 + r_i), d eta~_i = eta_i d r_i.
    J4: eta~_1 as in J3; eta_2 in [eta~_2, 2 eta~_2], so with eta~_2 the outer variable
        eta_2 = eta~_2 (1 + r_2), d eta_2 = eta~_2 d r_2.
    Truncation: the two outer variables lie in [0, R].
    """
    Rm = max(radii)
    x, w, top = _eta_nodes(Rm, lo_exp, npts)
    r, wr = _r_nodes(lo_exp, npts)
    out = np.zeros(len(radii))
    q0 = 1.0 + 2.0 * h.h0
    q0t = 1.0 + 2.0 * ht.h0
    # second outer variable and r2 flattened
    U2 = x[:, None] * np.ones_like(r)[None, :]
    R2 = np.ones_like(x)[:, None] * r[None, :]
    Wb = (w[:, None] * wr[None, :]) * U2
    U2 = U2.ravel(); R2 = R2.ravel(); Wb = Wb.ravel()
    top2 = np.repeat(top, r.size)
    if which == 3:
        e2 = U2; et2 = U2 * (1.0 + R2)
    else:
        et2 = U2; e2 = U2 * (1.0 + R2)
    d2 = (et2 - e2) ** 2
    K2a = e2 ** (1 - 2 * h.h2)
    K2b = et2 ** (1 - 2 * ht.h2)
    for i, (e1, w1) in enumerate(zip(x, w)):
        if top[i] > Rm:
            continue
        et1 = e1 * (1.0 + r)                     # over r1
        d1 = (et1 - e1) ** 2
        Ka = e1 ** (1 - 2 * h.h1) * K2a[None, :] / (1.0 + np.sqrt(e1 * e1 + e2 * e2)[None, :] ** q0)
        Kb = (et1[:, None] ** (1 - 2 * ht.h1)) * K2b[None, :] / (
            1.0 + np.sqrt(et1[:, None] ** 2 + et2[None, :] ** 2) ** q0t)
        damp = (1.0 + d1[:, None] + d2[None, :]) ** (-2.0 * alpha)
        val = (wr * e1)[:, None] * damp * Ka * Kb * Wb[None, :]
        col = val.sum(axis=0)
        for k, R in enumerate(radii):
            if top[i] <= R:
                out[k] += w1 * float(col[top2 <= R].sum())
    return list(out)


def integral_J(which, h: HurstTriple, htilde: HurstTriple, alpha, R):
    """Truncated value(s) of the four reduced integrals of the second-order lemma.

    ``R`` may be a scalar or a list of radii (partial values are then returned
    together, computed in one pass where possible).
    """
    radii = _radii(R)
    if which == 1:
        out = _j1(h, htilde, alpha, radii)
    elif which == 2:
        out = _j2(h, htilde, alpha, radii)
    elif which in (3, 4):
        out = _j34(h, htilde, alpha, radii, which)
    else:
        raise ValueError("which must be 1, 2, 3 or 4")
    return out[0] if np.ndim(R) == 0 else out


def j1_identity(h, htilde, alpha, R):
    """(4D tensor value of J1, product of two adaptive 2D box integrals, relative gap)."""
    a = integral_J(1, h, htilde, alpha, R)
    b = first_order_box(h, alpha, R) * first_order_box(htilde, alpha, R)
    return a, b, abs(a - b) / abs(b)


# ------------------------------------------------------------------ L2 norm of K

def k_l2_norm(h: HurstTriple, R, npts=10):
    """int |K^H|^2 over {1/R <= |eta_i|, |eta|_inf <= R}.

    The axis cut at 1/R exposes the axis singularity |eta_i|^(2 - 4 h_i), which
    is integrable only for h_i < 3/4.
    """
    out = []
    for R_ in _radii(R):
        lo = int(round(-math.log2(R_)))
        edges = 2.0 ** np.arange(lo, int(round(math.log2(R_))) + 1)
        x, w, _ = gauss_legendre_panels(edges, npts)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        K = k_kernel(np.stack([X1, X2], -1), h)
        out.append(4.0 * float(np.einsum("i,j,ij->", w, w, K * K)))
    return out[0] if np.ndim(R) == 0 else out


# ------------------------------------------------------------------ convolution bound

def conv_lhs(eta_norm, alpha, rtol=1e-10):
    """int (1 + |eta + u|^2)^(-alpha) (1 + |u|^2)^(-1) du over R^2 for each |eta|.

    The angle integral is 2 pi A^(-alpha) 2F1(alpha/2, (alpha+1)/2; 1; B^2/A^2)
    with A = 1 + |eta|^2 + r^2 and B = 2 |eta| r.
    """
    e = np.atleast_1d(np.asarray(eta_norm, float))
    ne = e.size

    def ang(r, o):
        A = 1.0 + e[o] ** 2 + r * r
        B = 2.0 * e[o] * r
        return 2.0 * np.pi * A ** (-alpha) * hyp2f1(alpha / 2.0, (alpha + 1.0) / 2.0, 1.0, (B / A) ** 2)

    a = 2.0 * e + 4.0
    pts = np.stack([np.zeros(ne), np.maximum(e - 2, 0), e, e + 2, a], 1)
    pts = np.sort(pts, 1)
    lo = pts[:, :-1].ravel()
    hi = pts[:, 1:].ravel()
    own = np.repeat(np.arange(ne), 4)
    keep = hi > lo

    def f(r, o):
        return r / (1.0 + r * r) * ang(r, o)

    I1, _ = gk_batch(f, lo[keep], hi[keep], own[keep], ne, rtol)
    # tail r = a v^-1, v = w^(1/(2 alpha))
    p = 1.0 / (2.0 * alpha)

    def g(wv, o):
        v = wv ** p
        r = a[o] / v
        return f(r, o) * a[o] / (v * v) * p * wv ** (p - 1.0)

    I2, _ = gk_batch(g, np.zeros(ne), np.ones(ne), np.arange(ne), ne, rtol)
    return I1 + I2


def conv_bound_check(alpha, eps, eta_grid):
    """Max over the grid of LHS(eta) / (1 + |eta|^2)^(-(alpha - eps))."""
    g = np.asarray(eta_grid, float)
    en = np.hypot(g[..., 0], g[..., 1]) if g.ndim > 1 and g.shape[-1] == 2 else np.abs(g)
    en = en.ravel()
    lhs = conv_lhs(en, alpha)
    ratio = lhs * (1.0 + en * en) ** (alpha - eps)
    return float(ratio.max())


# ------------------------------------------------------------------ dispatch

INTEGRALS = ("first_order", "J1", "J2", "J3", "J4", "k_l2")
DEFAULT_RADII = tuple(2.0 ** k for k in range(4, 10))


def truncation_study(integral, h: HurstTriple, alpha=None, radii=DEFAULT_RADII, htilde=None):
    """Partial values of ``integral`` on ``radii`` with their verdict."""
    radii = _radii(radii)
    if integral == "first_order":
        vals = integral_first_order(h, alpha, radii)
    elif integral in ("J1", "J2", "J3", "J4"):
        vals = integral_J(int(integral[1]), h, htilde or h, alpha, radii)
    elif integral == "k_l2":
        vals = k_l2_norm(h, radii)
    else:
        raise ValueError(f"unknown integral {integral!r}; expected one of {INTEGRALS}")
    params = {"hurst": list(h.as_tuple()), "alpha": alpha,
              "htilde": list((htilde or h).as_tuple()) if integral.startswith("J") else None}
    return TruncationReport(integral, params, radii, [float(v) for v in vals])

"""Localized Sobolev norms, path norms and Monte-Carlo moment estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .core import GridSpec, HurstTriple, RunConfig, SobolevSpec, minimal_nx
from .kernels import angular_mass, k_kernel, xi_integral
from .objects import (EnhancedPath, LABELS, _even_fast, from_spectrum, grid_lambda, orders, path_slices,
                      to_spectrum)
from .noise import sample_modes
from . import _parallel


# ------------------------------------------------------------------ windows

def smoothstep(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, float)
    a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def chi(r):
    """Radial window: 1 on |x| <= 2, 0 on |x| >= 3."""
    return 1.0 - smoothstep(np.asarray(r, float) - 2.0)


def grid_coords(grid: GridSpec):
    a = np.fft.fftfreq(grid.nx, 1.0 / grid.nx) * grid.dx
    return np.meshgrid(a, a, indexing="ij")


def window_on_grid(grid: GridSpec, window="bump"):
    if isinstance(window, np.ndarray):
        return window
    if window == "one":
        return np.ones((grid.nx, grid.nx))
    if window != "bump":
        raise ValueError(f"unknown window {window!r}")
    if grid.period <= 3.0:
        raise ValueError("window support |x| <= 3 exceeds the periodization cell")
    X, Y = grid_coords(grid)
    return chi(np.hypot(X, Y))


def sobolev_norm(slc, alpha, p=2, window="bump", grid: GridSpec = None):
    """|| F^-1 (1+|lam|^2)^(alpha/2) F(chi * slice) ||_{L^p} on the periodization cell.

    ``slc`` may carry leading axes (e.g. time); the norm is taken over the last two.
    """
    slc = np.asarray(slc)
    if grid is None:
        raise ValueError("grid is required")
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    w = window_on_grid(grid, window)
    f = slc * w
    nx = grid.nx
    if np.iscomplexobj(f):
        k = np.fft.fftfreq(nx, 1.0 / nx) * (np.pi / grid.period)
        lam2 = k[:, None] ** 2 + k[None, :] ** 2
        g = np.fft.ifft2(np.fft.fft2(f, axes=(-2, -1)) * (1.0 + lam2) ** (alpha / 2.0), axes=(-2, -1))
    else:
        lam = grid_lambda(grid)
        g = from_spectrum(to_spectrum(f) * (1.0 + lam * lam) ** (alpha / 2.0), nx)
    dA = grid.dx ** 2
    return (np.sum(np.abs(g) ** p, axis=(-2, -1)) * dA) ** (1.0 / p)


@dataclass
class NormRecord:
    alpha: float
    p: int
    values: dict
    orders: dict = field(default_factory=dict)

    def total(self):
        return sum(self.values.values())


def epath_norm(path: EnhancedPath, spec: SobolevSpec) -> NormRecord:
    """Sup over the time lattice of each component's localized Sobolev norm."""
    od = orders(spec.alpha)
    vals = {}
    for lab, f in path.components.items():
        v = sobolev_norm(f.data, od[lab], spec.p, spec.window, f.grid)
        vals[lab] = float(np.max(v))
    rec = NormRecord(spec.alpha, spec.p, vals, od)
    path.norms = rec
    return rec


def weighted(field2d, order, grid):
    """Global multiplier (1+|lam|^2)^(order/2) on the torus, no window."""
    lam = grid_lambda(grid)
    return from_spectrum(to_spectrum(field2d) * (1.0 + lam * lam) ** (order / 2.0), grid.nx)


# ------------------------------------------------------------------ MC increments

def pair_grid(cfg: RunConfig, m, t):
    """Grid for a level pair (n, m): Nyquist reaches 2^m (FFT-friendly nx), 4 * 2^m steps per unit time."""
    g = cfg.grid
    nt = max(2, int(round(4 * 2 ** m * t)))
    nx = _even_fast(max(minimal_nx(m, g.period), 4))
    return GridSpec(level=m, period=g.period, nx=nx, nt=nt,
                    horizon=t, n_xi=int(round(2.0 ** (m + 1) / g.xi_step)))


def _increment_one(args):
    cfg, n, m, s, t, x, seed, grid = args
    mm = sample_modes(cfg.with_(grid=grid), m, seed)
    mn = mm.restrict(n)
    at = [s, t] if s > 0 else [t]
    pm = path_slices(mm, grid, at)
    pn = path_slices(mn, grid, at)
    alpha = cfg.sobolev.alpha
    od = orders(alpha)
    out = {}
    for lab in LABELS:
        d = pm[lab][-1] - pn[lab][-1]
        if s > 0:
            d = d - (pm[lab][0] - pn[lab][0])
        wv = weighted(d, od[lab], grid)
        if x is None:
            out[lab] = float(np.mean(wv * wv))
        else:
            X, Y = grid_coords(grid)
            i = int(np.argmin(np.hypot(X - x[0], Y - x[1])))
            out[lab] = float(wv.ravel()[i] ** 2)
    return out


def mc_moment_increment(cfg: RunConfig, tau, n, m, s, t, x=None, samples=None, seeds=None,
                        threads=1, grid=None):
    """Mean and standard error of E|F^-1((1+|.|^2)^{|tau|/2} F(tau^{n,m}_{s,t}))(x)|^2.

    ``tau`` is a component label or ``"all"`` (returns a dict).  With ``x=None``
    the squared weighted increment is averaged over the cell before the ensemble
    average; the law is stationary in space so the expectation is unchanged.
    """
    samples = cfg.samples if samples is None else samples
    labs = LABELS if tau == "all" else (tau,)
    if samples < 8:
        raise ValueError("need at least 8 samples")
    if n == m or s == t:
        z = {lab: (0.0, 0.0) for lab in labs}
        return z if tau == "all" else z[tau]
    if not (0 <= s < t) or not (n < m):
        raise ValueError("need n < m and 0 <= s < t")
    if cfg.sobolev is None:
        raise ValueError("an admissible Sobolev order is required")
    grid = pair_grid(cfg, m, t) if grid is None else grid
    seeds = [cfg.seed + i for i in range(samples)] if seeds is None else list(seeds)
    res = _parallel.map_seeds(_increment_one, [(cfg, n, m, s, t, x, sd, grid) for sd in seeds], threads)
    out = {}
    for lab in labs:
        v = np.array([r[lab] for r in res])
        out[lab] = mean_se(v)
    return out if tau == "all" else out[tau]


def mean_se(v):
    """Order-independent mean and standard error."""
    v = np.asarray(v, float)
    k = v.size
    mu = math.fsum(v) / k
    var = math.fsum((v - mu) ** 2) / (k - 1) if k > 1 else 0.0
    return mu, math.sqrt(var / k)


# ------------------------------------------------------------------ covariance oracle

def _angular_nodes(h1, h2, npts):
    """Nodes/weights for int_0^{2 pi} |cos|^(1-2h1) |sin|^(1-2h2) g(theta) d theta (Gauss-Jacobi)."""
    a = 1.0 - 2.0 * h1
    b = 1.0 - 2.0 * h2
    # on [0, pi/2]: u = sin^2 theta -> (1/2) (1-u)^((a-1)/2) u^((b-1)/2) du, x = 2u - 1
    x, w = roots_jacobi(npts, (a - 1.0) / 2.0, (b - 1.0) / 2.0)
    u = 0.5 * (x + 1.0)
    w = w * 0.5 * 0.5 ** ((a - 1.0) / 2.0 + (b - 1.0) / 2.0 + 1.0)
    th = np.arcsin(np.sqrt(u))
    thetas = np.concatenate([th, np.pi - th, np.pi + th, 2 * np.pi - th])
    return thetas, np.tile(w, 4)


def covariance_psi_quadrature(y, ytilde, s, t, n, h: HurstTriple, rtol=1e-9, ang_pts=None):
    """c_H int_{|eta| <= 2^n} e^{i eta (y - ytilde)} L(eta) d eta for Psi^n_s(y), Psi^n_t(ytilde)."""
    if s == 0 or t == 0:
        return 0.0
    R = 2.0 ** n
    d = np.asarray(y, float) - np.asarray(ytilde, float)
    dn = float(np.hypot(*d))
    e = 3.0 - 2.0 * (h.h1 + h.h2)
    c = 0.125
    xg, wg = np.polynomial.legendre.leggauss(24)
    # first panel: r = c v^(1/(e+1)) turns r^e dr into a constant times dv
    p = 1.0 / (e + 1.0)
    v = 0.5 * (xg + 1.0)
    r0 = c * v ** p
    w0 = 0.5 * wg * c ** (e + 1.0) * p / r0 ** e
    edges = [c] + [2.0 ** k for k in range(-2, n + 1)]
    fine = []
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(math.ceil((b - a) * max(dn, 1.0) / 2.0)))
        fine += list(np.linspace(a, b, k + 1)[:-1])
    fine.append(R)
    lo = np.array(fine[:-1])[:, None]
    hi = np.array(fine[1:])[:, None]
    r = np.concatenate([r0, (0.5 * (lo + hi) + 0.5 * (hi - lo) * xg).ravel()])
    wr = np.concatenate([w0, (0.5 * (hi - lo) * wg).ravel()])
    inner = xi_integral(r, s, t, h.h0, R, rtol)
    if dn == 0.0:
        ang = angular_mass(h.h1, h.h2) * np.ones_like(r)
    else:
        npts = ang_pts or max(64, int(2 * R * dn) + 64)
        th, wt = _angular_nodes(h.h1, h.h2, npts)
        ph = np.cos(np.outer(r, d[0] * np.cos(th) + d[1] * np.sin(th)))
        ang = ph @ wt
    return float(np.sum(wr * r ** e * inner * ang))


# ------------------------------------------------------------------ kernel bound

def kernel_l(h: HurstTriple, eta, n, m, s, t, rtol=1e-9):
    """L^{H,((n,m),m)}_{(s,t),t}(eta) for an array of eta (shape (..., 2), off the axes)."""
    eta = np.asarray(eta, float)
    rho = np.hypot(eta[..., 0], eta[..., 1]).ravel()
    pref = (np.abs(eta[..., 0]) ** (1 - 2 * h.h1) * np.abs(eta[..., 1]) ** (1 - 2 * h.h2)).ravel()

    def I(R):
        return xi_integral(rho, t, t, h.h0, R, rtol) - xi_integral(rho, s, t, h.h0, R, rtol)

    Rm, Rn = 2.0 ** m, 2.0 ** n
    inside = rho <= Rm
    full = I(Rm)
    low = I(Rn)
    val = np.where(rho > Rn, full, full - low)
    return np.where(inside, pref * val, 0.0).reshape(eta.shape[:-1])


def kernel_bound_ratio(h: HurstTriple, eps, eta, n, m, s, t):
    """|L| / (2^{-n eps} |t-s|^eps sum_i K^{H_eps,i}(eta)) at each eta."""
    L = np.abs(kernel_l(h, eta, n, m, s, t))
    hs = (HurstTriple(h.h0 - eps, h.h1, h.h2), HurstTriple(h.h0, h.h1 - eps, h.h2),
          HurstTriple(h.h0, h.h1, h.h2 - eps))
    den = sum(k_kernel(eta, hh) for hh in hs) * 2.0 ** (-n * eps) * abs(t - s) ** eps
    return L / den

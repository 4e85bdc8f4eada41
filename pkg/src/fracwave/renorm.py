"""Continuum renormalization constant sigma^n(t), its growth law, and the divergence study."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import GridSpec, HurstTriple, Regime, RunConfig
from .kernels import angular_mass, big_gamma_n
from ._quadrature import gk_batch
from .analysis import mean_se, sobolev_norm
from .noise import sample_modes
from .objects import psi_slices, lattice_variance, dealiased_product
from . import _parallel


def sigma_exact(h: HurstTriple, n: int, t: float, rtol=1e-6):
    """sigma^n(t) = int_{|eta| <= 2^n} |eta1|^(1-2h1) |eta2|^(1-2h2) Gamma^{h0,n}_t(|eta|) d eta.

    Polar coordinates reduce this to the exact angular mass times a radial
    integral of r^(3 - 2(h1+h2)) Gamma(r), computed by adaptive Gauss-Kronrod on
    dyadic cells; the cell at the origin uses r = c v^(1/(e+1)).
    """
    if t == 0 or n <= 0:
        return 0.0
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    e = 3.0 - 2.0 * (h.h1 + h.h2)
    R = 2.0 ** n
    inner_tol = min(1e-9, rtol * 1e-2)
    c = 2.0 ** -3
    p = 1.0 / (e + 1.0)

    def g0(v, o):
        r = c * v ** p
        return c ** (e + 1.0) * p * big_gamma_n(r.ravel(), t, h.h0, n, inner_tol).reshape(r.shape)

    def g(r, o):
        return r ** e * big_gamma_n(r.ravel(), t, h.h0, n, inner_tol).reshape(r.shape)

    I0, _ = gk_batch(g0, [0.0], [1.0], [0], 1, rtol * 1e-1)
    edges = np.array([2.0 ** k for k in range(-3, n + 1)])
    I1, _ = gk_batch(g, edges[:-1], edges[1:], np.zeros(edges.size - 1, int), 1, rtol * 1e-1)
    return float(angular_mass(h.h1, h.h2) * (I0[0] + I1[0]))


@dataclass
class SigmaTable:
    hurst: HurstTriple
    rtol: float
    rows: list = field(default_factory=list)  # (n, t, sigma)

    def add(self, n, t, v):
        self.rows.append((int(n), float(t), float(v)))

    def values(self, t):
        return {n: v for n, tt, v in self.rows if tt == t}


def sigma_table(h, levels, times, rtol=1e-6):
    tab = SigmaTable(h, rtol)
    for t in times:
        for n in levels:
            tab.add(n, t, sigma_exact(h, n, t, rtol))
    return tab


@dataclass
class SlopeFit:
    slope: float
    ci: tuple
    expected: float
    local_slopes: list
    t_ratio: float
    table: SigmaTable


def expected_slope(h: HurstTriple):
    return 2.0 * (1.5 - h.sum)


def sigma_slope_fit(h: HurstTriple, t=1.0, n_range=range(4, 10), t_half=0.5, rtol=1e-6, table=None):
    """Least-squares slope of log2 sigma^n(t) against n, with a 95% interval.

    Also returns local slopes log2(sigma^{n+1}/sigma^n) and the ratio
    sigma^{n_max}(t) / sigma^{n_max}(t_half).
    """
    levels = list(n_range)
    if len(levels) < 4:
        raise ValueError("need at least four levels")
    if h.regime != Regime.TARGET_WINDOW:
        raise ValueError("slope law applies to the target window 1 < sum(H) <= 5/4")
    tab = table or sigma_table(h, levels, [t], rtol)
    vals = tab.values(t)
    y = np.log2([vals[n] for n in levels])
    x = np.array(levels, float)
    if not np.all(np.isfinite(y)):
        raise ValueError("degenerate fit")
    fit = stats.linregress(x, y)
    q = stats.t.ppf(0.975, len(levels) - 2)
    ci = (fit.slope - q * fit.stderr, fit.slope + q * fit.stderr)
    local = list(np.diff(y))
    nmax = levels[-1]
    ratio = vals[nmax] / sigma_exact(h, nmax, t_half, rtol)
    tab.add(nmax, t_half, vals[nmax] / ratio)
    return SlopeFit(float(fit.slope), ci, expected_slope(h), local, float(ratio), tab)


# ------------------------------------------------------------------ divergence study

def _wick_norm_one(args):
    cfg, levels, t, alpha, seed = args
    g = cfg.grid
    out = []
    for n in levels:
        m = sample_modes(cfg, n, seed)
        psi = psi_slices(m, g, [t])[0]
        w2 = dealiased_product(psi, psi) - lattice_variance(m, t, g.nx)
        out.append(float(sobolev_norm(w2, -2.0 * alpha, 2, "bump", g) ** 2))
    return out


@dataclass
class DivergenceTable:
    hurst: HurstTriple
    alpha: float
    t: float
    levels: list
    means: list
    ses: list
    diffs: list
    diff_ses: list
    raw: np.ndarray

    def rows(self):
        return [(n, self.t, m, s) for n, m, s in zip(self.levels, self.means, self.ses)]


def divergence_study(cfg: RunConfig, levels=range(3, 8), t=1.0, alpha=None, samples=None,
                     seeds=None, threads=1):
    """MC estimates of E || Psi^{2,n}(t) ||^2 in W^{-2 alpha, 2}(D) over ``levels``.

    All levels use the same seeds, so increments between levels come with paired
    standard errors.
    """
    if alpha is None:
        alpha = cfg.study.get("alpha", 0.55)
    samples = cfg.samples if samples is None else samples
    seeds = [cfg.seed + i for i in range(samples)] if seeds is None else list(seeds)
    levels = list(levels)
    if max(levels) > cfg.grid.level:
        raise ValueError("levels exceed the grid level")
    res = _parallel.map_seeds(_wick_norm_one, [(cfg, levels, t, alpha, s) for s in seeds], threads)
    raw = np.array(res)
    means, ses = zip(*(mean_se(raw[:, i]) for i in range(len(levels))))
    dif = np.diff(raw, axis=1)
    dm, ds = zip(*(mean_se(dif[:, i]) for i in range(dif.shape[1]))) if dif.shape[1] else ((), ())
    return DivergenceTable(cfg.hurst, alpha, t, levels, list(means), list(ses), list(dm), list(ds), raw)

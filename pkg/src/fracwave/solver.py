"""Fixed-point solver for the remainder w = u - Psi - I Psi^2 and a direct integrator.

Products
--------
Every quadratic term carries the cutoff rho^2, so it is computed as

    Q(a, b) = P(rho^2, P(a, b)),

where P is the dealiased lattice product.  P is bilinear, so the five
w-dependent and path-dependent terms of the remainder equation regroup exactly
into Q(w, w + 2 (Psi + I Psi^2)) + Q(I Psi^2, I Psi^2) + 2 P(rho^2, Psi I Psi^2),
and the direct integrator, which expands Q(u, u) for u = Psi + I Psi^2 + w,
sees the same lattice operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .analysis import smoothstep, grid_coords, sobolev_norm, epath_norm
from .core import GridSpec, RunConfig, SobolevSpec
from .kernels import wave_multiplier
from .noise import ModeSet, sample_modes
from .objects import (EnhancedPath, Field, duhamel_spectrum, dealiased_product, from_spectrum,
                      grid_lambda, lattice_variance, psi_spectrum, to_spectrum,
                      enhanced_path_from_modes)


class NoContraction(RuntimeError):
    """Update norms stopped decreasing; the caller should shrink T0."""

    def __init__(self, msg, diag=None):
        super().__init__(msg)
        self.diag = diag


class MaxIterExceeded(RuntimeError):
    def __init__(self, msg, diag=None):
        super().__init__(msg)
        self.diag = diag


class CFLViolation(ValueError):
    pass


class BlowUp(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


# ------------------------------------------------------------------ data

def cutoff_rho(x):
    """Radial bump rho(x): 1 on |x| <= 1, 0 on |x| >= 2, values in [0, 1].

    ``x`` has shape (..., 2).
    """
    r = np.hypot(*np.moveaxis(np.asarray(x, float), -1, 0))
    return 1.0 - smoothstep(r - 1.0)


def rho_field(grid: GridSpec):
    X, Y = grid_coords(grid)
    return cutoff_rho(np.stack([X, Y], axis=-1))


@dataclass(eq=False)
class InitialData:
    """Initial position ``phi0`` and velocity ``phi1`` on the lattice."""

    phi0: np.ndarray
    phi1: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        nx = self.grid.nx
        self.phi0 = np.broadcast_to(np.asarray(self.phi0, float), (nx, nx)).copy()
        self.phi1 = np.broadcast_to(np.asarray(self.phi1, float), (nx, nx)).copy()
        if not (np.all(np.isfinite(self.phi0)) and np.all(np.isfinite(self.phi1))):
            raise ValueError("initial data must be finite")

    @classmethod
    def zero(cls, grid):
        return cls(0.0, 0.0, grid)

    @classmethod
    def bump(cls, grid, amp0=0.1, amp1=0.0, width=0.5):
        """Gaussian bumps exp(-|x|^2 / (2 width^2)) centred at the origin."""
        X, Y = grid_coords(grid)
        g = np.exp(-(X * X + Y * Y) / (2.0 * width * width))
        return cls(amp0 * g, amp1 * g, grid)

    def norms(self):
        """(||phi0||_{W^{1/2,2}}, ||phi1||_{W^{-1/2,2}}) on the whole cell."""
        return (float(sobolev_norm(self.phi0, 0.5, 2, "one", self.grid)),
                float(sobolev_norm(self.phi1, -0.5, 2, "one", self.grid)))

    def on(self, grid):
        if grid.nx != self.grid.nx or grid.period != self.grid.period:
            raise ValueError("grid mismatch")
        return InitialData(self.phi0, self.phi1, grid)


def linear_flow_spectrum(data: InitialData, times):
    lam = grid_lambda(data.grid)
    a0 = to_spectrum(data.phi0)
    a1 = to_spectrum(data.phi1)
    t = np.atleast_1d(np.asarray(times, float))[:, None, None]
    return np.cos(t * lam) * a0 + wave_multiplier(t, lam) * a1


def linear_flow(data: InitialData, t):
    """cos(t|lam|) phi0_hat + sin(t|lam|)/|lam| phi1_hat, back on the lattice.

    Scalar ``t`` gives one slice, an array gives a stack.
    """
    out = from_spectrum(linear_flow_spectrum(data, t), data.grid.nx)
    return out[0] if np.ndim(t) == 0 else out


# ------------------------------------------------------------------ Gamma map

def l_inf_half_norm(data, grid):
    """sup_t ||.||_{W^{1/2,2}} with the window equal to one."""
    v = sobolev_norm(data, 0.5, 2, "one", grid)
    return float(np.max(v))


class GammaMap:
    """Gamma_{T, phi, Psi}: w -> linear flow + G * (seven-term source).

    Path-only quantities are computed once; each call costs two dealiased
    products per time slice.
    """

    def __init__(self, path: EnhancedPath, data: InitialData, T=None):
        psi = path.psi
        self.grid = psi.grid
        times = np.asarray(psi.times)
        if T is None:
            T = times[-1]
        if T > times[-1] + 1e-12:
            raise ValueError("T exceeds the path horizon")
        k = int(np.searchsorted(times, T + 1e-12))
        if k < 2:
            raise ValueError("need at least two time slices")
        for f in path.components.values():
            if f.data.shape != psi.data.shape or f.grid.nx != self.grid.nx:
                raise ValueError("grid mismatch")
        if data.grid.nx != self.grid.nx or data.grid.period != self.grid.period:
            raise ValueError("grid mismatch")
        self.k = k
        self.times = times[:k]
        self.r2 = np.broadcast_to(rho_field(self.grid) ** 2, (k, self.grid.nx, self.grid.nx))
        self.lam = grid_lambda(self.grid)
        self.lin = from_spectrum(linear_flow_spectrum(data, self.times), self.grid.nx)
        ip = path.ipsi2.data[:k]
        self.shift = 2.0 * (path.psi.data[:k] + ip)
        base = dealiased_product(ip, ip) + 2.0 * path.psi_ipsi2.data[:k]
        self.base = dealiased_product(self.r2, base)
        self.label = "w"
        self.level = psi.level

    def source(self, w):
        """rho^2 w^2 + rho^2 (IPsi2)^2 + 2 (rho w)(rho IPsi2) + 2 (rho w)(rho Psi) + 2 rho^2 Psi IPsi2."""
        return dealiased_product(self.r2, dealiased_product(w, w + self.shift)) + self.base

    def __call__(self, w):
        w = np.asarray(w, float)
        if w.shape != self.lin.shape:
            raise ValueError("grid mismatch")
        spec = duhamel_spectrum(to_spectrum(self.source(w)), self.times, self.lam)
        return self.lin + from_spectrum(spec, self.grid.nx)

    def norm(self, w):
        return l_inf_half_norm(w, self.grid)

    def field(self, w):
        return Field(w, self.grid, self.label, self.level, self.times)


def gamma_map(w: Field, path: EnhancedPath, data: InitialData, T=None) -> Field:
    """One application of Gamma on the lattice times t <= T."""
    G = GammaMap(path, data, T)
    return G.field(G(w.data[:G.k]))


# ------------------------------------------------------------------ Picard

@dataclass
class PicardDiagnostics:
    iterations: int = 0
    updates: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    contraction: float = float("nan")
    residual: float = float("nan")
    T0: float = float("nan")
    halvings: int = 0
    status: str = "running"

    def to_dict(self):
        return {"iterations": self.iterations, "updates": list(self.updates),
                "ratios": list(self.ratios), "contraction": self.contraction,
                "residual": self.residual, "T0": self.T0, "halvings": self.halvings,
                "status": self.status}


def picard_solve(path: EnhancedPath, data: InitialData, T0=None, tol=1e-8, max_iter=100,
                 start="linear", blowup=1e12):
    """Iterate w_{k+1} = Gamma(w_k) until the L^inf_T W^{1/2,2} update is below ``tol``.

    Parameters
    ----------
    start : {"linear", "zero"} or ndarray
        Initial iterate.

    Returns
    -------
    w : Field
    diag : PicardDiagnostics
        ``contraction`` is the geometric mean of the update ratios and
        ``residual`` is ||w - Gamma(w)|| for the returned ``w``.

    Raises
    ------
    NoContraction
        Three consecutive update ratios >= 1, or the iterates blow up.
    MaxIterExceeded
    """
    G = GammaMap(path, data, T0)
    diag = PicardDiagnostics(T0=float(G.times[-1]))
    if isinstance(start, str):
        if start == "linear":
            w = G.lin.copy()
        elif start == "zero":
            w = np.zeros_like(G.lin)
        else:
            raise ValueError(f"unknown start {start!r}")
    else:
        w = np.asarray(start, float)[:G.k].copy()
    bad = 0
    for it in range(1, max_iter + 1):
        w_new = G(w)
        d = G.norm(w_new - w)
        diag.iterations = it
        diag.updates.append(d)
        if not math.isfinite(d) or d > blowup:
            diag.status = "no_contraction"
            raise NoContraction("iterates blew up", diag)
        if len(diag.updates) > 1 and diag.updates[-2] > 0:
            r = d / diag.updates[-2]
            diag.ratios.append(r)
            bad = bad + 1 if r >= 1.0 else 0
            if bad >= 3:
                diag.status = "no_contraction"
                raise NoContraction("update ratio >= 1 over three iterates", diag)
        w = w_new
        if d <= tol:
            break
    else:
        diag.status = "max_iter"
        raise MaxIterExceeded(f"no convergence in {max_iter} iterations", diag)
    diag.residual = G.norm(w - G(w))
    rs = [r for r in diag.ratios if r > 0]
    diag.contraction = float(np.exp(np.mean(np.log(rs)))) if rs else 0.0
    diag.status = "converged"
    return G.field(w), diag


def restrict_path(path: EnhancedPath, grid: GridSpec) -> EnhancedPath:
    """Drop lattice times beyond the horizon of ``grid`` (same dt required)."""
    k = grid.nt + 1
    comps = [Field(f.data[:k], grid, f.label, f.level, f.times[:k])
             for f in (path.psi, path.psi2, path.ipsi2, path.psi_ipsi2)]
    return EnhancedPath(*comps, alpha=path.alpha)


def solve_adaptive(cfg: RunConfig, n, seed, data: InitialData, T0=None, tol=1e-8, max_iter=100,
                   halvings=6, start="linear"):
    """Picard on [0, T0], halving T0 on NoContraction (at most ``halvings`` times).

    The path is rebuilt on each trial interval with the grid's number of steps.
    Returns ``(path, w, diag)``.
    """
    g = cfg.grid
    T = g.horizon if T0 is None else float(T0)
    modes = sample_modes(cfg, n, seed)
    alpha = cfg.sobolev.alpha if cfg.sobolev is not None else None
    last = None
    for h in range(halvings + 1):
        grid = GridSpec(level=g.level, period=g.period, nx=g.nx, nt=g.nt, horizon=T, n_xi=g.n_xi)
        path = enhanced_path_from_modes(modes, grid, alpha)
        try:
            w, diag = picard_solve(path, data.on(grid), None, tol, max_iter, start)
        except NoContraction as e:
            last = e
            T *= 0.5
            continue
        diag.halvings = h
        return path, w, diag
    raise NoContraction(f"no contraction after {halvings} halvings", last.diag if last else None)


def reconstruct_u(path: EnhancedPath, w: Field) -> Field:
    """u = Psi + I Psi^2 + w on the times of ``w``."""
    k = w.data.shape[0]
    if path.psi.grid.nx != w.grid.nx or path.psi.data.shape[0] < k:
        raise ValueError("grid mismatch")
    u = path.psi.data[:k] + path.ipsi2.data[:k] + w.data
    return Field(u, w.grid, "u", w.level, w.times)


def path_continuity(path: EnhancedPath, data: InitialData, deltas=(1e-2, 1e-3), tol=1e-11,
                    spec: SobolevSpec | None = None, max_iter=200):
    """||w(path') - w(path)|| / delta for paths perturbed by ``delta`` in the path norm.

    The perturbation is a rescaling of every component, so its size in the
    (p = 4 by default) path norm is exactly ``delta``.
    """
    spec = spec or SobolevSpec(alpha=path.alpha if path.alpha is not None else 0.4, p=4)
    size = epath_norm(path, spec).total()
    if size == 0:
        raise ValueError("zero path")
    w0, _ = picard_solve(path, data, None, tol, max_iter)
    out = []
    for d in deltas:
        w1, _ = picard_solve(path.scaled(1.0 + d / size), data, None, tol, max_iter)
        out.append(l_inf_half_norm(w1.data - w0.data, w0.grid) / d)
    return out


# ------------------------------------------------------------------ direct integrator

def integrate_renormalized_pde(cfg: RunConfig, n, seed, data: InitialData, grid: GridSpec = None,
                               nonlinear=True, noise=True, blowup=1e8, modes: ModeSet = None):
    """Trigonometric leapfrog for u'' - Delta u = rho^2 u^2 - sigma + (1 - rho^2) Psi^2 + dB.

    With N(u) = Q(u, u) - sigma + P(1 - rho^2, P(Psi, Psi)) the update is

        u^{k+1} = 2 cos(lam dt) u^k - u^{k-1} + 2 (1 - cos(lam dt)) / lam^2 N(u^k) + F^k,

    where F^k = Psi(t+dt) - 2 cos(lam dt) Psi(t) + Psi(t-dt) is the exact response
    to the noise over two steps, synthesized from the same mode set.

    Raises
    ------
    CFLViolation
        dt * 2^n > 1/2.
    BlowUp
        max |u| exceeds ``blowup``.
    """
    g = cfg.grid if grid is None else grid
    if g.dt * 2.0 ** n > 0.5 + 1e-12:
        raise CFLViolation(f"dt * 2^n = {g.dt * 2.0 ** n:.4g} > 1/2")
    times = g.times()
    nx = g.nx
    lam = grid_lambda(g)
    data = data.on(g)
    c = np.cos(g.dt * lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(lam > 0, 2.0 * (1.0 - c) / np.where(lam > 0, lam * lam, 1.0), g.dt ** 2)
    r2 = rho_field(g) ** 2
    if noise:
        if modes is None:
            modes = sample_modes(cfg.with_(grid=g), n, seed)
        P = psi_spectrum(modes, g, times)
        psi = from_spectrum(P, nx)
        sig = lattice_variance(modes, times, nx)
    else:
        P = np.zeros((times.size, nx, nx // 2 + 1), complex)
        psi = np.zeros((times.size, nx, nx))
        sig = np.zeros(times.size)

    def N(k, u):
        if not nonlinear:
            return 0.0
        sq = dealiased_product(psi[k], psi[k])
        f = dealiased_product(r2, dealiased_product(u, u)) - sig[k] + dealiased_product(1.0 - r2, sq)
        return to_spectrum(f)

    out = np.empty((times.size, nx, nx))
    a0, a1 = to_spectrum(data.phi0), to_spectrum(data.phi1)
    U0 = a0
    out[0] = from_spectrum(U0, nx)
    # first step: exact linear part, half weight on the source, exact noise response
    U1 = c * a0 + wave_multiplier(g.dt, lam) * a1 + 0.5 * q * N(0, out[0]) + P[1] - P[0]
    out[1] = from_spectrum(U1, nx)
    for k in range(1, g.nt):
        F = P[k + 1] - 2.0 * c * P[k] + P[k - 1]
        U2 = 2.0 * c * U1 - U0 + q * N(k, out[k]) + F
        out[k + 1] = from_spectrum(U2, nx)
        m = float(np.max(np.abs(out[k + 1])))
        if not math.isfinite(m) or m > blowup:
            raise BlowUp(f"|u| = {m:.3g} at t = {times[k + 1]:.4g}",
                         {"step": k + 1, "t": float(times[k + 1]), "max_abs": m})
        U0, U1 = U1, U2
    return Field(out, g, "u", n, times)


def relative_l2(a, b):
    """||a - b|| / ||b|| over all slices."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


# ------------------------------------------------------------------ Strichartz

def strichartz_ratio(source: Field):
    """||G * f||_{L^inf_T W^{1/2,2}} / ||f||_{L^1_T W^{-1/2,2}} (trapezoid in time, window one)."""
    g = source.grid
    out = duhamel_spectrum(to_spectrum(source.data), source.times, grid_lambda(g))
    top = l_inf_half_norm(from_spectrum(out, g.nx), g)
    v = sobolev_norm(source.data, -0.5, 2, "one", g)
    bot = float(trapezoid(v, source.times))
    return top / bot


def random_source(grid: GridSpec, rng: np.random.Generator, terms=4, decay=1.0):
    """Smooth random source sum_j a_j(x) cos(omega_j t + phase_j).

    The spatial profiles have spectra decaying like (1 + |lam|^2)^(-decay) and the
    time dependence is an explicit function, so refining ``nt`` samples the same
    source.
    """
    nx = grid.nx
    lam = grid_lambda(grid)
    t = grid.times()[:, None, None]
    out = np.zeros((t.shape[0], nx, nx))
    omax = 2.0 ** grid.level
    for _ in range(terms):
        z = rng.standard_normal(lam.shape) + 1j * rng.standard_normal(lam.shape)
        prof = from_spectrum(z * (1.0 + lam * lam) ** (-decay), nx)
        om = rng.uniform(0.0, omax)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        out += prof[None] * np.cos(om * t + ph)
    return Field(out, grid, "source", grid.level)


def strichartz_sweep(grid: GridSpec, count=50, seed=0):
    """Ratios for ``count`` random sources; source j uses the generator seeded by (seed, j)."""
    vals = []
    for j in range(count):
        rng = np.random.default_rng([seed, j])
        vals.append(strichartz_ratio(random_source(grid, rng)))
    return np.array(vals)

"""Lattice construction of the enhanced path (Psi, Psi^2, I Psi^2, Psi I Psi^2).

Spatial layout
--------------
Fields live on the periodic cell [-L, L)^2 sampled at ``nx`` points per axis in
FFT order: x_a = dx * a for a < nx/2 and dx * (a - nx) otherwise, so the origin is
index 0.  Spectra use the ``rfft2`` half layout; a spatial mode with integer
index k has frequency eta = k * pi / L.

Time synthesis
--------------
Psi_hat(t, eta) = sum_q a_q gamma_t(xi_q, rho).  Expanding gamma into its three
exponentials gives

    Psi_hat = -(1/(2 rho)) [e^{i t rho} S_u + e^{-i t rho} S_v - sum_q b_q e^{i xi_q t}],

with S_u = sum a/(rho - xi), S_v = sum a/(rho + xi), b = a (1/(rho-xi) + 1/(rho+xi)).
The last sum over many times is a single matrix product.  Modes with
rho = 0 or |rho - |xi|| < RES_THR are evaluated directly with the closed form.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from ._backend import kern
from .core import GridSpec, RunConfig
from .kernels import gamma, gamma_sq
from .noise import ModeSet, sample_modes

RES_THR = 1e-3
CHUNK = 1 << 21  # complex entries per synthesis block
SLAB = 1 << 24   # complex entries of Psi spectra held at once in path_slices

LABELS = ("psi", "psi2", "ipsi2", "psi_ipsi2")


@dataclass(eq=False)
class Field:
    """Real lattice field, ``data`` of shape (len(times), nx, nx)."""

    data: np.ndarray
    grid: GridSpec
    label: str
    level: int
    times: np.ndarray = None

    def __post_init__(self):
        if self.times is None:
            self.times = self.grid.times()
        if self.data.shape[0] != len(self.times):
            raise ValueError("data and times disagree")

    def like(self, data, label):
        return Field(data, self.grid, label, self.level, self.times)

    def __sub__(self, other):
        _check_same(self, other)
        return self.like(self.data - other.data, self.label)

    def __add__(self, other):
        _check_same(self, other)
        return self.like(self.data + other.data, self.label)


@dataclass(eq=False)
class EnhancedPath:
    psi: Field
    psi2: Field
    ipsi2: Field
    psi_ipsi2: Field
    alpha: float | None = None
    norms: object = None

    @property
    def components(self):
        return {"psi": self.psi, "psi2": self.psi2, "ipsi2": self.ipsi2, "psi_ipsi2": self.psi_ipsi2}

    def scaled(self, c):
        """Path with every component multiplied by ``c`` (used in continuity probes)."""
        return EnhancedPath(*(f.like(c * f.data, f.label) for f in
                              (self.psi, self.psi2, self.ipsi2, self.psi_ipsi2)), alpha=self.alpha)


def orders(alpha):
    """Regularity orders of the four components."""
    return {"psi": -alpha, "psi2": -2 * alpha, "ipsi2": 1 - 2 * alpha, "psi_ipsi2": -alpha}


def _check_same(a, b):
    if a.data.shape != b.data.shape or a.grid.nx != b.grid.nx or a.grid.period != b.grid.period:
        raise ValueError("grid mismatch")


# ---------------------------------------------------------------- spectra

def grid_lambda(grid: GridSpec, half=True):
    """|eta| on the (rfft) spectral grid."""
    nx = grid.nx
    k = sfft.fftfreq(nx, 1.0 / nx)
    kr = sfft.rfftfreq(nx, 1.0 / nx) if half else k
    h = np.pi / grid.period
    return h * np.hypot(k[:, None], kr[None, :])


def to_spectrum(data):
    """Half spectrum with the field = sum of coefficients * exp(i eta x) convention."""
    nx = data.shape[-1]
    return sfft.rfft2(data, axes=(-2, -1), workers=1) / (nx * nx)


def from_spectrum(spec, nx):
    return sfft.irfft2(spec, s=(nx, nx), axes=(-2, -1), workers=1) * (nx * nx)


def synth_mask(modes: ModeSet, nx):
    """Spatial modes representable on an ``nx`` grid (Nyquist bins are left empty)."""
    return (np.abs(modes.k1) < nx // 2) & (np.abs(modes.k2) < nx // 2)


def _half_modes(modes: ModeSet, nx):
    k1, k2 = modes.k1, modes.k2
    half = (k2 > 0) | ((k2 == 0) & (k1 >= 0))
    return np.nonzero(half & synth_mask(modes, nx))[0]


def psi_spectrum(modes: ModeSet, grid: GridSpec, times):
    """Half spectra of Psi at ``times``, shape (len(times), nx, nx//2 + 1)."""
    nx = grid.nx
    times = np.atleast_1d(np.asarray(times, float))
    out = np.zeros((times.size, nx, nx // 2 + 1), dtype=complex)
    if modes.j.size == 0 or modes.k1.size == 0:
        return out
    sel = _half_modes(modes, nx)
    xi = modes.xi
    E = np.exp(1j * np.outer(times, xi))
    step = max(1, CHUNK // max(1, xi.size))
    for s0 in range(0, sel.size, step):
        idx = sel[s0:s0 + step]
        k1, k2 = modes.k1[idx], modes.k2[idx]
        rho = modes.rho[idx]
        B, Su, Sv, rq, re_, ra = kern.draw_split(modes.seed, modes.j, xi, modes.wxi, k1, k2,
                                                 rho, modes.weta[idx], RES_THR)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(rho > 0, -0.5 / np.where(rho > 0, rho, 1.0), 0.0)
        ph = np.exp(1j * np.outer(times, rho))
        P = (ph * Su + np.conj(ph) * Sv - E @ B) * fac
        if rq.size:
            G = gamma(xi[rq][None, :], rho[re_][None, :], times[:, None]) * ra
            for c in range(times.size):
                P[c] += np.bincount(re_, G[c].real, idx.size) + 1j * np.bincount(re_, G[c].imag, idx.size)
        out[:, k1 % nx, k2] = P
    # k2 = 0 column must be Hermitian in k1
    col = out[:, 1:nx // 2, 0]
    out[:, nx - 1:nx // 2:-1, 0] = np.conj(col)
    out[:, 0, 0] = out[:, 0, 0].real
    out[times == 0] = 0  # gamma_0 = 0; drop the cancellation residue
    return out


def psi_slices(modes: ModeSet, grid: GridSpec, times):
    """Real Psi values at ``times``, shape (len(times), nx, nx)."""
    return from_spectrum(psi_spectrum(modes, grid, times), grid.nx)


def build_psi(modes: ModeSet, grid: GridSpec, times=None) -> Field:
    """Spectral synthesis of Psi on the grid (all lattice times unless ``times`` given)."""
    t = grid.times() if times is None else np.atleast_1d(np.asarray(times, float))
    return Field(psi_slices(modes, grid, t), grid, "psi", modes.level, t)


def lattice_variance(modes: ModeSet, t, nx=None):
    """Exact variance sum_modes w^2 |gamma_t|^2 of the synthesized Psi at time(s) ``t``.

    With ``nx`` given, modes that do not fit the grid are excluded exactly as in
    the synthesis.  Away from resonance, with u = 1/(rho - xi) and v = 1/(rho + xi),

        4 rho^2 |gamma_t|^2 = u^2 + v^2 + (u+v)^2 + 2 u v cos(2 t rho)
                              - 2 u (u+v) cos(t (rho - xi)) - 2 v (u+v) cos(t (rho + xi)),

    so the sum over xi reduces to two matrix products over all times at once.
    """
    t = np.asarray(t, float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if modes.j.size == 0 or modes.k1.size == 0:
        out = np.zeros(t.size)
        return float(out[0]) if scalar else out
    keep = np.ones(modes.k1.size, bool) if nx is None else synth_mask(modes, nx)
    r2 = (modes.k1 * modes.k1 + modes.k2 * modes.k2)[keep]
    ur, inv = np.unique(r2, return_inverse=True)
    wsum = np.bincount(inv, modes.weta[keep] ** 2)
    rho = np.pi / modes.period * np.sqrt(ur.astype(float))
    xi = modes.xi
    wx2 = modes.wxi ** 2
    res = (rho[None, :] == 0) | (np.abs(rho[None, :] - np.abs(xi)[:, None]) < RES_THR)
    with np.errstate(divide="ignore"):
        U = np.where(res, 0.0, 1.0 / (rho[None, :] - xi[:, None]))
        V = np.where(res, 0.0, 1.0 / (rho[None, :] + xi[:, None]))
    S = U + V
    W = wx2[:, None]
    const = np.sum(W * (U * U + V * V + S * S), axis=0)
    cross = np.sum(W * U * V, axis=0)
    A = W * U * S
    B = W * V * S
    out = np.empty(t.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(rho > 0, wsum / (4.0 * np.where(rho > 0, rho, 1.0) ** 2), 0.0)
    rq, rr = np.nonzero(res)
    step = max(1, CHUNK // max(1, xi.size + rho.size))
    for s0 in range(0, t.size, step):
        tb = t[s0:s0 + step]
        E = np.exp(1j * np.outer(tb, xi))
        ph = np.exp(1j * np.outer(tb, rho))
        osc = np.real(ph * (np.conj(E) @ A + E @ B))
        val = const + 2.0 * cross * np.cos(2.0 * np.outer(tb, rho)) - 2.0 * osc
        tot = val @ scale
        if rq.size:
            g = gamma_sq(xi[rq][None, :], rho[rr][None, :], tb[:, None])
            tot = tot + g @ (wx2[rq] * wsum[rr])
        out[s0:s0 + step] = tot
    out[t == 0] = 0.0
    return float(out[0]) if scalar else out


def lattice_variance_direct(modes: ModeSet, t, nx=None):
    """Same quantity through the closed form of |gamma|^2, one time at a time."""
    t = np.atleast_1d(np.asarray(t, float))
    if modes.j.size == 0 or modes.k1.size == 0:
        return np.zeros(t.size)
    keep = np.ones(modes.k1.size, bool) if nx is None else synth_mask(modes, nx)
    r2 = (modes.k1 * modes.k1 + modes.k2 * modes.k2)[keep]
    ur, inv = np.unique(r2, return_inverse=True)
    wsum = np.bincount(inv, modes.weta[keep] ** 2)
    rho = np.pi / modes.period * np.sqrt(ur.astype(float))
    wx2 = modes.wxi ** 2
    return np.array([wsum @ (gamma_sq(modes.xi[None, :], rho[:, None], ti) @ wx2) for ti in t])


# ---------------------------------------------------------------- products

def _pad(spec, nx, m):
    out = np.zeros(spec.shape[:-2] + (m, m // 2 + 1), dtype=complex)
    h = nx // 2
    out[..., :h, :h] = spec[..., :h, :h]
    out[..., m - h + 1:, :h] = spec[..., nx - h + 1:, :h]
    return out


def _trunc(spec, nx, m):
    out = np.zeros(spec.shape[:-2] + (nx, nx // 2 + 1), dtype=complex)
    h = nx // 2
    out[..., :h, :h] = spec[..., :h, :h]
    out[..., nx - h + 1:, :h] = spec[..., m - h + 1:, :h]
    return out


def _even_fast(n):
    """Smallest even FFT-friendly length >= n."""
    m = sfft.next_fast_len(int(n), real=True)
    while m % 2:
        m = sfft.next_fast_len(m + 1, real=True)
    return m


def dealiased_product(a, b):
    """Pointwise product of two real lattice fields with the 3/2 zero-padding rule.

    Inputs are projected onto the modes |k_i| < nx/2, multiplied on a grid of at
    least 3 nx / 2 points per axis and truncated back to the same modes.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("grid mismatch")
    nx = a.shape[-1]
    m = _even_fast(3 * nx // 2)
    fa = from_spectrum(_pad(to_spectrum(a), nx, m), m)
    fb = fa if b is a else from_spectrum(_pad(to_spectrum(b), nx, m), m)
    return from_spectrum(_trunc(to_spectrum(fa * fb), nx, m), nx)


def product(f: Field, g: Field, label="product") -> Field:
    _check_same(f, g)
    return f.like(dealiased_product(f.data, g.data), label)


def wick_square(psi: Field, modes: ModeSet) -> Field:
    """Psi^2 minus the exact lattice variance at every time slice."""
    sq = dealiased_product(psi.data, psi.data)
    var = lattice_variance(modes, psi.times, psi.grid.nx)
    return psi.like(sq - var[:, None, None], "psi2")


# ---------------------------------------------------------------- Duhamel

def duhamel_weights(times):
    times = np.asarray(times, float)
    dt = np.diff(times)
    if times.size < 2 or not np.allclose(dt, dt[0], rtol=1e-10, atol=0):
        raise ValueError("Duhamel integration needs a uniform time lattice")
    return float(dt[0])


class DuhamelStream:
    """Running trapezoid sums for out(t_i) = int_0^{t_i} sin((t_i - s) lam)/lam f(s) ds.

    Feed source spectra slice by slice with :meth:`push`; :meth:`value` gives the
    convolution at the time of the next slice to be pushed.
    """

    def __init__(self, lam, dt):
        self.lam = np.asarray(lam, float)
        self.dt = dt
        self.zero = self.lam == 0
        self.inv = np.where(self.zero, 0.0, 1.0 / np.where(self.zero, 1.0, self.lam))
        self.C = 0.0
        self.S = 0.0
        self.W = 0.0   # sum of w f, for lam = 0
        self.WT = 0.0  # sum of w t f
        self.count = 0

    def value(self, t):
        if self.count == 0:
            return np.zeros(self.lam.shape, complex)
        s, c = np.sin(t * self.lam), np.cos(t * self.lam)
        out = (s * self.C - c * self.S) * self.inv
        return np.where(self.zero, t * self.W - self.WT, out)

    def push(self, t, f):
        w = 0.5 * self.dt if self.count == 0 else self.dt
        self.C = self.C + w * np.cos(t * self.lam) * f
        self.S = self.S + w * np.sin(t * self.lam) * f
        self.W = self.W + w * f
        self.WT = self.WT + w * t * f
        self.count += 1


def duhamel_spectrum(src_spec, times, lam):
    """Apply the trapezoid Duhamel operator to a stack of spectra (time first)."""
    dt = duhamel_weights(times)
    out = np.zeros_like(src_spec, dtype=complex)
    st = DuhamelStream(lam, dt)
    for i, t in enumerate(times):
        out[i] = st.value(t)
        st.push(t, src_spec[i])
    return out


def duhamel_convolve(source: Field) -> Field:
    """Wave-kernel convolution G * source with zero initial data (trapezoid in time)."""
    lam = grid_lambda(source.grid)
    spec = to_spectrum(source.data)
    out = duhamel_spectrum(spec, source.times, lam)
    return source.like(from_spectrum(out, source.grid.nx), "duhamel")


def third_order(ipsi2: Field, psi: Field) -> Field:
    return product(ipsi2, psi, "psi_ipsi2")


# ---------------------------------------------------------------- assembly

def enhanced_path_from_modes(modes: ModeSet, grid: GridSpec, alpha=None) -> EnhancedPath:
    psi = build_psi(modes, grid)
    psi2 = wick_square(psi, modes)
    ipsi2 = duhamel_convolve(psi2)
    ipsi2.label = "ipsi2"
    return EnhancedPath(psi, psi2, ipsi2, third_order(ipsi2, psi), alpha=alpha)


def build_enhanced_path(cfg: RunConfig, n: int, seed=None) -> EnhancedPath:
    """Assemble the four components at level ``n`` from ``(cfg, seed)``."""
    modes = sample_modes(cfg, n, seed)
    alpha = cfg.sobolev.alpha if cfg.sobolev is not None else None
    return enhanced_path_from_modes(modes, cfg.grid, alpha)


def zero_path(grid: GridSpec, alpha=None) -> EnhancedPath:
    z = np.zeros((grid.nt + 1, grid.nx, grid.nx))
    return EnhancedPath(*(Field(z.copy(), grid, lab, 0) for lab in LABELS), alpha=alpha)


def path_slices(modes: ModeSet, grid: GridSpec, at_times):
    """All four components at selected lattice times without storing full fields.

    The Duhamel sums are accumulated while Psi is synthesized slice by slice over
    the grid's time lattice.  Returns ``{label: array (len(at_times), nx, nx)}``.
    """
    times = grid.times()
    idx = [int(np.argmin(np.abs(times - t))) for t in np.atleast_1d(at_times)]
    for i, t in zip(idx, np.atleast_1d(at_times)):
        if abs(times[i] - t) > 1e-12:
            raise ValueError(f"time {t} is not on the lattice")
    lam = grid_lambda(grid)
    st = DuhamelStream(lam, grid.dt)
    nx = grid.nx
    res = {lab: np.zeros((len(idx), nx, nx)) for lab in LABELS}
    want = {}
    for pos, i in enumerate(idx):
        want.setdefault(i, []).append(pos)
    last = max(idx)
    # Psi spectra for as many times as fit in SLAB complex entries per block
    block = max(16, SLAB // (nx * (nx // 2 + 1)))
    for b0 in range(0, last + 1, block):
        tb = times[b0:min(last + 1, b0 + block)]
        psi_b = psi_slices(modes, grid, tb)
        var_b = lattice_variance(modes, tb, nx)
        for c, t in enumerate(tb):
            i = b0 + c
            psi = psi_b[c]
            w2 = dealiased_product(psi, psi) - var_b[c]
            ispec = st.value(t)
            st.push(t, to_spectrum(w2))
            if i in want:
                ip = from_spectrum(ispec, nx)
                vals = {"psi": psi, "psi2": w2, "ipsi2": ip, "psi_ipsi2": dealiased_product(ip, psi)}
                for pos in want[i]:
                    for lab in LABELS:
                        res[lab][pos] = vals[lab]
    return res


# ---------------------------------------------------------------- snapshots

_FWAV = b"FWAV"
_VERSION = 1


def write_field(path, f: Field):
    """Binary snapshot: header, label, grid descriptor, times, then row-major (t, x1, x2) data."""
    lab = f.label.encode()[:32].ljust(32, b"\0")
    g = f.grid
    hdr = struct.pack("<4sI32sqdqqdqq", _FWAV, _VERSION, lab, g.level, g.period, g.nx, g.nt,
                      g.horizon, -1 if g.n_xi is None else g.n_xi, f.data.shape[0])
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(np.asarray(f.times, "<f8").tobytes())
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_field(path, level=None) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    fmt = "<4sI32sqdqqdqq"
    size = struct.calcsize(fmt)
    magic, ver, lab, lev, period, nx, nt, T, nxi, ns = struct.unpack(fmt, raw[:size])
    if magic != _FWAV or ver != _VERSION:
        raise ValueError("not a FWAV snapshot")
    grid = GridSpec(level=lev, period=period, nx=nx, nt=nt, horizon=T, n_xi=None if nxi < 0 else nxi)
    times = np.frombuffer(raw, "<f8", ns, size).astype(float)
    data = np.frombuffer(raw, "<f8", ns * nx * nx, size + 8 * ns).astype(float).reshape(ns, nx, nx)
    return Field(data, grid, lab.rstrip(b"\0").decode(), lev if level is None else level, times)

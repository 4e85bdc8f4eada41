"""Seeded spectral sampling of the truncated noise modes.

The truncated field at level n is a sum over a product lattice of temporal
frequencies xi_j = j * dxi / 2 (j odd) and spatial frequencies eta_k = k * pi / L
restricted to the disk |eta| <= 2**n and |xi| <= 2**n.  Each mode carries a
complex Gaussian drawn from a counter-based generator keyed by the seed and the
integer mode index, so lattices at different levels share their common modes
exactly and the draw order is irrelevant.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._backend import kern
from .core import ConfigError, HurstTriple, RunConfig, _err


def _cell_mass(center, half, p):
    """int over [center - half, center + half] of |x|^p, for p > -1."""
    def F(x):
        return np.sign(x) * np.abs(x) ** (p + 1.0) / (p + 1.0)
    return F(center + half) - F(center - half)


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Truncated mode lattice with its deterministic Gaussian coefficients.

    Coefficients are not stored; :meth:`coeffs` regenerates them from ``seed``
    on demand, so arbitrarily large lattices stay cheap to hold.

    Attributes
    ----------
    j : ndarray of int64
        Odd temporal indices, ``xi = j * xi_step / 2``.
    k1, k2 : ndarray of int64
        Spatial indices of every retained mode (full disk, both half-planes).
    wxi, weta : ndarray
        Square roots of the cell masses of the spectral density.
    """

    hurst: HurstTriple
    level: int
    period: float
    xi_step: float
    seed: int
    j: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    wxi: np.ndarray
    weta: np.ndarray

    @property
    def xi(self):
        return 0.5 * self.xi_step * self.j

    @property
    def eta(self):
        h = np.pi / self.period
        return np.stack([self.k1 * h, self.k2 * h], axis=-1)

    @property
    def rho(self):
        return np.pi / self.period * np.hypot(self.k1, self.k2)

    @property
    def size(self):
        return self.j.size * self.k1.size

    @property
    def weights(self):
        """Per-mode weight matrix, shape (n_xi, n_eta)."""
        return self.wxi[:, None] * self.weta[None, :]

    def coeffs(self):
        """Complex Gaussian coefficient matrix, shape (n_xi, n_eta)."""
        return kern.mode_gaussian(self.seed, self.j[:, None], self.k1[None, :], self.k2[None, :])

    def restrict(self, n):
        """Sub-lattice at level ``n`` (identical coefficients on shared modes)."""
        if n > self.level:
            raise ValueError("can only restrict to a lower level")
        return _lattice(self.hurst, n, self.period, self.xi_step, self.seed)

    def amplitudes(self):
        return self.coeffs() * self.weights


def _lattice(h, n, period, xi_step, seed):
    if n <= 0:
        e = np.zeros(0, np.int64)
        return ModeSet(h, max(n, 0), period, xi_step, seed, e, e, e, np.zeros(0), np.zeros(0))
    R = 2.0 ** n
    # odd j whose whole cell [(j-1), (j+1)] * xi_step / 2 lies in [-R, R]
    m = int(np.floor(2.0 * R / xi_step + 1e-9))
    jmax = m - 1 if m % 2 == 0 else m - 2
    j = np.arange(-jmax, jmax + 1, 2, dtype=np.int64)
    xi = 0.5 * xi_step * j
    wxi = np.sqrt(_cell_mass(xi, 0.5 * xi_step, 1.0 - 2.0 * h.h0))
    he = np.pi / period
    kmax = int(np.floor(R / he + 1e-9))
    kk = np.arange(-kmax, kmax + 1, dtype=np.int64)
    K1, K2 = np.meshgrid(kk, kk, indexing="ij")
    inside = (K1 * K1 + K2 * K2) * he * he <= R * R * (1 + 1e-12)
    k1 = K1[inside]
    k2 = K2[inside]
    w1 = _cell_mass(k1 * he, 0.5 * he, 1.0 - 2.0 * h.h1)
    w2 = _cell_mass(k2 * he, 0.5 * he, 1.0 - 2.0 * h.h2)
    return ModeSet(h, n, period, xi_step, int(seed), j, k1, k2, wxi, np.sqrt(w1 * w2))


def derive_mode_gaussian(seed, j, k):
    """Deterministic complex Gaussian attached to mode ``(j, k)``.

    The value depends only on the seed and the canonical member of the Hermitian
    pair ``{(j, k), (-j, -k)}``; the partner receives the conjugate.
    """
    k = np.asarray(k)
    z = kern.mode_gaussian(seed, j, k[..., 0], k[..., 1])
    return complex(z) if z.ndim == 0 else z


def sample_modes(cfg: RunConfig, n: int, seed=None) -> ModeSet:
    """Mode set of level ``n`` for the lattice described by ``cfg``.

    The temporal step is that of ``cfg.grid`` and is shared by every level, which
    is what makes lower levels exact restrictions of higher ones.
    """
    g = cfg.grid
    if n > g.level:
        raise ConfigError([_err("InvalidGrid", "level", f"n={n} exceeds grid level {g.level}")])
    errs = [e for e in g.check(n) if e["code"] == "NyquistViolation"]
    if errs:
        raise ConfigError(errs)
    return _lattice(cfg.hurst, n, g.period, g.xi_step, cfg.seed if seed is None else seed)


# ------------------------------------------------------------------ snapshots

_FWMS = b"FWMS"
_VERSION = 1


def write_modes(path, modes: ModeSet):
    """Binary snapshot: header, lattice indices, weights, then (re, im) coefficient pairs."""
    A = modes.coeffs()
    hdr = struct.pack("<4sI3dqddQqq", _FWMS, _VERSION, *modes.hurst.as_tuple(), modes.level,
                      modes.period, modes.xi_step, modes.seed & 0xFFFFFFFFFFFFFFFF,
                      modes.j.size, modes.k1.size)
    with open(path, "wb") as fh:
        fh.write(hdr)
        for arr, dt in ((modes.j, "<i8"), (modes.k1, "<i8"), (modes.k2, "<i8"),
                        (modes.wxi, "<f8"), (modes.weta, "<f8")):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
        fh.write(np.ascontiguousarray(A).view(np.float64).astype("<f8").tobytes())


def read_modes(path):
    """Inverse of :func:`write_modes`; returns ``(ModeSet, coefficients)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fmt = "<4sI3dqddQqq"
    size = struct.calcsize(fmt)
    magic, ver, h0, h1, h2, level, period, xstep, seed, nq, ne = struct.unpack(fmt, raw[:size])
    if magic != _FWMS or ver != _VERSION:
        raise ValueError("not a FWMS snapshot")
    off = size

    def take(count, dt):
        nonlocal off
        a = np.frombuffer(raw, dtype=dt, count=count, offset=off)
        off += a.nbytes
        return a.astype(dt[1:] if dt[0] == "<" else dt)

    j = take(nq, "<i8")
    k1 = take(ne, "<i8")
    k2 = take(ne, "<i8")
    wxi = take(nq, "<f8")
    weta = take(ne, "<f8")
    A = take(2 * nq * ne, "<f8").view(np.complex128).reshape(nq, ne)
    ms = ModeSet(HurstTriple(h0, h1, h2), level, period, xstep, seed, j, k1, k2, wxi, weta)
    return ms, A

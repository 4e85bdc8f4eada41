import numpy as np
import pytest

from fracwave import _backend
from fracwave.core import ConfigError, GridSpec, HurstTriple, RunConfig
from fracwave.noise import (_cell_mass, _lattice, derive_mode_gaussian, read_modes, sample_modes,
                            write_modes)
from fracwave.objects import lattice_variance, psi_spectrum, psi_slices
from fracwave.renorm import sigma_exact

BACKENDS = ["numpy"] + (["cython"] if _backend.compiled_backend is not None else [])

# Random123 known-answer vectors for philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("ctr,key,expect", KAT)
def test_philox_known_answers(name, ctr, key, expect):
    k = _backend.get(name)
    out = k.philox4x32(ctr, key)
    assert tuple(int(o) for o in out) == expect


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    a, b = _backend.get("numpy"), _backend.get("cython")
    j = np.arange(-15, 16, 2)
    k1 = np.arange(-6, 7)
    k2 = np.array([-3, 0, 2, 5, 0, 1, -1, 4, 0, 0, 2, -2, 6])
    z1 = a.mode_gaussian(2 ** 40 + 3, j[:, None], k1[None, :], k2[None, :])
    z2 = b.mode_gaussian(2 ** 40 + 3, j[:, None], k1[None, :], k2[None, :])
    assert np.array_equal(z1, z2)
    rho = np.hypot(k1, k2) * np.pi / 4
    xi = 0.125 * j
    wxi = np.linspace(0.5, 1.5, j.size)
    weta = np.linspace(1.0, 2.0, k1.size)
    r1 = a.draw_split(9, j, xi, wxi, k1, k2, rho, weta, 1e-3)
    r2 = b.draw_split(9, j, xi, wxi, k1, k2, rho, weta, 1e-3)
    for x, y in zip(r1, r2):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-15)


def test_mode_gaussian_deterministic_and_paired():
    z = derive_mode_gaussian(123, 3, (2, -1))
    assert z == derive_mode_gaussian(123, 3, (2, -1))
    assert derive_mode_gaussian(123, -3, (-2, 1)) == np.conj(z)
    assert derive_mode_gaussian(124, 3, (2, -1)) != z
    z0 = derive_mode_gaussian(5, 0, (0, 0))
    assert z0.imag == 0


def test_mode_gaussian_moments():
    seeds = np.arange(100_000, dtype=np.uint64)
    k = _backend.kern
    z = np.array([k.mode_gaussian(int(s), 1, 2, -3) for s in seeds[:2000]])
    # vectorise over modes with one seed as well, the bulk of the sample
    j = np.arange(1, 2 * 49 + 1, 2)
    k1 = np.arange(-1020, 1021)
    Z = k.mode_gaussian(77, j[:, None], k1[None, :], np.zeros_like(k1)[None, :]).ravel()[:100_000]
    n = Z.size
    assert abs(Z.mean()) <= 3 / np.sqrt(n)
    for comp in (Z.real, Z.imag):
        v = comp.var(ddof=1)
        se = np.sqrt(2.0 / (n - 1)) * 0.5
        assert abs(v - 0.5) <= 3 * se
    assert abs(np.mean(np.abs(z) ** 2) - 1.0) < 0.15
    self_p = np.array([k.mode_gaussian(int(s), 0, 0, 0) for s in range(4000)])
    assert np.all(self_p.imag == 0)
    assert abs(self_p.real.var() - 1.0) < 0.1


def test_cell_mass():
    assert _cell_mass(0.0, 0.5, 0.0) == pytest.approx(1.0)
    assert _cell_mass(2.0, 0.5, 1.0) == pytest.approx((2.5 ** 2 - 1.5 ** 2) / 2)
    # singular power integrates across the origin
    assert _cell_mass(0.0, 0.5, -0.5) == pytest.approx(2 * 2 * 0.5 ** 0.5)


def test_lattice_shape(small_cfg):
    m = sample_modes(small_cfg, 3)
    assert np.all(m.j % 2 != 0)
    xi = m.xi
    assert np.all(np.abs(xi) + 0.5 * m.xi_step <= 2 ** 3 + 1e-12)
    assert np.all(m.rho <= 2 ** 3 + 1e-9)
    # symmetric lattice: every mode has its partner
    pairs = set(zip(m.k1.tolist(), m.k2.tolist()))
    assert all((-a, -b) in pairs for a, b in pairs)
    assert m.coeffs().shape == (m.j.size, m.k1.size)


def test_level_zero_empty(small_cfg):
    m = sample_modes(small_cfg, 0)
    assert m.size == 0
    assert np.all(psi_slices(m, small_cfg.grid, [0.3]) == 0)


def test_nesting(small_cfg):
    hi = sample_modes(small_cfg, 3)
    lo = sample_modes(small_cfg, 2)
    A = hi.coeffs()
    B = lo.coeffs()
    jpos = {v: i for i, v in enumerate(hi.j.tolist())}
    kpos = {v: i for i, v in enumerate(zip(hi.k1.tolist(), hi.k2.tolist()))}
    rows = [jpos[v] for v in lo.j.tolist()]
    cols = [kpos[v] for v in zip(lo.k1.tolist(), lo.k2.tolist())]
    assert np.array_equal(A[np.ix_(rows, cols)], B)
    assert np.array_equal(hi.restrict(2).coeffs(), B)


def test_nyquist_error(hurst):
    cfg = RunConfig(hurst, GridSpec(level=5, period=4.0, nx=64), None)
    with pytest.raises(ConfigError) as e:
        sample_modes(cfg, 5)
    assert e.value.errors[0]["code"] == "NyquistViolation"
    sample_modes(cfg, 4)
    with pytest.raises(ConfigError):
        sample_modes(cfg, 6)


def test_lattice_variance_matches_continuum():
    h = HurstTriple(0.45, 0.45, 0.35)
    s = sigma_exact(h, 3, 0.7, rtol=1e-9)
    for L, dxi in [(4.0, 0.25), (8.0, 0.125)]:
        v = lattice_variance(_lattice(h, 3, L, dxi, 0), 0.7)
        assert v == pytest.approx(s, rel=1e-2)


def test_synthesis_is_real(small_cfg):
    m = sample_modes(small_cfg, 3)
    g = small_cfg.grid
    spec = psi_spectrum(m, g, [0.2, 0.5])
    full = np.fft.ifft2(np.concatenate([spec, np.conj(spec[:, (-np.arange(g.nx)) % g.nx, 1:g.nx // 2][:, :, ::-1])], axis=2), axes=(1, 2))
    assert np.max(np.abs(full.imag)) <= 1e-10 * np.max(np.abs(full.real))


def test_level_difference_support(small_cfg):
    from fracwave.kernels import gamma
    g = small_cfg.grid
    hi = sample_modes(small_cfg, 3)
    lo = sample_modes(small_cfg, 2)
    t = 0.4
    d = psi_spectrum(hi, g, [t])[0] - psi_spectrum(lo, g, [t])[0]
    A = hi.amplitudes()
    new_j = ~np.isin(hi.j, lo.j)
    for e in range(hi.k1.size):
        k1, k2 = hi.k1[e], hi.k2[e]
        if not (k2 > 0 or (k2 == 0 and k1 >= 0)):
            continue
        mask = np.ones(hi.j.size, bool) if hi.rho[e] > 2 ** 2 else new_j
        want = np.sum(A[mask, e] * gamma(hi.xi[mask], hi.rho[e], t))
        assert abs(d[k1 % g.nx, k2] - want) <= 1e-12 * max(1.0, abs(want))


def test_snapshot_roundtrip(tmp_path, small_cfg):
    m = sample_modes(small_cfg, 3)
    p = tmp_path / "m.fwms"
    write_modes(p, m)
    raw = p.read_bytes()
    assert raw[:4] == b"FWMS"
    m2, A = read_modes(p)
    assert np.array_equal(A, m.coeffs())
    assert np.array_equal(m2.k1, m.k1) and np.array_equal(m2.wxi, m.wxi)
    assert m2.hurst == m.hurst and m2.seed == m.seed
    write_modes(tmp_path / "n.fwms", m2)
    assert (tmp_path / "n.fwms").read_bytes() == raw

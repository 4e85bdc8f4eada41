import numpy as np
import pytest
from scipy import integrate

from fracwave.core import HurstTriple
from fracwave.kernels import k_kernel
from fracwave.oracles import (_j34, conv_bound_check, conv_lhs, integral_first_order, integral_J, j1_identity,
                              k_l2_norm, truncation_study, verdict)

H = HurstTriple(0.45, 0.45, 0.35)
RADII = [2.0 ** k for k in range(4, 10)]


def test_verdict_units():
    conv = [1 - 2.0 ** -k for k in range(6)]
    assert verdict(conv)[0] == "converged"
    div = [2.0 ** (0.4 * k) for k in range(6)]
    assert verdict(div)[0] == "diverging"
    log = [1.0 + k for k in range(6)]
    assert verdict(log)[0] == "diverging"
    assert verdict([1.0, 2.0, 3.0])[0] == "inconclusive"
    assert verdict([5.0] * 6)[0] == "converged"
    osc = [1, 2, 1.5, 2.5, 1.2, 2.6]
    assert verdict(osc)[0] == "inconclusive"


def test_verdict_stable_under_extension():
    vals = [1 - 2.0 ** (-0.3 * k) for k in range(12)]
    seen = [verdict(vals[:k])[0] for k in range(5, 12)]
    assert "diverging" not in seen
    assert seen[-1] == "converged"


def test_first_order_vs_scipy():
    alpha = 0.45
    R = 16.0

    def f(r):
        return r ** (3 - 2 * (H.h1 + H.h2)) / ((1 + r ** (1 + 2 * H.h0)) * (1 + r * r) ** alpha)

    ang, _ = integrate.quad(lambda th: abs(np.cos(th)) ** (1 - 2 * H.h1) * abs(np.sin(th)) ** (1 - 2 * H.h2),
                            0, np.pi / 2)
    rad, _ = integrate.quad(f, 0, R, limit=200, epsrel=1e-11)
    assert integral_first_order(H, alpha, R) == pytest.approx(4 * ang * rad, rel=1e-8)


def test_first_order_quadrants_equal():
    # the integrand is even in each coordinate, so each quadrant carries a quarter of the disk
    alpha, R = 0.4, 4.0
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.01, 3.0, (50, 2))
    f = lambda e: k_kernel(e, H) / (1 + np.sum(e * e, -1)) ** alpha
    for s in ([-1, 1], [1, -1], [-1, -1]):
        np.testing.assert_allclose(f(pts * s), f(pts), rtol=1e-14)
    one, _ = integrate.dblquad(
        lambda r, th: r * k_kernel(np.array([r * np.cos(th), r * np.sin(th)]), H) / (1 + r * r) ** alpha,
        0.0, np.pi / 2, 0.0, R, epsrel=1e-7)
    assert integral_first_order(H, alpha, R) == pytest.approx(4 * one, rel=1e-5)


def test_first_order_verdicts():
    thr = 1.5 - H.sum
    assert truncation_study("first_order", H, thr + 0.1, RADII).verdict == "converged"
    assert truncation_study("first_order", H, thr - 0.2, RADII).verdict == "diverging"


def test_j1_identity():
    a, b, gap = j1_identity(H, HurstTriple(0.4, 0.45, 0.4), 0.45, 32.0)
    assert gap <= 1e-5
    assert a > 0


def test_j_integrals_converge():
    for name in ("J1", "J2", "J3", "J4"):
        rep = truncation_study(name, H, 0.45, RADII)
        assert rep.verdict == "converged", (name, rep.values)
        assert all(np.isfinite(rep.values))


def test_j3_j4_differ_beyond_quadrature():
    # K^H(eta) K^H(eta~) is not invariant under exchanging eta_2 and eta~_2, so J3 != J4
    coarse3 = _j34(H, H, 0.45, [32.0], 3, npts=6)[0]
    fine3 = _j34(H, H, 0.45, [32.0], 3, npts=8)[0]
    coarse4 = _j34(H, H, 0.45, [32.0], 4, npts=6)[0]
    fine4 = _j34(H, H, 0.45, [32.0], 4, npts=8)[0]
    err = max(abs(coarse3 - fine3), abs(coarse4 - fine4))
    gap = abs(fine3 - fine4)
    assert gap > 10 * err
    assert 0.01 < gap / fine3 < 0.1


def test_integral_j_scalar_and_errors():
    v = integral_J(2, H, H, 0.45, 16.0)
    assert np.isscalar(v) or np.ndim(v) == 0
    with pytest.raises(ValueError):
        integral_J(5, H, H, 0.45, 16.0)
    with pytest.raises(ValueError):
        truncation_study("J9", H, 0.45)


def test_k_l2_verdicts():
    assert truncation_study("k_l2", HurstTriple(0.5, 0.5, 0.5), radii=RADII).verdict == "converged"
    assert truncation_study("k_l2", HurstTriple(0.5, 0.8, 0.5), radii=RADII).verdict == "diverging"


def test_k_l2_monotone_in_h0():
    vals = [k_l2_norm(HurstTriple(h0, 0.5, 0.5), 64.0) for h0 in (0.3, 0.4, 0.5, 0.6)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_conv_lhs_vs_dblquad():
    alpha = 0.6
    e = 3.0

    def f(r, th):
        u = np.array([r * np.cos(th), r * np.sin(th)])
        return r * (1 + (e + u[0]) ** 2 + u[1] ** 2) ** (-alpha) / (1 + r * r)

    # tail beyond r = 400 by its leading power
    v, _ = integrate.dblquad(f, 0, 2 * np.pi, 0, 400.0, epsrel=1e-9)
    tail = 2 * np.pi * 400.0 ** (-2 * alpha) / (2 * alpha)
    assert conv_lhs(e, alpha)[0] == pytest.approx(v + tail, rel=1e-3)


def test_conv_bound():
    assert np.isfinite(conv_bound_check(0.6, 0.1, np.array([0.0])))
    a = conv_bound_check(0.6, 0.1, np.linspace(0, 2.0 ** 7, 257))
    b = conv_bound_check(0.6, 0.1, np.linspace(0, 2.0 ** 8, 257))
    assert abs(b - a) / a <= 0.05
    z = [conv_bound_check(0.6, 0.0, np.linspace(0, 2.0 ** k, 257)) for k in (4, 6, 8)]
    assert z[0] < z[1] < z[2]

"""Compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--level 5] [--repeat 5]

Times Gaussian mode generation, the split mode sums used by the synthesis, and a
full Psi synthesis at one level, and checks the two backends agree bit for bit.
"""
import argparse
import timeit

import numpy as np

from fracwave import _backend, objects
from fracwave.core import GridSpec, HurstTriple, RunConfig, minimal_nx
from fracwave.noise import sample_modes


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    try:
        cy = _backend.get("cython")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    npb = _backend.get("numpy")
    n = args.level
    g = GridSpec(level=n, period=4.0, nx=minimal_nx(n), nt=8, horizon=1.0)
    modes = sample_modes(RunConfig(HurstTriple(0.45, 0.45, 0.35), g, None, seed=1), n, 1)
    j, k1, k2 = modes.j[:, None], modes.k1[None, :], modes.k2[None, :]
    print(f"level {n}: {modes.j.size} temporal x {modes.k1.size} spatial modes, nx={g.nx}")

    rows = []
    a, b = cy.mode_gaussian(1, j, k1, k2), npb.mode_gaussian(1, j, k1, k2)
    assert np.array_equal(a, b)
    rows.append(("mode_gaussian",) + tuple(_time(lambda m=m: m.mode_gaussian(1, j, k1, k2), args.repeat)
                                           for m in (cy, npb)))

    sel = np.arange(min(modes.k1.size, 4096))
    split_args = (modes.seed, modes.j, modes.xi, modes.wxi, modes.k1[sel], modes.k2[sel], modes.rho[sel],
                  modes.weta[sel], objects.RES_THR)
    for x, y in zip(cy.draw_split(*split_args), npb.draw_split(*split_args)):
        assert np.array_equal(x, y)
    rows.append(("draw_split",) + tuple(_time(lambda m=m: m.draw_split(*split_args), args.repeat)
                                        for m in (cy, npb)))

    times = g.times()
    out = {}
    saved = objects.kern
    try:
        for name, m in (("cython", cy), ("numpy", npb)):
            objects.kern = m
            out[name] = _time(lambda: objects.psi_spectrum(modes, g, times), args.repeat)
    finally:
        objects.kern = saved
    rows.append(("psi synthesis", out["cython"], out["numpy"]))

    print(f"{'kernel':<16}{'cython [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, tc, tn in rows:
        print(f"{name:<16}{tc:>12.4f}{tn:>12.4f}{tn / tc:>10.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point: ``fracwave <subcommand> --config run.json``.

Exit codes: 0 success, 1 usage error, 2 invalid configuration (JSON error list
on stderr), 3 numerical failure (diagnostics.json written to the output dir).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .core import ConfigError, HurstTriple, _err, load_config, validate_config
from ._quadrature import QuadratureError
from ._parallel import resolve_threads

SUBCOMMANDS = ("sample", "sigma", "converge", "diverge", "solve", "oracle", "crosscheck")


class NumericalFailure(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ output helpers

def fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def atomic_write(path, data: bytes):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
        raise


def csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue().encode()


def json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode()


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def atomic_binary(path, writer, obj):
    """Run a snapshot writer against a temporary path and rename it into place."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    os.close(fd)
    try:
        writer(tmp, obj)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Run:
    """Output directory, manifest and the list of files written."""

    def __init__(self, name, cfg, seeds, out=None, extra=None):
        self.name = name
        self.cfg = cfg
        self.seeds = list(seeds)
        self.extra = extra or {}
        ident = json.dumps({"sub": name, "cfg": cfg.digest(), "seeds": self.seeds,
                            "extra": self.extra}, sort_keys=True)
        self.run_id = hashlib.sha256(ident.encode()).hexdigest()[:12]
        self.dir = out or os.path.join(cfg.output_dir, f"{name}-{self.run_id}")
        self.files = {}

    def path(self, fname):
        return os.path.join(self.dir, fname)

    def put(self, fname, data: bytes):
        atomic_write(self.path(fname), data)
        self.files[fname] = hashlib.sha256(data).hexdigest()

    def put_csv(self, fname, header, rows):
        self.put(fname, csv_bytes(header, rows))

    def put_json(self, fname, obj):
        self.put(fname, json_bytes(obj))

    def put_binary(self, fname, writer, obj):
        atomic_binary(self.path(fname), writer, obj)
        with open(self.path(fname), "rb") as fh:
            self.files[fname] = hashlib.sha256(fh.read()).hexdigest()

    def manifest(self):
        return {"subcommand": self.name, "run_id": self.run_id, "config_sha256": self.cfg.digest(),
                "config": self.cfg.to_dict(), "seeds": self.seeds, "options": self.extra,
                "outputs": dict(sorted(self.files.items())), "version": __version__}

    def finish(self):
        self.put_json("manifest.json", self.manifest())
        return 0


def _seeds(cfg):
    s = cfg.study.get("seeds")
    if s is not None:
        return [int(v) for v in s]
    return [cfg.seed + i for i in range(cfg.samples)]


# ------------------------------------------------------------------ subcommands

def cmd_sample(cfg, args, threads):
    from .noise import sample_modes, write_modes
    from .objects import write_field, Field, path_slices
    n = cfg.grid.level
    t = float(cfg.study.get("t", cfg.grid.horizon))
    run = Run("sample", cfg, [cfg.seed], args.out, {"t": t})
    modes = sample_modes(cfg, n, cfg.seed)
    run.put_binary("modes.fwms", write_modes, modes)
    sl = path_slices(modes, cfg.grid, [t])
    rows = []
    for lab, arr in sl.items():
        f = Field(arr, cfg.grid, lab, n, np.array([t]))
        run.put_binary(f"{lab}.fwav", write_field, f)
        rows.append((lab, n, t, float(np.mean(arr)), float(np.std(arr)), float(np.max(np.abs(arr)))))
    run.put_csv("summary.csv", ["component", "n", "t", "mean", "std", "max_abs"], rows)
    return run.finish()


def cmd_sigma(cfg, args, threads):
    from .renorm import sigma_table, sigma_slope_fit
    from .core import Regime
    levels = [int(v) for v in cfg.study.get("levels", range(4, 10))]
    times = [float(v) for v in cfg.study.get("times", [1.0, 0.5])]
    run = Run("sigma", cfg, [], args.out, {"levels": levels, "times": times})
    tab = sigma_table(cfg.hurst, levels, times)
    run.put_csv("sigma.csv", ["n", "t", "value", "se"], [(n, t, v, 0.0) for n, t, v in tab.rows])
    fit_rows = []
    if cfg.hurst.regime == Regime.TARGET_WINDOW and len(levels) >= 4:
        t = times[0]
        fit = sigma_slope_fit(cfg.hurst, t, levels, table=tab,
                              t_half=times[1] if len(times) > 1 else 0.5 * t)
        fit_rows.append((t, fit.slope, fit.ci[0], fit.ci[1], fit.expected, fit.t_ratio))
    run.put_csv("slope.csv", ["t", "slope", "ci_low", "ci_high", "expected", "t_ratio"], fit_rows)
    return run.finish()


def cmd_converge(cfg, args, threads):
    from .analysis import mc_moment_increment
    from .objects import LABELS
    if cfg.sobolev is None:
        raise ConfigError([_err("AlphaOutOfRange", "sobolev.alpha", "no admissible order in this regime")])
    levels = [int(v) for v in cfg.study.get("levels", range(3, 6))]
    s = float(cfg.study.get("s", 0.0))
    t = float(cfg.study.get("t", cfg.grid.horizon))
    x = cfg.study.get("x")
    seeds = _seeds(cfg)
    run = Run("converge", cfg, seeds, args.out, {"levels": levels, "s": s, "t": t, "x": x})
    rows = []
    for n in levels:
        res = mc_moment_increment(cfg, "all", n, n + 1, s, t, x=x, samples=len(seeds), seeds=seeds,
                                  threads=threads)
        for lab in LABELS:
            rows.append((lab, n, n + 1, s, t, res[lab][0], res[lab][1]))
    run.put_csv("increments.csv", ["component", "n", "m", "s", "t", "estimate", "se"], rows)
    return run.finish()


def cmd_diverge(cfg, args, threads):
    from .renorm import divergence_study
    levels = [int(v) for v in cfg.study.get("levels", range(3, 8))]
    t = float(cfg.study.get("t", 1.0))
    alpha = float(cfg.study.get("alpha", 0.55))
    seeds = _seeds(cfg)
    run = Run("diverge", cfg, seeds, args.out, {"levels": levels, "t": t, "alpha": alpha})
    tab = divergence_study(cfg, levels, t, alpha, seeds=seeds, threads=threads)
    run.put_csv("divergence.csv", ["n", "t", "value", "se"], tab.rows())
    inc = [(levels[i], levels[i + 1], tab.diffs[i], tab.diff_ses[i]) for i in range(len(tab.diffs))]
    run.put_csv("increments.csv", ["n", "m", "difference", "se"], inc)
    return run.finish()


def _data(cfg, grid):
    from .solver import InitialData
    amp = float(cfg.study.get("data_amplitude", 0.1))
    return InitialData.bump(grid, amp)


def cmd_solve(cfg, args, threads):
    from .solver import solve_adaptive, reconstruct_u, NoContraction, MaxIterExceeded
    from .objects import write_field
    n = cfg.grid.level
    t0 = float(args.t0 if args.t0 is not None else cfg.study.get("t0", cfg.grid.horizon))
    tol = float(args.tol if args.tol is not None else cfg.study.get("tol", 1e-8))
    max_iter = int(cfg.study.get("max_iter", 100))
    run = Run("solve", cfg, [cfg.seed], args.out, {"t0": t0, "tol": tol, "max_iter": max_iter})
    try:
        path, w, diag = solve_adaptive(cfg, n, cfg.seed, _data(cfg, cfg.grid), t0, tol, max_iter)
    except (NoContraction, MaxIterExceeded) as e:
        d = e.diag.to_dict() if e.diag is not None else {}
        raise NumericalFailure(str(e), {"error": type(e).__name__, **d}) from e
    run.put_binary("w.fwav", write_field, w)
    run.put_binary("u.fwav", write_field, reconstruct_u(path, w))
    run.put_json("diagnostics.json", diag.to_dict())
    return run.finish()


def cmd_oracle(cfg, args, threads):
    from .oracles import truncation_study, conv_bound_check
    st = cfg.study
    which = args.integral or st.get("integral", "first_order")
    radii = [float(r) for r in st.get("radii", [2.0 ** k for k in range(4, 10)])]
    alpha = st.get("alpha", cfg.sobolev.alpha if cfg.sobolev is not None else None)
    run = Run("oracle", cfg, [], args.out, {"integral": which, "radii": radii, "alpha": alpha})
    if which == "conv_bound":
        eps = float(st.get("eps", 0.1))
        rows = []
        for R in radii:
            grid = np.linspace(0.0, R, 257)
            rows.append((R, conv_bound_check(float(alpha), eps, grid)))
        run.put_csv("report.csv", ["R", "max_ratio"], rows)
        return run.finish()
    ht = st.get("htilde")
    ht = HurstTriple(*ht) if ht is not None else None
    rep = truncation_study(which, cfg.hurst, None if alpha is None else float(alpha), radii, ht)
    rows = [(R, v) for R, v in zip(rep.radii, rep.values)]
    run.put_csv("report.csv", ["R", "value"], rows)
    run.put_json("verdict.json", {"integral": which, "verdict": rep.verdict, "ratios": rep.ratios,
                                  "growth": rep.growth, "params": rep.params})
    return run.finish()


def cmd_crosscheck(cfg, args, threads):
    from .solver import (integrate_renormalized_pde, picard_solve, reconstruct_u, relative_l2,
                         NoContraction, MaxIterExceeded, BlowUp)
    from .objects import enhanced_path_from_modes
    from .noise import sample_modes
    n = cfg.grid.level
    tol = float(args.tol if args.tol is not None else cfg.study.get("tol", 1e-10))
    seeds = _seeds(cfg)
    run = Run("crosscheck", cfg, seeds, args.out, {"tol": tol})
    rows = []
    g = cfg.grid
    data = _data(cfg, g)
    for sd in seeds:
        modes = sample_modes(cfg, n, sd)
        try:
            path = enhanced_path_from_modes(modes, g)
            w, diag = picard_solve(path, data, None, tol, int(cfg.study.get("max_iter", 100)))
            ud = integrate_renormalized_pde(cfg, n, sd, data, modes=modes)
        except (NoContraction, MaxIterExceeded, BlowUp) as e:
            raise NumericalFailure(str(e), {"seed": sd, "error": type(e).__name__}) from e
        rows.append((sd, relative_l2(ud.data, reconstruct_u(path, w).data), diag.iterations,
                     diag.residual))
    run.put_csv("crosscheck.csv", ["seed", "relative_l2", "iterations", "residual"], rows)
    return run.finish()


COMMANDS = {"sample": cmd_sample, "sigma": cmd_sigma, "converge": cmd_converge,
            "diverge": cmd_diverge, "solve": cmd_solve, "oracle": cmd_oracle,
            "crosscheck": cmd_crosscheck}


# ------------------------------------------------------------------ main

def build_parser():
    p = _Parser(prog="fracwave", description="Stochastic wave experiments with fractional noise.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=int, help="override the base seed")
        s.add_argument("--samples", type=int, help="override the ensemble size")
        s.add_argument("--threads", type=int, help="worker processes (default: $FRACWAVE_THREADS or 1)")
        s.add_argument("--out", help="output directory (default: <output.dir>/<subcommand>-<run id>)")
        if name == "solve" or name == "crosscheck":
            s.add_argument("--tol", type=float)
        if name == "solve":
            s.add_argument("--t0", type=float)
        if name == "oracle":
            s.add_argument("--integral", choices=("first_order", "J1", "J2", "J3", "J4", "k_l2",
                                                  "conv_bound"))
    return p


def _config(args):
    cfg = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.samples is not None:
        kw["samples"] = args.samples
    if kw:
        cfg = validate_config(cfg.with_(**kw))
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = _config(args)
    except ConfigError as e:
        sys.stderr.write(json.dumps({"errors": e.errors}) + "\n")
        return 2
    except OSError as e:
        sys.stderr.write(json.dumps({"errors": [_err("IOError", "config", str(e))]}) + "\n")
        return 2
    threads = resolve_threads(args.threads)
    try:
        return COMMANDS[args.cmd](cfg, args, threads)
    except ConfigError as e:
        sys.stderr.write(json.dumps({"errors": e.errors}) + "\n")
        return 2
    except ValueError as e:
        if type(e).__name__ == "CFLViolation":
            sys.stderr.write(json.dumps({"errors": [_err("CFLViolation", "grid.nt", str(e))]}) + "\n")
            return 2
        return _fail(args, cfg, {"error": type(e).__name__, "message": str(e)})
    except NumericalFailure as e:
        return _fail(args, cfg, {"message": str(e), **e.diagnostics})
    except (QuadratureError, FloatingPointError, RuntimeError) as e:
        return _fail(args, cfg, {"error": type(e).__name__, "message": str(e)})


def _fail(args, cfg, diag):
    out = args.out or os.path.join(cfg.output_dir, f"{args.cmd}-failed")
    path = os.path.join(out, "diagnostics.json")
    atomic_write(path, json_bytes(diag))
    sys.stderr.write(f"numerical failure; diagnostics in {path}\n")
    return 3


if __name__ == "__main__":
    sys.exit(main())

"""Domain types, validation and configuration loading.

Everything here is a plain value type.  Validation collects every problem it
finds instead of stopping at the first one, so the CLI can report a complete
machine-readable error list.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Any

C_H = 1.0  # harmonizable normalization, fixed to one


class Regime(str, enum.Enum):
    SUBCRITICAL = "Subcritical"
    TARGET_WINDOW = "TargetWindow"
    DIVERGENT = "Divergent"


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    Attributes
    ----------
    errors : list of dict
        One entry per violation with keys ``code``, ``field`` and ``message``.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"{e['code']}({e['field']}): {e['message']}" for e in self.errors)
        super().__init__(msg)


def _err(code, fld, message):
    return {"code": code, "field": fld, "message": message}


@dataclass(frozen=True)
class HurstTriple:
    """Hurst indices (H0, H1, H2) of the space-time fractional noise."""

    h0: float
    h1: float
    h2: float

    def __post_init__(self):
        bad = [_err("InvalidHurst", f"hurst[{i}]", f"{v!r} not in (0,1)")
               for i, v in enumerate((self.h0, self.h1, self.h2))
               if not (isinstance(v, (int, float)) and 0.0 < v < 1.0)]
        if bad:
            raise ConfigError(bad)

    @property
    def sum(self) -> float:
        return self.h0 + self.h1 + self.h2

    @property
    def regime(self) -> Regime:
        return classify_regime(self)

    @property
    def solver_admissible(self) -> bool:
        return self.h1 < 0.75 and self.h2 < 0.75 and self.sum > 1.0

    def as_tuple(self):
        return (self.h0, self.h1, self.h2)

    def alpha_window(self):
        """Open interval (3/2 - sum, 1/2) of admissible Sobolev orders."""
        return 1.5 - self.sum, 0.5

    def default_alpha(self):
        lo, hi = self.alpha_window()
        if lo >= hi:
            return None
        return 0.5 * (lo + hi)


def classify_regime(h: HurstTriple) -> Regime:
    s = h.sum
    if s > 1.25:
        return Regime.SUBCRITICAL
    if s > 1.0:
        return Regime.TARGET_WINDOW
    return Regime.DIVERGENT


@dataclass(frozen=True)
class GridSpec:
    """Space-time lattice description.

    Parameters
    ----------
    level : int
        Frequency cutoff level n, modes satisfy ``|xi| <= 2**n`` and ``|eta| <= 2**n``.
    period : float
        Half-width L of the periodization cell ``[-L, L]^2``.
    nx : int
        Points per spatial axis.
    nt : int
        Number of time steps on ``[0, horizon]``.
    horizon : float
        Final time T.
    n_xi : int, optional
        Temporal-frequency points on ``[-2**level, 2**level]``; defaults to ``8 * 2**level``.
    """

    level: int
    period: float = 4.0
    nx: int = 64
    nt: int = 64
    horizon: float = 1.0
    n_xi: int | None = None

    @property
    def xi_count(self) -> int:
        return self.n_xi if self.n_xi is not None else 8 * 2 ** self.level

    @property
    def xi_step(self) -> float:
        return 2.0 ** (self.level + 1) / self.xi_count

    @property
    def dx(self) -> float:
        return 2.0 * self.period / self.nx

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def eta_step(self) -> float:
        return math.pi / self.period

    @property
    def nyquist(self) -> float:
        return math.pi * self.nx / (2.0 * self.period)

    def times(self):
        import numpy as np
        return np.linspace(0.0, self.horizon, self.nt + 1)

    def check(self, level=None):
        """Return the list of invariant violations (empty when valid)."""
        errs = []
        n = self.level if level is None else level
        if not (isinstance(self.level, int) and self.level >= 1):
            errs.append(_err("InvalidGrid", "grid.level", "level must be an integer >= 1"))
        if not self.period >= 4.0:
            errs.append(_err("InvalidGrid", "grid.period", f"L={self.period} < 4"))
        if not (isinstance(self.nx, int) and self.nx >= 4 and self.nx % 2 == 0):
            errs.append(_err("InvalidGrid", "grid.nx", "nx must be an even integer >= 4"))
        elif isinstance(n, int) and self.nyquist < 2.0 ** n:
            errs.append(_err("NyquistViolation", "grid.nx",
                             f"pi*nx/(2L) = {self.nyquist:.4g} < 2^{n} = {2.0 ** n:g}"))
        if not (isinstance(self.nt, int) and self.nt >= 2):
            errs.append(_err("InvalidGrid", "grid.nt", "nt must be an integer >= 2"))
        if not (0.0 < self.horizon <= 1.0):
            errs.append(_err("InvalidGrid", "grid.horizon", f"T={self.horizon} not in (0,1]"))
        nxi = self.xi_count
        if not (isinstance(nxi, int) and nxi >= 2 and nxi % 2 == 0):
            errs.append(_err("InvalidGrid", "grid.n_xi", "n_xi must be an even integer >= 2"))
        return errs


@dataclass(frozen=True)
class SobolevSpec:
    """Sobolev order, integrability and localization window."""

    alpha: float
    p: int = 2
    window: str = "bump"

    def check(self, h: HurstTriple | None = None):
        errs = []
        if self.p not in (2, 4):
            errs.append(_err("InvalidSobolev", "sobolev.p", f"p={self.p} not in {{2,4}}"))
        if self.window not in ("bump", "one"):
            errs.append(_err("InvalidSobolev", "sobolev.window", f"unknown window {self.window!r}"))
        if h is not None:
            lo, hi = h.alpha_window()
            if not (lo < self.alpha < hi):
                errs.append(_err("AlphaOutOfRange", "sobolev.alpha",
                                 f"alpha={self.alpha} not in ({lo:.4g}, {hi:.4g})"))
        return errs


@dataclass(frozen=True)
class RunConfig:
    hurst: HurstTriple
    grid: GridSpec
    sobolev: SobolevSpec | None
    seed: int = 0
    samples: int = 1
    output_dir: str = "runs"
    study: dict = field(default_factory=dict, compare=False)

    def with_(self, **kw) -> "RunConfig":
        d = dict(hurst=self.hurst, grid=self.grid, sobolev=self.sobolev, seed=self.seed,
                 samples=self.samples, output_dir=self.output_dir, study=dict(self.study))
        d.update(kw)
        return RunConfig(**d)

    def to_dict(self):
        g = asdict(self.grid)
        return {
            "hurst": list(self.hurst.as_tuple()),
            "grid": g,
            "sobolev": None if self.sobolev is None else asdict(self.sobolev),
            "seed": self.seed,
            "samples": self.samples,
            "output": {"dir": self.output_dir},
            "study": dict(self.study),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def validate_config(c: RunConfig) -> RunConfig:
    """Check every invariant of ``c`` and raise :class:`ConfigError` listing all violations."""
    errs = []
    errs += c.grid.check()
    if c.sobolev is not None:
        errs += c.sobolev.check(c.hurst)
    if not (isinstance(c.samples, int) and c.samples >= 1):
        errs.append(_err("InvalidRun", "samples", "samples must be >= 1"))
    if not (isinstance(c.seed, int) and 0 <= c.seed < 2 ** 64):
        errs.append(_err("InvalidRun", "seed", "seed must be an integer in [0, 2^64)"))
    if errs:
        raise ConfigError(errs)
    return c


# --------------------------------------------------------------------- JSON

_TOP = {"hurst", "grid", "sobolev", "seed", "samples", "output", "study"}
_GRID = {"level", "period", "nx", "nt", "horizon", "n_xi"}
_SOB = {"alpha", "p", "window"}
_OUT = {"dir"}
_STUDY = {"levels", "times", "t", "s", "alpha", "t0", "tol", "max_iter", "integral",
          "htilde", "radii", "eps", "eta_radius", "contrast_hurst", "data_amplitude",
          "seeds", "x"}


def config_from_dict(d: dict[str, Any]) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a JSON-like mapping.

    Unknown keys at any level are reported as ``UnknownKey`` errors.
    """
    errs = []

    def unknown(mapping, allowed, prefix):
        for k in mapping:
            if k not in allowed:
                errs.append(_err("UnknownKey", prefix + k, "unknown key"))

    if not isinstance(d, dict):
        raise ConfigError([_err("InvalidType", "", "config must be a JSON object")])
    unknown(d, _TOP, "")
    for key, allowed in (("grid", _GRID), ("sobolev", _SOB), ("output", _OUT), ("study", _STUDY)):
        sub = d.get(key)
        if sub is not None and not isinstance(sub, dict):
            errs.append(_err("InvalidType", key, "must be an object"))
        elif sub:
            unknown(sub, allowed, key + ".")
    if "hurst" not in d:
        errs.append(_err("MissingKey", "hurst", "required"))
    if "grid" not in d or not isinstance(d.get("grid"), dict) or "level" not in d["grid"]:
        errs.append(_err("MissingKey", "grid.level", "required"))
    if errs:
        raise ConfigError(errs)

    try:
        hv = d["hurst"]
        if not (isinstance(hv, (list, tuple)) and len(hv) == 3):
            raise ConfigError([_err("InvalidHurst", "hurst", "expected three numbers")])
        h = HurstTriple(*[float(v) for v in hv])
    except ConfigError as e:
        errs += e.errors
        h = None
    except (TypeError, ValueError):
        errs.append(_err("InvalidHurst", "hurst", "expected three numbers"))
        h = None

    g = dict(d["grid"])
    try:
        grid = GridSpec(level=g["level"], period=float(g.get("period", 4.0)), nx=g.get("nx", 64),
                        nt=g.get("nt", 64), horizon=float(g.get("horizon", 1.0)), n_xi=g.get("n_xi"))
    except (TypeError, ValueError) as e:
        raise ConfigError(errs + [_err("InvalidGrid", "grid", str(e))])

    s = d.get("sobolev") or {}
    alpha = s.get("alpha")
    sob = None
    if alpha is None and h is not None:
        alpha = h.default_alpha()
    if alpha is not None:
        sob = SobolevSpec(alpha=float(alpha), p=s.get("p", 2), window=s.get("window", "bump"))
    elif s:
        # no admissible order exists (divergent regime); keep p/window for studies
        sob = None
        if s.get("p", 2) not in (2, 4):
            errs.append(_err("InvalidSobolev", "sobolev.p", "p must be 2 or 4"))

    out = d.get("output") or {}
    cfg = None
    if h is not None:
        cfg = RunConfig(hurst=h, grid=grid, sobolev=sob, seed=d.get("seed", 0),
                        samples=d.get("samples", 1), output_dir=out.get("dir", "runs"),
                        study=dict(d.get("study") or {}))
        try:
            validate_config(cfg)
        except ConfigError as e:
            errs += e.errors
    else:
        errs += grid.check()
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError([_err("InvalidJSON", "", str(e))])
    return config_from_dict(d)


def minimal_nx(level, period=4.0, factor=1.0):
    """Smallest even nx whose spatial Nyquist frequency reaches ``factor * 2**level``."""
    nx = math.ceil(factor * 2.0 ** level * 2.0 * period / math.pi)
    nx += nx % 2
    return int(nx)

"""Pseudo-spectral laboratory for the 2D quadratic wave equation driven by fractional noise."""
import os

# single-threaded BLAS keeps every per-seed computation bit-identical across worker counts
for _v in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_v, "1")

from ._backend import BACKEND  # noqa: E402
from .core import (ConfigError, GridSpec, HurstTriple, Regime, RunConfig, SobolevSpec,  # noqa: E402
                   classify_regime, load_config, validate_config)

__version__ = "0.1.0"

"""Select the compiled kernels when available, the numpy fallback otherwise.

Set ``FRACWAVE_BACKEND=numpy`` to force the fallback.
"""
import os

from . import _kernels_np as numpy_backend

BACKEND = "numpy"
kern = numpy_backend
compiled_backend = None
try:
    from . import _ckernels as compiled_backend
except ImportError:  # pragma: no cover - depends on the build
    compiled_backend = None

if compiled_backend is not None and os.environ.get("FRACWAVE_BACKEND", "").lower() != "numpy":
    kern = compiled_backend
    BACKEND = "cython"


def get(name=None):
    """Return a backend module by name (``"cython"``/``"numpy"``) or the active one."""
    if name is None:
        return kern
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")

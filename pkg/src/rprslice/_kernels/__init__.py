"""Backend selection for the hot kernels.

``RPRSLICE_BACKEND=numpy`` forces the pure-numpy path; the default uses the
numba-compiled kernels when numba imports cleanly.
"""
import logging
import os

from . import _numpy

log = logging.getLogger(__name__)

MAX_SOLUTIONS = _numpy.MAX_SOLUTIONS


def _select():
    wanted = os.environ.get("RPRSLICE_BACKEND", "numba").strip().lower()
    if wanted not in ("numba", "numpy"):
        raise ValueError(f"RPRSLICE_BACKEND must be 'numba' or 'numpy', got {wanted!r}")
    if wanted == "numpy":
        return _numpy, "numpy"
    try:
        from . import _numba
    except ImportError as exc:  # pragma: no cover - numba is a hard dependency in CI
        log.warning("numba unavailable (%s); using numpy kernels", exc)
        return _numpy, "numpy"
    return _numba, "numba"


backend, BACKEND = _select()


def get_backend(name: str):
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(name)

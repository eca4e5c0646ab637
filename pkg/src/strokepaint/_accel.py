"""Backend selection for the hot rasterization kernels.

Set ``STROKEPAINT_PURE_NUMPY=1`` to skip numba entirely; the vectorized
numpy kernels are then used everywhere. Both backends compute the same
functions and agree to floating-point rounding.
"""

from __future__ import annotations

import os

_FLAG = "STROKEPAINT_PURE_NUMPY"


def _env_wants_numpy() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    if _env_wants_numpy():
        raise ImportError("numba disabled by " + _FLAG)
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

_backend = "numba" if HAVE_NUMBA else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not available (or disabled by %s)" % _FLAG)
    _backend = name


def set_threads(n: int) -> None:
    """Thread count for the parallel kernels. Results do not depend on it."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def njit(*args, **kwargs):
    if not HAVE_NUMBA:
        raise RuntimeError("numba unavailable")
    return numba.njit(*args, **kwargs)

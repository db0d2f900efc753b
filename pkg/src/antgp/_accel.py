"""Numba switch for the hot kernels.

Set ``ANTGP_DISABLE_NUMBA=1`` before import to run every kernel as plain
Python over numpy arrays. Results are identical either way; only speed
differs.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}

DISABLED = os.environ.get("ANTGP_DISABLE_NUMBA", "").strip().lower() in _TRUTHY

try:
    if DISABLED:
        raise ImportError
    import numba

    ENABLED = True
except ImportError:
    numba = None
    ENABLED = False

numba_default = {
    "nopython": True,
    "nogil": True,
    "cache": True,
    "boundscheck": False,
    "error_model": "python",
}


def jit(func=None, **overrides):
    """``numba.njit`` with project defaults, or the identity when disabled."""

    def wrap(f):
        if not ENABLED:
            return f
        options = dict(numba_default)
        options.update(overrides)
        return numba.jit(**options)(f)

    if func is not None:
        return wrap(func)
    return wrap


def backend_name():
    return "numba" if ENABLED else "python"

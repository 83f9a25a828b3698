"""Numba switch for the hot kernels.

Set ``SOLARGRID_DISABLE_NUMBA=1`` before import to run every kernel through
its pure-numpy / pure-Python path instead of the JIT-compiled one.
"""

import os

_FLAG = os.environ.get("SOLARGRID_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None

NUMBA_ENABLED = _numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if NUMBA_ENABLED:
        return _numba.njit(cache=True)(func)
    return func

"""Numba switch.

Set ``ZEROLAP_NO_NUMBA=1`` to run every kernel through its pure-numpy/LAPACK
reference path instead of the compiled one.
"""
import os

_DISABLED = os.environ.get("ZEROLAP_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None

USE_NUMBA = _numba is not None and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise."""
    if not USE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)

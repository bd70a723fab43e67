"""Selects the kernel backend.

Numba is used when importable unless ``HSEPM_DISABLE_NUMBA`` is set to a
truthy value, in which case every kernel runs its pure-numpy twin.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("HSEPM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if NUMBA_AVAILABLE:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"

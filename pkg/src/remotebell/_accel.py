"""Numba switch for the hot kernels.

Set ``REMOTEBELL_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
implementation instead of the compiled one.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = (
    numba is not None
    and os.environ.get("REMOTEBELL_DISABLE_NUMBA", "").strip().lower() in _FALSY
)


def njit(func):
    """Compile ``func`` in nopython mode when numba is available."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)

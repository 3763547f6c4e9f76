"""Numba switch.

Hot kernels are compiled with numba when it is importable and not disabled.
Set ``SEMCAD_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to
run the pure-numpy implementations instead.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    njit = None

USE_NUMBA = HAVE_NUMBA and not _flag("SEMCAD_DISABLE_NUMBA") and not _flag("NUMBA_DISABLE_JIT")


def jit(func):
    """Compile ``func`` in nopython mode if numba is available, else return it."""
    if not HAVE_NUMBA:
        return func
    return njit(cache=True, nogil=True)(func)

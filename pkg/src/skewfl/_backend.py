"""Numba/numpy backend selection.

The hot kernels in :mod:`skewfl._kernels` exist in two variants: a numba
``@njit`` build and a vectorized numpy fallback.  The active variant is chosen
once at import time from the ``SKEWFL_BACKEND`` environment variable:

* ``auto`` (default) -- numba when importable, numpy otherwise;
* ``numba``          -- force numba, fall back with a warning if unavailable;
* ``numpy``          -- force the pure-numpy path.

Both variants implement identical arithmetic; they may differ in the last few
ulps because of summation order, never beyond that.
"""

import os
import warnings

_ENV_VAR = "SKEWFL_BACKEND"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    njit = None
    HAVE_NUMBA = False


def _select() -> bool:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in {"auto", "numba", "numpy"}:
        warnings.warn(
            f"{_ENV_VAR}={choice!r} not recognised; using 'auto'", RuntimeWarning
        )
        choice = "auto"
    if choice == "numpy":
        return False
    if choice == "numba" and not HAVE_NUMBA:
        warnings.warn(
            "numba requested via SKEWFL_BACKEND but not importable; "
            "falling back to numpy",
            RuntimeWarning,
        )
        return False
    return HAVE_NUMBA


USE_NUMBA = _select()


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"

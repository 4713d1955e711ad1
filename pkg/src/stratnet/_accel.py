"""Optional numba acceleration.

Setting the environment variable ``STRATNET_DISABLE_NUMBA=1`` (or running
without numba installed) selects the pure numpy/scipy code paths.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("STRATNET_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend():
    return "numba" if USE_NUMBA else "numpy"

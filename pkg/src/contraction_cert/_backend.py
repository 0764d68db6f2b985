"""Kernel backend selection.

Set CONTRACTION_CERT_BACKEND=numpy to force the pure-numpy code paths.
The default uses numba when it imports cleanly.
"""
import os

_requested = os.environ.get("CONTRACTION_CERT_BACKEND", "numba").strip().lower()

try:
    if _requested == "numpy":
        raise ImportError
    import numba
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


def jit(fn):
    """njit with caching and GIL release, or None without numba."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)

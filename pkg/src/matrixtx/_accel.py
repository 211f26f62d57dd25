"""Backend selection for the hot kernels.

Kernels are compiled with numba unless ``MATRIXTX_NO_NUMBA`` is set to a
truthy value, in which case the pure-numpy implementations are used.  The
flag is read once at import time; ``use_numba()`` reports the outcome.
"""

import os

_FLAG = os.environ.get("MATRIXTX_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    import numba

    _HAVE_NUMBA = True
except ImportError:
    numba = None
    _HAVE_NUMBA = False


def use_numba():
    return _HAVE_NUMBA


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` or the identity when disabled."""
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def thread_count(default=None):
    """Worker count for realization-level parallelism (``MATRIXTX_THREADS``)."""
    raw = os.environ.get("MATRIXTX_THREADS")
    if raw:
        return max(1, int(raw))
    if default is not None:
        return max(1, int(default))
    return os.cpu_count() or 1

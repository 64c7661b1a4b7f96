"""Numba switch.

Set ``POTHOLEDT_DISABLE_NUMBA=1`` (or any truthy value) before import to force
the pure-numpy kernels. Numba is also skipped when it cannot be imported.
"""

import os

_FLAG = os.environ.get("POTHOLEDT_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by POTHOLEDT_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def jit_or_none(fn):
    """Compile ``fn`` with ``numba.njit(cache=True)``, or return ``None``.

    Every jitted kernel has a numpy twin; callers fall back to it on ``None``.
    """
    if not HAVE_NUMBA:
        return None
    return _njit(cache=True, nogil=True)(fn)


BACKEND = "numba" if HAVE_NUMBA else "numpy"

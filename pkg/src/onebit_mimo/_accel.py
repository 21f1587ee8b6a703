"""Optional numba acceleration.

Set ``ONEBIT_MIMO_NUMBA=0`` before import to force the pure numpy/Python
kernels. When numba is missing the fallback is used silently.
"""

import os

_flag = os.environ.get("ONEBIT_MIMO_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    _numba = None

USE_NUMBA = _requested and _numba is not None


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit`` when acceleration is enabled."""
    if not USE_NUMBA:
        return func
    return _numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

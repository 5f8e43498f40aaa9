"""Optional numba acceleration.

Set ``DCMBQC_DISABLE_NUMBA=1`` to run every kernel as plain numpy/Python.
The flag is read once at import time.
"""

import os

NUMBA_DISABLED = os.environ.get("DCMBQC_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if NUMBA_DISABLED:
        raise ImportError
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised with the env flag
    _njit = None
    NUMBA_AVAILABLE = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    if NUMBA_AVAILABLE:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn

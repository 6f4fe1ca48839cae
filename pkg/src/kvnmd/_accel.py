"""Backend switch for the hot kernels.

Every kernel that has a numba implementation also has a pure-numpy one.
Set ``KVNMD_BACKEND=numpy`` to force the fallback; the default is ``numba``
whenever it imports.
"""
import os

try:
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def backend():
    """Return the active backend name, ``"numba"`` or ``"numpy"``."""
    want = os.environ.get("KVNMD_BACKEND", "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"KVNMD_BACKEND must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAVE_NUMBA:
        return "numpy"
    return want


def use_numba():
    return backend() == "numba"

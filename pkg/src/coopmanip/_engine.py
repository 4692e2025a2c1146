"""Kernel engine selection.

All hot numerical kernels in :mod:`coopmanip._kernels` are written as plain
numpy functions and decorated with :func:`kernel`.  By default the decorator
compiles them with numba's ``@njit``; setting the environment variable
``COOPMANIP_ENGINE=numpy`` before import keeps them as interpreted numpy,
which is slow but dependency-light and easy to debug.  The two paths execute
the same source, so results agree to machine precision.
"""

from __future__ import annotations

import os

_VALID = ("numba", "numpy")

ENGINE = os.environ.get("COOPMANIP_ENGINE", "numba").strip().lower()
if ENGINE not in _VALID:
    raise RuntimeError(
        f"COOPMANIP_ENGINE must be one of {_VALID}, got {ENGINE!r}"
    )

if ENGINE == "numba":
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dependency
        ENGINE = "numpy"

if ENGINE == "numba":
    import numba

    def kernel(func):
        """Compile a hot kernel with numba (nopython, cached)."""
        return numba.njit(func, cache=True, fastmath=False)

else:

    def kernel(func):
        """Identity decorator: run the kernel as plain numpy."""
        return func


def engine_name() -> str:
    """Name of the active kernel engine ("numba" or "numpy")."""
    return ENGINE

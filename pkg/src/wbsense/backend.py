"""Kernel backend selection.

The hot convolution kernels have two implementations: numba-compiled
parallel loops and a pure-numpy (BLAS) path. The numba path wins when
several hardware threads are available; on a single-core host the BLAS
matmuls are faster, so dispatch falls back to numpy there.

Environment overrides, read once at import:

- ``WBSENSE_NO_NUMBA=1``  never compile or use the numba path.
- ``WBSENSE_FORCE_NUMBA=1``  use the numba path even on one core.
"""

import os

DISABLE_NUMBA = os.environ.get("WBSENSE_NO_NUMBA", "0") not in ("0", "", "false")
FORCE_NUMBA = os.environ.get("WBSENSE_FORCE_NUMBA", "0") not in ("0", "", "false")

if not DISABLE_NUMBA:
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

# Whether the numba kernels get compiled at all.
NUMBA_AVAILABLE = HAVE_NUMBA and not DISABLE_NUMBA

# Whether the dispatchers route to them by default.
USE_NUMBA = NUMBA_AVAILABLE and (FORCE_NUMBA or (os.cpu_count() or 1) > 1)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_num_threads(n: int) -> None:
    """Limit numba's thread pool; no-op on the numpy backend."""
    if NUMBA_AVAILABLE and n > 0:
        import numba

        numba.set_num_threads(n)

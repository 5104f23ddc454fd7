"""Numba acceleration layer.

Hot inner loops (component-wise Gibbs sweeps, truncated-normal draws and the
projected-gradient solver) are defined once in :mod:`monogp._impl` and built
here twice: compiled with ``@njit`` when numba is importable, and as plain
python.  The active set is the compiled one unless ``MONOGP_DISABLE_NUMBA``
is set.  Both sets stay importable so the benchmark can time them against
each other within one process.
"""

import os

from . import _impl

_DISABLE = os.environ.get("MONOGP_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and not _DISABLE

pure = _impl.make_kernels(lambda fn: fn)
jitted = _impl.make_kernels(numba.njit) if HAVE_NUMBA else None
kernels = jitted if NUMBA_ENABLED else pure

ACTIVE_BACKEND = "numba" if NUMBA_ENABLED else "numpy"

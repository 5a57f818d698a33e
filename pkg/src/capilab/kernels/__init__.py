"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time.  Set ``CAPILAB_DISABLE_NUMBA=1``
(or run without numba installed) to force the numpy implementations.  Both
paths share signatures and are cross-checked by the test-suite; results agree
to rounding but are not bitwise identical, so determinism guarantees hold per
backend.
"""

import os

from . import _numpy

_FLAG = os.environ.get("CAPILAB_DISABLE_NUMBA", "").strip().lower()

try:
    if _FLAG in ("1", "true", "yes", "on"):
        raise ImportError("numba disabled by CAPILAB_DISABLE_NUMBA")
    from . import _numba as _impl

    BACKEND = "numba"
except ImportError:
    _impl = _numpy
    BACKEND = "numpy"

p2_element_matrices = _impl.p2_element_matrices
pcg_csr = _impl.pcg_csr
max_pair_distance = _impl.max_pair_distance
ball_violations = _impl.ball_violations

__all__ = [
    "BACKEND",
    "p2_element_matrices",
    "pcg_csr",
    "max_pair_distance",
    "ball_violations",
]

"""Backend selection for the scalar hot loops.

The compiled extension is used when it was built; set ``RAIS_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("RAIS_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def reservoir_fill(slots: np.ndarray, seen: int, uniforms: np.ndarray, first_id: int = -1) -> int:
    return _impl.reservoir_fill(slots, int(seen), np.ascontiguousarray(uniforms, dtype=np.float64),
                                int(first_id))


def reservoir_trials(capacity: int, uniforms: np.ndarray) -> np.ndarray:
    return _impl.reservoir_trials(int(capacity), np.ascontiguousarray(uniforms, dtype=np.float64))


def herding_order(z: np.ndarray, m: int) -> np.ndarray:
    return _impl.herding_order(np.ascontiguousarray(z, dtype=np.float64), int(m))

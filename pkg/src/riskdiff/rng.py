"""Counter-based random numbers for reproducible, order-independent path simulation.

Every normal variate is a pure function of (seed, stream_id, path index,
step index, component), so simulation output does not depend on how work is
split across threads or chunks.  Mixing uses the splitmix64 finalizer;
standard normals come from the inverse normal CDF (scipy's AS241-grade
``ndtri``).
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15

_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U_GOLDEN = np.uint64(_GOLDEN)


def _mix_int(x: int) -> int:
    """splitmix64 finalizer on a python int, masked to 64 bits."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _M1) & _MASK64
    x = ((x ^ (x >> 27)) * _M2) & _MASK64
    return x ^ (x >> 31)


def _mix_array(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _U_M1
    x = x ^ (x >> np.uint64(27))
    x = x * _U_M2
    return x ^ (x >> np.uint64(31))


def _base_key(seed: int, stream_id: int) -> int:
    h = _mix_int(seed + _GOLDEN)
    return _mix_int(h ^ _mix_int(stream_id + 2 * _GOLDEN))


def uniforms(seed: int, stream_id: int, paths: np.ndarray, step: int,
             component: int) -> np.ndarray:
    """Uniform(0, 1) variates keyed by (seed, stream_id, path, step, component)."""
    w1 = np.asarray(paths, dtype=np.uint64)
    h = np.full(w1.shape, _base_key(seed, stream_id), dtype=np.uint64)
    h = _mix_array(h ^ (w1 + _U_GOLDEN))
    w2 = np.uint64((2 * step + component) & _MASK64)
    h = _mix_array(h ^ (w2 + _U_GOLDEN))
    # 53 high bits -> open interval (0, 1); ndtri is finite on it
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def standard_normals(seed: int, stream_id: int, paths: np.ndarray, step: int,
                     component: int) -> np.ndarray:
    """Standard normal variates via inverse-CDF on the counter-based uniforms."""
    return ndtri(uniforms(seed, stream_id, paths, step, component))

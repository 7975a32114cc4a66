"""Backend selection for the hot loops.

The compiled extension (pamlab._kernels) is used when it imports; otherwise,
or when PAMLAB_PURE_PYTHON=1 is set, the NumPy fallback is used.  Both share
one random stream per walk replica:

* state: s = mix64(seed) ^ mix64(replica + 0x632BE59BD9B4E019); four
  splitmix64 outputs of s seed xoshiro256**;
* uniform: (next >> 11) * 2^-53, in [0, 1);
* hold time: -log1p(-u) / (2d); neighbour: k = floor(u * 2d), axis k // 2,
  direction +1 for even k and -1 for odd k.

Each step draws the hold time first and the neighbour second.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("PAMLAB_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass


def backend():
    return BACKEND


def walk_log_weights(xi, d, radius, limit, t, seed, first, count, impl=None):
    import numpy as np

    m = impl or _impl
    xi = np.ascontiguousarray(xi, dtype=np.float64).reshape(-1)
    return m.walk_log_weights(xi, int(d), int(radius), int(limit), float(t),
                              int(seed) & ((1 << 64) - 1), int(first), int(count))


def shift_l1_scan(big, target, w, n_shift, impl=None):
    import numpy as np

    m = impl or _impl
    big = np.ascontiguousarray(big, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if big.ndim == 1:
        return np.asarray(m.shift_l1_scan_1d(big, target, w, int(n_shift)))
    if big.ndim == 2:
        return np.asarray(m.shift_l1_scan_2d(big, target, w, int(n_shift)))
    return _fallback_nd(big, target, w, int(n_shift))


def _fallback_nd(big, target, w, n_shift):
    import numpy as np
    from numpy.lib.stride_tricks import sliding_window_view

    win = sliding_window_view(big, target.shape)[tuple(slice(0, n_shift) for _ in range(big.ndim))]
    axes = tuple(range(big.ndim, 2 * big.ndim))
    return np.sum(np.abs(win - target) * w, axis=axes)


def implementations():
    """Available implementations keyed by name (for benchmarks and tests)."""
    out = {"python": _fallback}
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        out["cython"] = _compiled
    except ImportError:  # pragma: no cover
        pass
    return out

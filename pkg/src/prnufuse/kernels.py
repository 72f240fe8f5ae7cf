"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``PRNUFUSE_BACKEND=python`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PRNUFUSE_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name=None):
    """Module implementing the kernels; ``name`` in {None, "python", "cython"}."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def local_wiener(padded, window, noise_var):
    return _impl.local_wiener(np.ascontiguousarray(padded, dtype=np.float64),
                              int(window), float(noise_var))


def phase_fold(residual, period):
    return _impl.phase_fold(np.ascontiguousarray(residual, dtype=np.float64), int(period))


def mcd_search(x, h, starts, max_steps=100):
    return _impl.mcd_search(np.ascontiguousarray(x, dtype=np.float64), int(h),
                            np.ascontiguousarray(starts, dtype=np.int64), int(max_steps))

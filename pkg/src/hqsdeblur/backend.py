"""Backend selection for the direct-convolution hot loops.

The compiled Cython extension is preferred when it was built; the
NumPy/SciPy fallback is always available.  ``HQSDEBLUR_BACKEND`` forces a
choice at import time (``cython`` or ``python``); :func:`use` switches at
runtime, which the cross-backend tests and ``benchmarks/bench_backends.py``
rely on.
"""

import os

from . import _kernels_py

_IMPLS = {"python": _kernels_py}

try:
    from . import _kernels_cy

    _IMPLS["cython"] = _kernels_cy
except ImportError:  # extension not built; fallback stays active
    _kernels_cy = None

_forced = os.environ.get("HQSDEBLUR_BACKEND")
if _forced:
    if _forced not in _IMPLS:
        raise ImportError(
            f"HQSDEBLUR_BACKEND={_forced!r} requested but that backend is "
            f"unavailable (have: {sorted(_IMPLS)})"
        )
    _active = _forced
else:
    _active = "cython" if "cython" in _IMPLS else "python"


def available():
    """Names of the importable backends."""
    return sorted(_IMPLS)


def active_name():
    return _active


def use(name):
    """Select the active backend; returns the previously active name."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r} (have: {sorted(_IMPLS)})")
    previous = _active
    _active = name
    return previous


def conv2d_direct(img, ker, mode):
    return _IMPLS[_active].conv2d_direct(img, ker, mode)


def varying_conv_direct(img, field, stack, mode):
    return _IMPLS[_active].varying_conv_direct(img, field, stack, mode)

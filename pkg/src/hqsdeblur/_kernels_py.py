"""Pure NumPy/SciPy implementations of the hot convolution primitives.

Fallback used when the compiled extension is unavailable (or when forced
via ``HQSDEBLUR_BACKEND=python``).  Semantics are identical to
``_kernels_cy``: true centred convolution with odd-sided kernels and
explicit boundary handling (0 = zero fill, 1 = replicate, 2 = periodic).
"""

import numpy as np
from scipy import ndimage

_NDIMAGE_MODE = {0: "constant", 1: "nearest", 2: "grid-wrap"}

NAME = "python"


def conv2d_direct(img, ker, mode):
    """out(p) = sum_q ker(q) * img(p - q), boundary fetch per ``mode``."""
    return ndimage.convolve(img, ker, mode=_NDIMAGE_MODE[mode], cval=0.0)


def varying_conv_direct(img, field, stack, mode):
    """Per-pixel kernel selection: out(p) = sum_q stack[field(p)](q) * img(p - q).

    Sweeps the distinct indices present in ``field`` and merges the uniform
    convolutions by mask; cost grows with the number of distinct kernels.
    """
    out = np.empty_like(img)
    for e in np.unique(field):
        m = field == e
        out[m] = conv2d_direct(img, stack[e], mode)[m]
    return out

"""Shared fixtures and brute-force reference implementations.

The oracles here are deliberately slow and dumb: plain Python loops over
the convolution fetch rule, so the fast paths in the package are checked
against something with no shared code.
"""

import numpy as np
import pytest

from hqsdeblur.imagecore import Boundary, FilterBank, Kernel


def fetch(img, i, j, boundary):
    """Single-pixel read under the given boundary rule."""
    h, w = img.shape
    if boundary is Boundary.ZERO:
        if 0 <= i < h and 0 <= j < w:
            return img[i, j]
        return 0.0
    if boundary is Boundary.REPLICATE:
        return img[min(max(i, 0), h - 1), min(max(j, 0), w - 1)]
    return img[i % h, j % w]


def oracle_conv(img, taps, boundary):
    """out(p) = sum_q taps(q) * img(p - q), q centered on the kernel."""
    h, w = img.shape
    kh, kw = taps.shape
    rh, rw = kh // 2, kw // 2
    out = np.zeros((h, w))
    for p0 in range(h):
        for p1 in range(w):
            acc = 0.0
            for q0 in range(-rh, rh + 1):
                for q1 in range(-rw, rw + 1):
                    acc += taps[q0 + rh, q1 + rw] * fetch(img, p0 - q0, p1 - q1,
                                                          boundary)
            out[p0, p1] = acc
    return out


def oracle_varying(img, field, stack, boundary):
    """Per-pixel kernel selection applied through the same fetch rule."""
    h, w = img.shape
    kh, kw = stack.shape[1:]
    rh, rw = kh // 2, kw // 2
    out = np.zeros((h, w))
    for p0 in range(h):
        for p1 in range(w):
            taps = stack[field[p0, p1]]
            acc = 0.0
            for q0 in range(-rh, rh + 1):
                for q1 in range(-rw, rw + 1):
                    acc += taps[q0 + rh, q1 + rw] * fetch(img, p0 - q0, p1 - q1,
                                                          boundary)
            out[p0, p1] = acc
    return out


def random_kernel(rng, side):
    """Random normalized nonnegative kernel (a valid blur)."""
    taps = rng.random((side, side))
    return Kernel(taps / taps.sum())


def random_signed_kernel(rng, side):
    """Random zero-mean-ish signed kernel (a valid filter row)."""
    return Kernel(rng.standard_normal((side, side)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grad_bank():
    from hqsdeblur.imagecore import gradient_bank
    return gradient_bank()


@pytest.fixture
def empty_bank():
    return FilterBank([])


@pytest.fixture(scope="session")
def image64():
    from hqsdeblur.synthetic import corpus_image
    return corpus_image(2, side=64)


@pytest.fixture(scope="session")
def blurred64():
    """64x64 ground truth and its 9x9 motion blurred, 2% noise observation."""
    from hqsdeblur.synthetic import blur_pair, corpus_image, shake_kernels
    ker = shake_kernels()[0]
    truth_big = corpus_image(4, side=64 + 2 * 8)
    truth, observed = blur_pair(truth_big, ker, 2.0, seed=99, margin=8)
    return truth, observed, ker

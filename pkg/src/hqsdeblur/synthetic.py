"""Procedural benchmark data: test images, camera-shake kernels, pairs.

Everything is deterministic given the index/seed, so benchmark numbers are
reproducible without shipping binary assets.  Images are generated on an
enlarged canvas and cropped after blurring: every method then sees an
observation whose border pixels carry true scene content, and no boundary
assumption gets an artificial advantage.
"""

import numpy as np

from .imagecore import Boundary, Kernel, add_gaussian_noise, conv2d

__all__ = [
    "corpus_image",
    "shake_kernels",
    "blur_pair",
    "two_region_field",
    "CORPUS_SIZE",
    "SHAKE_SIDES",
]

CORPUS_SIZE = 20
SHAKE_SIDES = (9, 11, 13, 15, 17, 19, 23, 27)


def _normalize(img, lo=0.02, hi=0.98):
    vmin, vmax = float(img.min()), float(img.max())
    if vmax - vmin < 1e-12:
        return np.full_like(img, 0.5)
    return lo + (hi - lo) * (img - vmin) / (vmax - vmin)


def _coords(side):
    axis = np.linspace(0.0, 1.0, side)
    return np.meshgrid(axis, axis, indexing="ij")


def _blobs(rng, side):
    rr, cc = _coords(side)
    img = np.zeros((side, side))
    for _ in range(rng.integers(6, 12)):
        cy, cx = rng.uniform(0, 1, 2)
        sig = rng.uniform(0.03, 0.15)
        img += rng.uniform(-1, 1) * np.exp(-((rr - cy) ** 2 + (cc - cx) ** 2) / (2 * sig**2))
    return img


def _rectangles(rng, side):
    img = np.full((side, side), rng.uniform(0.2, 0.5))
    for _ in range(rng.integers(8, 16)):
        r0, c0 = rng.integers(0, side - 8, 2)
        h = int(rng.integers(4, side // 2))
        w = int(rng.integers(4, side // 2))
        img[r0 : min(r0 + h, side), c0 : min(c0 + w, side)] = rng.uniform(0, 1)
    return img


def _rings(rng, side):
    rr, cc = _coords(side)
    cy, cx = rng.uniform(0.3, 0.7, 2)
    dist = np.sqrt((rr - cy) ** 2 + (cc - cx) ** 2)
    freq = rng.uniform(8, 20)
    img = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * freq * dist))
    ramp = rng.uniform(0.2, 0.8) * (rr * rng.uniform(-1, 1) + cc * rng.uniform(-1, 1))
    return img * rng.uniform(0.4, 0.8) + ramp


def _cells(rng, side):
    rr, cc = _coords(side)
    n = int(rng.integers(6, 14))
    sites = rng.uniform(0, 1, (n, 2))
    values = rng.uniform(0, 1, n)
    dist = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    return values[np.argmin(dist, axis=-1)]


def _waves(rng, side):
    rr, cc = _coords(side)
    img = np.zeros((side, side))
    for _ in range(rng.integers(2, 5)):
        fr, fc = rng.uniform(-12, 12, 2)
        img += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fr * rr + fc * cc)
                                              + rng.uniform(0, 2 * np.pi))
    step = (rr > rng.uniform(0.3, 0.7)).astype(float)
    return img + rng.uniform(0.5, 1.5) * step


_GENERATORS = (_blobs, _rectangles, _rings, _cells, _waves)


def corpus_image(index, side=160):
    """Deterministic procedural test image, values in [0.02, 0.98]."""
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    rng = np.random.default_rng(1000 + index)
    img = _GENERATORS[index % len(_GENERATORS)](rng, side)
    return _normalize(img)


def _splat(points, side):
    grid = np.zeros((side, side))
    r0 = np.floor(points[:, 0]).astype(np.intp)
    c0 = np.floor(points[:, 1]).astype(np.intp)
    fr = points[:, 0] - r0
    fc = points[:, 1] - c0
    r1 = np.minimum(r0 + 1, side - 1)
    c1 = np.minimum(c0 + 1, side - 1)
    np.add.at(grid, (r0, c0), (1 - fr) * (1 - fc))
    np.add.at(grid, (r0, c1), (1 - fr) * fc)
    np.add.at(grid, (r1, c0), fr * (1 - fc))
    np.add.at(grid, (r1, c1), fr * fc)
    return grid


def shake_kernel(side, seed):
    """Single camera-shake kernel: a damped random-walk trajectory splatted
    bilinearly onto the grid and normalized to unit mass."""
    rng = np.random.default_rng(seed)
    steps = 40 * side
    pos = np.empty((steps, 2))
    p = np.array([side / 2.0, side / 2.0])
    v = rng.normal(0.0, 1.0, 2)
    for i in range(steps):
        v = 0.9 * v + 0.3 * rng.normal(0.0, 1.0, 2)
        p = p + 0.15 * v
        p = np.clip(p, 0.5, side - 1.5)
        pos[i] = p
    grid = _splat(pos, side)
    return Kernel(grid / grid.sum())


def shake_kernels(sides=SHAKE_SIDES, seed0=2000):
    """The bundled kernel set: one shake kernel per side, deterministic."""
    return [shake_kernel(side, seed0 + i) for i, side in enumerate(sides)]


def blur_pair(truth_big, ker, noise_percent, seed, margin=16):
    """Blur on the big canvas, add noise, crop both frames by ``margin``.

    Inside the crop every observed pixel is a true linear blur of scene
    content (the replicate fallback only acts outside), so the pair is
    model-faithful for any solver boundary handling.
    """
    truth_big = np.asarray(truth_big, dtype=np.float64)
    h, w = truth_big.shape
    if 2 * margin >= min(h, w):
        raise ValueError("margin removes the whole image")
    if margin < max(ker.half):
        raise ValueError(
            f"margin {margin} smaller than kernel half-width {max(ker.half)}")
    blurred = conv2d(truth_big, ker, Boundary.REPLICATE)
    observed = add_gaussian_noise(blurred, noise_percent, seed)
    sl = np.s_[margin : h - margin, margin : w - margin]
    return truth_big[sl].copy(), observed[sl].copy()


def two_region_field(h, w, index_left, index_right):
    """Vertical two-region motion field splitting at the middle column."""
    field = np.full((h, w), int(index_left), dtype=np.int64)
    field[:, w // 2 :] = int(index_right)
    return field

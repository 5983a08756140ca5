"""Images, kernels, filter banks and exact spatial convolution algebra.

Images are plain ``float64`` NumPy arrays: ``(h, w)`` for a single channel,
``(h, w, 3)`` for RGB at the I/O level, and ``(n, h, w)`` for the stacked
multi-channel signals produced by filter banks.  Kernels and banks are thin
immutable wrappers with validated invariants.

Direct (tap-by-tap) convolution runs on the selected compute backend; large
kernels are routed through an exact FFT path that reproduces the same
boundary semantics.
"""

import threading
from collections import OrderedDict
from enum import Enum

import numpy as np
from PIL import Image as PILImage
from scipy import fft as sfft

from . import backend
from .errors import FormatError

__all__ = [
    "Boundary",
    "Kernel",
    "FilterBank",
    "conv2d",
    "correlate2d",
    "bank_apply",
    "conv_matrix",
    "psnr",
    "add_gaussian_noise",
    "gradient_bank",
    "read_png",
    "write_png",
    "read_kernel_txt",
    "write_kernel_txt",
    "round_to_odd",
]

# Kernels up to this many taps use the direct backend; larger ones take the
# (exact) FFT path, which is faster on a single core.
DIRECT_TAP_LIMIT = 169


class Boundary(Enum):
    """Pixel-fetch rule for out-of-range coordinates.

    - ``ZERO``: out-of-range pixels read as 0 (makes conv/correlate exact
      adjoints of each other).
    - ``REPLICATE``: coordinates clamp to the nearest edge pixel.
    - ``PERIODIC``: coordinates wrap modulo the image size.
    """

    ZERO = 0
    REPLICATE = 1
    PERIODIC = 2

    @property
    def mode_int(self):
        return self.value


class Kernel:
    """Small 2-D filter with odd side lengths, anchored at its centre tap.

    Taps are finite ``float64`` and immutable after construction.  Blur
    kernels (nonnegative, unit sum) are checked where an operation requires
    them, not at construction: inverse filters share this type and are
    exempt from normalization.
    """

    __slots__ = ("taps",)

    def __init__(self, taps):
        arr = np.array(taps, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ValueError(f"kernel must be 2-D, got shape {arr.shape}")
        if arr.shape[0] % 2 == 0 or arr.shape[1] % 2 == 0:
            raise ValueError(
                f"kernel sides must be odd, got {arr.shape}; re-centre even "
                "supports by zero-padding one row/column"
            )
        if not np.isfinite(arr).all():
            raise ValueError("kernel taps must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "taps", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Kernel is immutable")

    @property
    def shape(self):
        return self.taps.shape

    @property
    def side_h(self):
        return self.taps.shape[0]

    @property
    def side_w(self):
        return self.taps.shape[1]

    @property
    def half(self):
        """(rh, rw): anchor offsets from the top-left tap."""
        return self.taps.shape[0] // 2, self.taps.shape[1] // 2

    @classmethod
    def dirac(cls, side=1):
        """Identity kernel: single unit tap at the anchor of a side x side grid."""
        taps = np.zeros((side, side))
        taps[side // 2, side // 2] = 1.0
        return cls(taps)

    def flipped(self):
        """Kernel flipped about its anchor (conv with it == correlation)."""
        return Kernel(self.taps[::-1, ::-1])

    def normalized(self):
        s = self.taps.sum()
        if s == 0:
            raise ValueError("cannot normalize a zero-sum kernel")
        return Kernel(self.taps / s)

    def is_blur_kernel(self, tol=1e-6):
        """Nonnegative and unit-sum within ``tol``."""
        return bool(self.taps.min() >= -tol and abs(self.taps.sum() - 1.0) <= tol)

    def require_blur(self, what="kernel"):
        if not self.is_blur_kernel():
            raise ValueError(
                f"{what} must be a normalized blur kernel "
                f"(nonnegative, sum 1 within 1e-6; got sum {self.taps.sum():.6g})"
            )
        return self

    def __eq__(self, other):
        return isinstance(other, Kernel) and np.array_equal(self.taps, other.taps)

    def __repr__(self):
        return f"Kernel({self.side_h}x{self.side_w})"


class FilterBank:
    """Ordered stack of (kernel, weight) pairs acting as one linear operator.

    Applying the bank stacks the weighted per-kernel convolutions along a
    leading channel axis.  Weights must be finite and positive.  An empty
    bank is allowed as the "no prior channels" degenerate case, but
    :func:`bank_apply` rejects it.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        entries = tuple((k, float(w)) for k, w in entries)
        for k, w in entries:
            if not isinstance(k, Kernel):
                raise TypeError("bank entries must be (Kernel, weight) pairs")
            if not np.isfinite(w) or w <= 0:
                raise ValueError(f"bank weights must be finite and > 0, got {w}")
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("FilterBank is immutable")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def scaled(self, factor):
        """New bank with every weight multiplied by ``factor``."""
        return FilterBank([(k, w * factor) for k, w in self.entries])

    def __repr__(self):
        sides = ",".join(f"{k.side_h}x{k.side_w}" for k, _ in self.entries)
        return f"FilterBank([{sides}])"


def gradient_bank():
    """First-difference filter pair (horizontal, vertical), unit weights.

    The 1x2 stencils are zero-padded to 3x3 odd supports with the positive
    tap at the anchor, so every kernel in the pipeline shares the centred
    odd-support convolution path.
    """
    dx = np.zeros((3, 3))
    dx[1, 1] = 1.0
    dx[1, 2] = -1.0
    dy = np.zeros((3, 3))
    dy[1, 1] = 1.0
    dy[2, 1] = -1.0
    return FilterBank([(Kernel(dx), 1.0), (Kernel(dy), 1.0)])


def round_to_odd(value):
    """Nearest odd integer (ties round up), never below 1."""
    n = 2 * int(np.floor((value - 1.0) / 2.0 + 0.5)) + 1
    return max(n, 1)


# ---------------------------------------------------------------------------
# convolution


def _check_image_2d(img):
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


def _check_kernel_fits(ker, shape):
    h, w = shape
    if max(ker.side_h, ker.side_w) > 2 * min(h, w):
        raise ValueError(
            f"kernel {ker.side_h}x{ker.side_w} has degenerate support on a "
            f"{h}x{w} image"
        )


class _SpectrumCache:
    """LRU cache of kernel spectra keyed by (taps bytes, grid, layout)."""

    def __init__(self, cap=96):
        self._cap = cap
        self._lock = threading.Lock()
        self._data = OrderedDict()

    def get(self, key, build):
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self._data.move_to_end(key)
                return hit
        value = build()
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self._cap:
                self._data.popitem(last=False)
        return value


_spectra = _SpectrumCache()


def _full_conv_fft(img, taps):
    """Full linear convolution (shape grows by kernel-1) via real FFT."""
    h, w = img.shape
    kh, kw = taps.shape
    H = sfft.next_fast_len(h + kh - 1)
    W = sfft.next_fast_len(w + kw - 1)
    key = (taps.tobytes(), kh, kw, H, W, "corner")
    kspec = _spectra.get(key, lambda: sfft.rfft2(taps, s=(H, W)))
    full = sfft.irfft2(sfft.rfft2(img, s=(H, W)) * kspec, s=(H, W))
    return full[: h + kh - 1, : w + kw - 1]


def _circular_kernel_spectrum(taps, h, w):
    kh, kw = taps.shape
    rh, rw = kh // 2, kw // 2
    grid = np.zeros((h, w))
    rows = (np.arange(kh)[:, None] - rh) % h
    cols = (np.arange(kw)[None, :] - rw) % w
    np.add.at(grid, (np.broadcast_to(rows, (kh, kw)), np.broadcast_to(cols, (kh, kw))), taps)
    return sfft.rfft2(grid)


def _conv2d_fft(img, taps, boundary):
    h, w = img.shape
    kh, kw = taps.shape
    rh, rw = kh // 2, kw // 2
    if boundary is Boundary.ZERO:
        return _full_conv_fft(img, taps)[rh : rh + h, rw : rw + w]
    if boundary is Boundary.REPLICATE:
        padded = np.pad(img, ((rh, rh), (rw, rw)), mode="edge")
        full = _full_conv_fft(padded, taps)
        return full[2 * rh : 2 * rh + h, 2 * rw : 2 * rw + w]
    key = (taps.tobytes(), kh, kw, h, w, "circ")
    kspec = _spectra.get(key, lambda: _circular_kernel_spectrum(taps, h, w))
    return sfft.irfft2(sfft.rfft2(img) * kspec, s=(h, w))


def conv2d(img, ker, boundary=Boundary.REPLICATE, engine="auto"):
    """Centred 2-D convolution: out(p) = sum_q ker(q) * img(p - q).

    Output has the same shape as ``img``; out-of-range reads follow
    ``boundary``.  Linear in ``img`` for every boundary mode.  ``engine``
    picks the direct backend or the exact FFT path ("auto" chooses by
    kernel size); both give identical results to round-off.
    """
    arr = _check_image_2d(img)
    _check_kernel_fits(ker, arr.shape)
    if engine == "auto":
        engine = "direct" if ker.taps.size <= DIRECT_TAP_LIMIT else "fft"
    if engine == "direct":
        return backend.conv2d_direct(arr, ker.taps, boundary.mode_int)
    if engine == "fft":
        return _conv2d_fft(arr, ker.taps, boundary)
    raise ValueError(f"unknown engine {engine!r}")


def correlate2d(img, ker, boundary=Boundary.REPLICATE, engine="auto"):
    """Centred cross-correlation; with ``Boundary.ZERO`` this is the exact
    adjoint of :func:`conv2d` with the same kernel."""
    return conv2d(img, ker.flipped(), boundary, engine)


def bank_apply(bank, img, boundary=Boundary.REPLICATE):
    """Stack the weighted responses of every bank entry: shape (n, h, w)."""
    arr = _check_image_2d(img)
    out = np.empty((len(bank),) + arr.shape)
    for i, (ker, weight) in enumerate(bank):
        out[i] = weight * conv2d(arr, ker, boundary)
    return out


def conv_matrix(ker, h, w, boundary=Boundary.ZERO):
    """Dense (h*w, h*w) matrix of ``x -> conv2d(x, ker, boundary)``.

    Internal oracle machinery: no degenerate-support guard, so kernels may
    exceed the grid (out-of-range taps follow the boundary rule).
    """
    taps = ker.taps
    kh, kw = taps.shape
    rh, rw = kh // 2, kw // 2
    m = np.zeros((h * w, h * w))
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    out_flat = (rr * w + cc).ravel()
    for a in range(kh):
        for b in range(kw):
            v = taps[a, b]
            if v == 0.0:
                continue
            sr = rr - a + rh
            sc = cc - b + rw
            if boundary is Boundary.ZERO:
                ok = (sr >= 0) & (sr < h) & (sc >= 0) & (sc < w)
                m[out_flat[ok.ravel()], (sr[ok] * w + sc[ok])] += v
            else:
                if boundary is Boundary.REPLICATE:
                    sr = np.clip(sr, 0, h - 1)
                    sc = np.clip(sc, 0, w - 1)
                else:
                    sr = sr % h
                    sc = sc % w
                # clamped/wrapped sources may repeat, so accumulate unbuffered
                np.add.at(m, (out_flat, (sr * w + sc).ravel()), v)
    return m


# ---------------------------------------------------------------------------
# metrics and degradation


def psnr(est, ref, border_crop=0):
    """Peak signal-to-noise ratio in dB with peak 1.0, capped at 100 dB.

    ``border_crop`` excludes a margin of that many pixels on every side of
    the first two axes before computing the MSE (full frame by default).
    """
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    if ref.min() < -1e-9 or ref.max() > 1.0 + 1e-9:
        raise ValueError("reference image must lie in [0, 1]")
    if border_crop:
        b = int(border_crop)
        if 2 * b >= min(est.shape[0], est.shape[1]):
            raise ValueError("border crop removes the whole image")
        est = est[b:-b, b:-b]
        ref = ref[b:-b, b:-b]
    mse = float(np.mean((est - ref) ** 2))
    if mse == 0.0:
        return 100.0
    return min(100.0, 10.0 * np.log10(1.0 / mse))


def add_gaussian_noise(img, sigma_percent, seed):
    """Add i.i.d. N(0, (sigma_percent/100)^2) noise, deterministic per seed.

    The output is intentionally not clipped to [0, 1]: the degradation
    model stays linear-Gaussian.
    """
    if sigma_percent < 0:
        raise ValueError("sigma_percent must be >= 0")
    arr = np.asarray(img, dtype=np.float64)
    if sigma_percent == 0:
        return arr.copy()
    rng = np.random.default_rng(seed)
    return arr + rng.normal(0.0, sigma_percent / 100.0, size=arr.shape)


# ---------------------------------------------------------------------------
# I/O


def read_png(path):
    """8-bit PNG -> float64 in [0, 1]; shape (h, w) for gray, (h, w, 3) for RGB."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if len(im.getbands()) > 2 else "L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


def write_png(path, img):
    """float image -> 8-bit PNG via round(255 * clamp(v, 0, 1))."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ValueError(f"expected (h, w) or (h, w, 3) image, got {arr.shape}")
    quant = np.rint(255.0 * np.clip(arr, 0.0, 1.0)).astype(np.uint8)
    PILImage.fromarray(quant, mode="L" if arr.ndim == 2 else "RGB").save(path)


def write_kernel_txt(path, ker):
    """Plain-text kernel: first line "h w", then h rows of w decimals."""
    taps = ker.taps
    with open(path, "w") as fh:
        fh.write(f"{taps.shape[0]} {taps.shape[1]}\n")
        for row in taps:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_kernel_txt(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: expected 'h w' header line")
        try:
            h, w = int(header[0]), int(header[1])
            taps = np.loadtxt(fh, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    if taps.shape != (h, w):
        raise FormatError(
            f"{path}: header says {h}x{w} but body has shape {taps.shape}"
        )
    try:
        return Kernel(taps)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc

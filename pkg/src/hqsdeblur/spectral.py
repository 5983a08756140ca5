"""Fourier-domain helpers: DFT wrappers, transfer functions, the closed-form
quadratic solve, and edge tapering for periodic-model artifact control.

Convention: unnormalized forward DFT, 1/N inverse (NumPy default).  Kernel
transfer functions come from circular embedding with the anchor tap at the
origin, so multiplication in frequency matches centred periodic convolution
exactly.
"""

import numpy as np

from .imagecore import Boundary, conv2d

__all__ = ["dft2", "idft2", "embed_kernel", "kernel_spectrum", "wiener_solve", "edgetaper"]


def dft2(img):
    """Unnormalized 2-D DFT of a real or complex image."""
    return np.fft.fft2(np.asarray(img))


def idft2(spec, tol=1e-8):
    """Inverse 2-D DFT of a Hermitian-symmetric spectrum, returned as real.

    Raises if the reconstruction has imaginary energy above ``tol`` relative
    to the real part, which flags a non-Hermitian input rather than silently
    discarding signal.
    """
    out = np.fft.ifft2(np.asarray(spec))
    scale = max(1.0, float(np.abs(out.real).max()))
    worst = float(np.abs(out.imag).max())
    if worst > tol * scale:
        raise ValueError(
            f"spectrum is not Hermitian-symmetric: imaginary residue {worst:.3g} "
            f"exceeds {tol:.1g} relative tolerance"
        )
    return out.real


def embed_kernel(ker, shape):
    """Kernel wrapped onto an ``shape`` grid with its anchor at index (0, 0).

    Taps that fall off the grid wrap around (and accumulate if the kernel is
    larger than the grid), so the embedding is exact for any sizes.
    """
    h, w = shape
    taps = ker.taps
    kh, kw = taps.shape
    rh, rw = kh // 2, kw // 2
    grid = np.zeros((h, w))
    rows = (np.arange(kh)[:, None] - rh) % h
    cols = (np.arange(kw)[None, :] - rw) % w
    np.add.at(
        grid,
        (np.broadcast_to(rows, (kh, kw)), np.broadcast_to(cols, (kh, kw))),
        taps,
    )
    return grid


def kernel_spectrum(ker, shape):
    """Transfer function of centred periodic convolution with ``ker``."""
    return np.fft.fft2(embed_kernel(ker, shape))


def wiener_solve(y, ker, bank, mu, z):
    """Exact minimizer of the periodic-boundary quadratic x-subproblem.

    Minimizes ``0.5*|k*x - y|^2 + 0.5*mu*sum_i |w_i f_i*x - z_i|^2`` over x
    with all convolutions periodic, via one division in frequency space.
    ``z`` is the (n, h, w) stack aligned with ``bank``; ``n`` may be zero
    (plain regularization-free inverse filtering -- the caller is
    responsible for the conditioning of that case).
    """
    y = np.asarray(y, dtype=np.float64)
    if z.shape[0] != len(bank):
        raise ValueError(f"bank has {len(bank)} entries but z has {z.shape[0]}")
    kf = kernel_spectrum(ker, y.shape)
    num = np.conj(kf) * dft2(y)
    den = np.abs(kf) ** 2
    for i, (fker, weight) in enumerate(bank):
        ff = kernel_spectrum(fker, y.shape)
        num += mu * weight * np.conj(ff) * dft2(z[i])
        den += mu * weight**2 * np.abs(ff) ** 2
    return idft2(num / den)


def _taper_profile(proj, n):
    """Per-axis blend profile: 1 minus the wrapped, peak-normalized circular
    autocorrelation of the kernel's axis projection."""
    if n < 3:
        raise ValueError(f"image side {n} too small to taper")
    spec = np.fft.fft(proj, n - 1)
    acorr = np.real(np.fft.ifft(np.abs(spec) ** 2))
    peak = acorr.max()
    if peak <= 0:
        raise ValueError("kernel projection has no energy")
    acorr = acorr / peak
    profile = 1.0 - np.concatenate([acorr, acorr[:1]])
    return np.clip(profile, 0.0, 1.0)


def edgetaper(img, ker):
    """Blend the image toward its blurred version inside a border band.

    ``out = alpha*img + (1 - alpha)*conv2d(img, ker, REPLICATE)`` where
    ``alpha`` is the outer product of per-axis profiles that equal 1 at
    pixels farther than the kernel support from every border and fall to 0
    at the border itself.  Tapered images are nearly periodic, which
    suppresses wraparound ringing in Fourier-domain deconvolution.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    taps = ker.taps
    alpha = np.outer(
        _taper_profile(taps.sum(axis=1), img.shape[0]),
        _taper_profile(taps.sum(axis=0), img.shape[1]),
    )
    return alpha * img + (1.0 - alpha) * conv2d(img, ker, Boundary.REPLICATE)

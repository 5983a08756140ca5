"""DFT helpers, periodic deconvolution, and edge tapering."""

import numpy as np
import pytest

from conftest import random_kernel, random_signed_kernel
from hqsdeblur.imagecore import Boundary, Kernel, conv2d, conv_matrix, gradient_bank
from hqsdeblur.spectral import (dft2, edgetaper, embed_kernel, idft2,
                                kernel_spectrum, wiener_solve)


class TestDft:
    def test_round_trip(self, rng):
        img = rng.standard_normal((9, 13))
        back = idft2(dft2(img))
        assert np.abs(back - img).max() < 1e-12

    def test_matches_numpy(self, rng):
        img = rng.standard_normal((6, 6))
        assert np.abs(dft2(img) - np.fft.fft2(img)).max() < 1e-12

    def test_idft2_rejects_non_hermitian(self, rng):
        spec = dft2(rng.standard_normal((8, 8)))
        spec[1, 1] += 1.0  # break conjugate symmetry
        with pytest.raises(ValueError):
            idft2(spec)


class TestKernelSpectrum:
    def test_dirac_is_flat(self):
        spec = kernel_spectrum(Kernel.dirac(3), (8, 8))
        assert np.abs(spec - 1.0).max() < 1e-12

    def test_spectrum_realizes_periodic_conv(self, rng):
        img = rng.standard_normal((8, 8))
        ker = random_signed_kernel(rng, 5)
        want = conv2d(img, ker, Boundary.PERIODIC)
        got = idft2(kernel_spectrum(ker, img.shape) * dft2(img))
        assert np.abs(got - want).max() < 1e-10

    def test_embed_anchors_at_origin(self):
        taps = np.zeros((3, 3))
        taps[1, 1] = 2.0
        grid = embed_kernel(Kernel(taps), (6, 6))
        assert grid[0, 0] == 2.0
        assert grid.sum() == 2.0

    def test_oversized_kernel_wraps(self, rng):
        # a kernel larger than the grid folds periodically, matching the
        # circulant matrix built from the same taps
        ker = random_signed_kernel(rng, 7)
        img = rng.standard_normal((4, 4))
        grid = embed_kernel(ker, (4, 4))
        brute = np.zeros((4, 4))
        for q0 in range(-3, 4):
            for q1 in range(-3, 4):
                brute[q0 % 4, q1 % 4] += ker.taps[q0 + 3, q1 + 3]
        assert np.abs(grid - brute).max() < 1e-14


class TestWienerSolve:
    def test_matches_dense_periodic_normal_equations(self, rng):
        h = w = 8
        ker = random_kernel(rng, 3)
        bank = gradient_bank()
        mu = 0.05
        y = rng.standard_normal((h, w))
        z = rng.standard_normal((2, h, w))
        K = conv_matrix(ker, h, w, Boundary.PERIODIC)
        A = K.T @ K
        rhs = K.T @ y.ravel()
        for i, (fil, weight) in enumerate(bank.entries):
            F = weight * conv_matrix(fil, h, w, Boundary.PERIODIC)
            A = A + mu * (F.T @ F)
            rhs = rhs + mu * (F.T @ z[i].ravel())
        want = np.linalg.solve(A, rhs).reshape(h, w)
        got = wiener_solve(y, ker, bank, mu, z)
        assert np.abs(got - want).max() < 1e-9

    def test_dirac_no_regularizer_returns_y(self, rng):
        y = rng.standard_normal((6, 6))
        from hqsdeblur.imagecore import FilterBank
        got = wiener_solve(y, Kernel.dirac(1), FilterBank([]), 0.0,
                           np.zeros((0, 6, 6)))
        assert np.abs(got - y).max() < 1e-12


class TestEdgetaper:
    def test_interior_preserved(self, rng):
        img = rng.random((40, 40))
        ker = random_kernel(rng, 5)
        out = edgetaper(img, ker)
        # the taper profile reaches 1 deep inside, so the middle is untouched
        assert np.abs(out[15:25, 15:25] - img[15:25, 15:25]).max() < 1e-8

    def test_border_moves_toward_blur(self, rng):
        img = rng.random((32, 32))
        ker = random_kernel(rng, 7)
        out = edgetaper(img, ker)
        blurred = conv2d(img, ker, Boundary.REPLICATE)
        # border pixels become a convex mix of image and its blur
        lo = np.minimum(img, blurred) - 1e-12
        hi = np.maximum(img, blurred) + 1e-12
        assert (out >= lo).all() and (out <= hi).all()

    def test_dirac_is_identity(self, rng):
        img = rng.random((16, 16))
        out = edgetaper(img, Kernel.dirac(3))
        assert np.abs(out - img).max() < 1e-12

"""Richardson and conjugate-gradient solvers against dense oracles."""

import numpy as np
import pytest

from conftest import random_kernel
from hqsdeblur.errors import DivergenceError
from hqsdeblur.imagecore import (Boundary, FilterBank, Kernel, conv2d,
                                 correlate2d, gradient_bank)
from hqsdeblur.invfilter import InverseBank, compute_inverse_bank
from hqsdeblur.solvers import (apply_cbank, apply_stack, apply_stack_adjoint,
                               cbank_matrix, cg_deconv, cg_normal, cpcr,
                               dense_fixed_point, dense_least_squares,
                               iteration_matrix, stack_matrix)

MU = 0.008


def small_instance(rng, h=8, w=8, ker_side=5):
    ker = random_kernel(rng, ker_side)
    bank = gradient_bank()
    y = rng.standard_normal((h, w))
    z = rng.standard_normal((2, h, w))
    inv = compute_inverse_bank(ker, bank, MU, aux_side=5)
    return y, ker, bank, z, inv


class TestApplyStack:
    @pytest.mark.parametrize("boundary", [Boundary.ZERO, Boundary.REPLICATE])
    def test_matches_dense(self, rng, boundary):
        y, ker, bank, z, _ = small_instance(rng)
        x = rng.standard_normal((8, 8))
        mat = stack_matrix(ker, bank, MU, 8, 8, boundary)
        want = (mat @ x.ravel()).reshape(3, 8, 8)
        got = apply_stack(x, ker, bank, MU, boundary)
        assert np.abs(got - want).max() < 1e-12

    def test_adjoint_identity_zero(self, rng):
        _, ker, bank, _, _ = small_instance(rng)
        x = rng.standard_normal((8, 8))
        r = rng.standard_normal((3, 8, 8))
        lhs = np.vdot(apply_stack(x, ker, bank, MU, Boundary.ZERO), r)
        rhs = np.vdot(x, apply_stack_adjoint(r, ker, bank, MU, Boundary.ZERO))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_cbank_matches_dense(self, rng):
        y, ker, bank, z, inv = small_instance(rng)
        r = rng.standard_normal((3, 8, 8))
        mat = cbank_matrix(inv, 8, 8, Boundary.REPLICATE)
        want = (mat @ r.reshape(3 * 64)).reshape(8, 8)
        got = apply_cbank(r, inv, Boundary.REPLICATE)
        assert np.abs(got - want).max() < 1e-12


class TestCpcr:
    @pytest.mark.parametrize("boundary", [Boundary.ZERO, Boundary.REPLICATE])
    def test_converges_to_dense_fixed_point(self, rng, boundary):
        y, ker, bank, z, inv = small_instance(rng)
        want = dense_fixed_point(y, ker, bank, MU, z, inv, boundary)
        x, report = cpcr(y, ker, bank, MU, z, inv, iters=200, boundary=boundary)
        assert np.abs(x - want).max() < 1e-10
        assert report.method == "cpcr"
        assert report.iterations == 200

    def test_fixed_point_differs_from_least_squares(self, rng):
        # C(Ax - b) = 0 is not the normal equation; the cropped inverse
        # filters reweight the residual, so the two solutions differ
        y, ker, bank, z, inv = small_instance(rng)
        fp = dense_fixed_point(y, ker, bank, MU, z, inv, Boundary.ZERO)
        ls = dense_least_squares(y, ker, bank, MU, z, Boundary.ZERO)
        assert np.abs(fp - ls).max() > 1e-3

    def test_warm_start_and_tol(self, rng):
        y, ker, bank, z, inv = small_instance(rng)
        want = dense_fixed_point(y, ker, bank, MU, z, inv, Boundary.REPLICATE)
        x, report = cpcr(y, ker, bank, MU, z, inv, x0=want, iters=50,
                         tol=1e-12, boundary=Boundary.REPLICATE)
        assert report.iterations < 50  # starts at the solution, exits early
        assert np.abs(x - want).max() < 1e-9

    def test_mu_mismatch_rejected(self, rng):
        y, ker, bank, z, inv = small_instance(rng)
        with pytest.raises(ValueError):
            cpcr(y, ker, bank, 0.5, z, inv)

    def test_divergence_raises(self, rng):
        y = rng.standard_normal((8, 8))
        ker = Kernel.dirac(3)
        bank = FilterBank([])
        z = np.zeros((0, 8, 8))
        # an absurdly scaled "inverse" makes I - CL expansive; start off the
        # fixed point so the error actually grows
        bad = InverseBank(c0=Kernel(50.0 * Kernel.dirac(3).taps), c_rest=(),
                          rho=0.05, mu=0.0, ratio=1.0, dirac_residual=49.0)
        with pytest.raises(DivergenceError):
            cpcr(y, ker, bank, 0.0, z, bad, x0=y + 1.0, iters=200)

    def test_report_history(self, rng):
        y, ker, bank, z, inv = small_instance(rng)
        _, report = cpcr(y, ker, bank, MU, z, inv, iters=30)
        assert len(report.residual_history) == 30
        # the contraction brings the residual down over the run
        assert report.residual_history[-1] < report.residual_history[0]
        assert report.final_residual == report.residual_history[-1]


class TestCgNormal:
    def test_matches_dense_least_squares(self, rng):
        y, ker, bank, z, _ = small_instance(rng)
        want = dense_least_squares(y, ker, bank, MU, z, Boundary.ZERO)
        x, report = cg_normal(y, ker, bank, MU, z, max_iters=300, tol=1e-13)
        assert np.abs(x - want).max() < 1e-8
        assert report.method == "cg"
        assert report.converged

    def test_iteration_budget(self, rng):
        y, ker, bank, z, _ = small_instance(rng)
        _, report = cg_normal(y, ker, bank, MU, z, max_iters=7)
        assert report.iterations == 7
        assert not report.converged


class TestCgDeconv:
    def test_matches_dense_oracle(self, rng):
        # model: data row = crop(conv_zero(x_pad)) vs observed y, prior rows
        # live on the full padded grid; solved dense by lstsq
        h = w = 6
        ker = random_kernel(rng, 3)
        bank = gradient_bank()
        rh, rw = ker.half
        hp, wp = h + 2 * rh, w + 2 * rw
        y = rng.standard_normal((h, w))
        z = rng.standard_normal((2, hp, wp))
        x0 = np.pad(y, ((rh, rh), (rw, rw)), mode="edge")

        K = np.zeros((h * w, hp * wp))
        for j in range(hp * wp):
            e = np.zeros(hp * wp)
            e[j] = 1.0
            full = conv2d(e.reshape(hp, wp), ker, Boundary.ZERO)
            K[:, j] = full[rh:rh + h, rw:rw + w].ravel()
        rows = [K]
        rhs = [y.ravel()]
        from hqsdeblur.imagecore import conv_matrix
        for i, (fil, weight) in enumerate(bank.entries):
            F = weight * conv_matrix(fil, hp, wp, Boundary.ZERO)
            rows.append(np.sqrt(MU) * F)
            rhs.append(np.sqrt(MU) * z[i].ravel())
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        want = np.linalg.lstsq(A, b, rcond=None)[0].reshape(hp, wp)

        x, report = cg_deconv(y, ker, bank, MU, z, x0, max_iters=500, tol=1e-13)
        assert np.abs(x - want).max() < 1e-6
        assert report.converged

    def test_requires_padded_start(self, rng):
        ker = random_kernel(rng, 3)
        bank = gradient_bank()
        y = rng.standard_normal((6, 6))
        z = np.zeros((2, 8, 8))
        with pytest.raises(ValueError):
            cg_deconv(y, ker, bank, MU, z, x0=y)


class TestIterationMatrix:
    def test_definition(self, rng):
        _, ker, bank, _, inv = small_instance(rng)
        mat = iteration_matrix(ker, bank, MU, inv, 8, 8, Boundary.ZERO)
        L = stack_matrix(ker, bank, MU, 8, 8, Boundary.ZERO)
        C = cbank_matrix(inv, 8, 8, Boundary.ZERO)
        assert np.abs(mat - (np.eye(64) - C @ L)).max() < 1e-13

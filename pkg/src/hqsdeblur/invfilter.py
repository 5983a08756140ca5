"""Approximate inverse filter banks via per-frequency ridge regression.

For the stacked convolution operator with rows ``[k; sqrt(mu)*w_1*f_1; ...;
sqrt(mu)*w_n*f_n]`` this builds small filters ``c_0..c_n`` such that
``sum_i c_i * (row_i * x) ~= x``.  Each filter is solved in closed form in
frequency space and hard-cropped to a compact support, which is what makes
the preconditioned Richardson iteration cheap.
"""

from dataclasses import dataclass, field

import numpy as np

from .imagecore import Boundary, Kernel, conv2d, round_to_odd
from .spectral import kernel_spectrum

__all__ = ["InverseBank", "compute_inverse_bank", "power_radius",
           "spectral_radius_estimate"]


@dataclass(frozen=True)
class InverseBank:
    """Cropped approximate-inverse filters for one (kernel, bank, mu) triple.

    ``c0`` matches the blur row, ``c_rest`` the regularizer rows in bank
    order.  ``dirac_residual`` is the Frobenius norm of the reconstruction
    error on a unit impulse, a cheap quality diagnostic.
    """

    c0: Kernel
    c_rest: tuple = field(default=())
    rho: float = 0.05
    mu: float = 0.0
    ratio: float = 2.0
    dirac_residual: float = float("nan")

    @property
    def filters(self):
        return (self.c0,) + tuple(self.c_rest)

    def __len__(self):
        return 1 + len(self.c_rest)


def _stack_rows(ker, bank, mu):
    """Row kernels of the stacked operator, regularizer rows pre-scaled."""
    rows = [ker.taps]
    root = np.sqrt(mu)
    for fker, weight in bank:
        rows.append(root * weight * fker.taps)
    return rows


def _embed_rows(rows, grid):
    out = []
    for taps in rows:
        out.append(kernel_spectrum(Kernel(taps), (grid, grid)))
    return out


def dirac_residual_norm(rows, filters, side):
    """|sum_i c_i * (row_i * delta) - delta| on a grid wide enough to hold
    every composed support, with zero-padding boundaries."""
    max_t = max(f.side_h for f in filters)
    g = side + 2 * max_t
    if g % 2 == 0:
        g += 1
    delta = np.zeros((g, g))
    delta[g // 2, g // 2] = 1.0
    acc = np.zeros_like(delta)
    for taps, cfil in zip(rows, filters):
        if not np.any(taps):
            continue
        stage = conv2d(delta, Kernel(taps), Boundary.ZERO)
        acc += conv2d(stage, cfil, Boundary.ZERO)
    return float(np.linalg.norm(acc - delta))


def compute_inverse_bank(ker, bank, mu, rho=0.05, ratio=2.0, aux_side=31):
    """Fit the approximate inverse bank for ``[k; sqrt(mu)*w_i*f_i]``.

    Per frequency the ridge solution is ``c_i = conj(L_i) / (rho +
    sum_j |L_j|^2)``; each filter is recovered by inverse DFT on a grid of
    side ``side(k) + target - 1`` and cropped to its target support around
    the origin with a wraparound index gather.  The blur-row filter gets
    side ``round_to_odd(ratio * side(k))``; regularizer-row filters get
    ``aux_side``.
    """
    if rho <= 0 or not np.isfinite(rho):
        raise ValueError(f"rho must be finite and > 0, got {rho}")
    if ratio < 1.0:
        raise ValueError(f"support ratio must be >= 1, got {ratio}")
    if mu < 0 or not np.isfinite(mu):
        raise ValueError(f"mu must be finite and >= 0, got {mu}")
    aux_side = int(aux_side)
    if aux_side < 1 or aux_side % 2 == 0:
        raise ValueError(f"aux_side must be a positive odd integer, got {aux_side}")

    side = max(ker.side_h, ker.side_w)
    rows = _stack_rows(ker, bank, mu)
    targets = [round_to_odd(ratio * side)] + [aux_side] * len(bank)

    filters = []
    for i, target in enumerate(targets):
        grid = side + target - 1
        spectra = _embed_rows(rows, grid)
        den = rho + sum(np.abs(s) ** 2 for s in spectra)
        full = np.fft.ifft2(np.conj(spectra[i]) / den).real
        idx = (np.arange(target) - target // 2) % grid
        filters.append(Kernel(full[np.ix_(idx, idx)]))

    residual = dirac_residual_norm(rows, filters, side)
    return InverseBank(
        c0=filters[0],
        c_rest=tuple(filters[1:]),
        rho=float(rho),
        mu=float(mu),
        ratio=float(ratio),
        dirac_residual=residual,
    )


def _power_phase(mat, v0, max_iters, tol):
    v = v0 / np.linalg.norm(v0)
    lam = 0.0 + 0.0j
    for it in range(1, max_iters + 1):
        w = mat @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0 + 0.0j, v, True, it
        lam = np.vdot(v, w)
        # accept only a true eigenpair: a stagnating Rayleigh quotient is
        # not enough (it is constant under a dominant conjugate pair while
        # the iterate keeps rotating)
        if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
            return lam, w / norm_w, True, it
        v = w / norm_w
    return lam, v, False, max_iters


def _arnoldi_restart(mat, v0, dim):
    """One Krylov cycle: returns (dominant ritz value, restart vector,
    ritz-pair residual norm).

    The residual ``|h[m+1,m]| * |s[m]|`` equals ``|A u - theta u|`` for the
    ritz pair, so a small value certifies ``theta`` as an eigenvalue to that
    backward error.  An invariant subspace (early breakdown) gives residual
    zero exactly.
    """
    n = mat.shape[0]
    dim = min(dim, n)
    basis = np.empty((dim + 1, n), dtype=complex)
    hess = np.zeros((dim + 1, dim), dtype=complex)
    basis[0] = v0 / np.linalg.norm(v0)
    reached = dim
    invariant = False
    for j in range(dim):
        w = mat @ basis[j]
        for i in range(j + 1):
            hess[i, j] = np.vdot(basis[i], w)
            w = w - hess[i, j] * basis[i]
        beta = np.linalg.norm(w)
        hess[j + 1, j] = beta
        if beta <= 1e-13:
            reached = j + 1
            invariant = True
            break
        basis[j + 1] = w / beta
    block = hess[:reached, :reached]
    values, vectors = np.linalg.eig(block)
    top = int(np.argmax(np.abs(values)))
    s = vectors[:, top]
    residual = 0.0 if invariant else float(abs(hess[reached, reached - 1]) * abs(s[-1]))
    restart = s @ basis[:reached]
    return values[top], restart, residual


def power_radius(mat, max_iters=200, tol=1e-8, seed=0, restart_dim=24):
    """Dominant |eigenvalue| of a square matrix, returned as
    ``(radius, converged, iterations)``.

    Phase one is plain power iteration with a complex start vector,
    accepted once the eigenpair residual drops below ``tol``.  If that
    budget runs out (slow gaps, clustered or conjugate-pair spectra), a
    restarted Krylov safeguard takes over: short cycles from the warmed
    iterate, accepted once the dominant ritz pair's residual certifies it.
    If the safeguard also never certifies, the last estimate is returned
    flagged approximate.
    """
    a = np.asarray(mat, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return 0.0, True, 0
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam, v, ok, used = _power_phase(a, v0, max_iters, tol)
    if ok:
        return abs(lam), True, used
    estimate = abs(lam)
    for _ in range(8):
        value, v, residual = _arnoldi_restart(a, v, restart_dim)
        used += restart_dim
        estimate = abs(value)
        if residual <= tol * max(1.0, estimate):
            return estimate, True, used
    return estimate, False, used


def spectral_radius_estimate(ker, bank, inv_bank, mu, grid, max_iters=200,
                             tol=1e-8, seed=0):
    """Spectral radius of the Richardson iteration matrix ``I - C L`` for
    the given (kernel, bank, mu) triple, materialized densely on a
    grid-by-grid frame with zero boundaries.

    Returns ``(radius, converged, iterations)``; a radius below 1 certifies
    that the preconditioned iteration contracts on that frame.
    """
    if grid < 1 or grid > 32:
        raise ValueError(f"grid must be in [1, 32] (dense materialization), got {grid}")
    from .solvers import iteration_matrix

    mat = iteration_matrix(ker, bank, mu, inv_bank, grid, grid, Boundary.ZERO)
    return power_radius(mat, max_iters=max_iters, tol=tol, seed=seed)

"""Inner solvers for the quadratic x-subproblem, plus dense oracles.

Both solvers address the stacked system ``L x ~ u`` with rows ``L = [k;
sqrt(mu)*w_1*f_1; ...]`` and targets ``u = [y; sqrt(mu)*z_1; ...]``:

- :func:`cpcr` runs the convolutional preconditioned Richardson iteration
  ``x <- x + C(u - L x)`` with a cropped approximate-inverse bank ``C``.
  Its fixed point solves ``C(L x - u) = 0``, which is close to (but not in
  general equal to) the least-squares solution.
- :func:`cg_normal` runs conjugate gradient on the normal equations
  ``L' L x = L' u``; with zero-padding boundaries the adjoint is exact.

The dense builders replicate the same operators as explicit matrices for
small grids; they are the ground truth the iterative paths are tested
against.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .imagecore import Boundary, conv2d, conv_matrix, correlate2d

__all__ = [
    "SolveReport",
    "apply_stack",
    "apply_stack_adjoint",
    "apply_cbank",
    "cpcr",
    "cg_normal",
    "cg_deconv",
    "stack_matrix",
    "cbank_matrix",
    "iteration_matrix",
    "dense_fixed_point",
    "dense_least_squares",
]


@dataclass
class SolveReport:
    """Progress record returned next to every solver result."""

    method: str
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    breakdown: bool = False

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else float("nan")


def _check_inputs(y, bank, mu, z):
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError(f"expected a 2-D observation, got shape {y.shape}")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (len(bank),) + y.shape:
        raise ValueError(
            f"auxiliary stack must have shape {(len(bank),) + y.shape}, got {z.shape}"
        )
    if mu < 0 or not np.isfinite(mu):
        raise ValueError(f"mu must be finite and >= 0, got {mu}")
    return y, z


def apply_stack(x, ker, bank, mu, boundary):
    """L x: blur row first, then the scaled regularizer rows, shape (n+1, h, w)."""
    out = np.empty((1 + len(bank),) + x.shape)
    out[0] = conv2d(x, ker, boundary)
    root = np.sqrt(mu)
    for i, (fker, weight) in enumerate(bank):
        out[i + 1] = root * weight * conv2d(x, fker, boundary)
    return out


def apply_stack_adjoint(r, ker, bank, mu, boundary):
    """L' r via correlations (the exact adjoint under zero boundaries)."""
    out = correlate2d(r[0], ker, boundary)
    root = np.sqrt(mu)
    for i, (fker, weight) in enumerate(bank):
        out += root * weight * correlate2d(r[i + 1], fker, boundary)
    return out


def apply_cbank(r, inv_bank, boundary):
    """C r = sum_i conv(r_i, c_i): collapse stacked residuals to one image."""
    filters = inv_bank.filters
    if r.shape[0] != len(filters):
        raise ValueError(
            f"residual stack has {r.shape[0]} channels, inverse bank has {len(filters)}"
        )
    out = conv2d(r[0], filters[0], boundary)
    for i in range(1, len(filters)):
        out += conv2d(r[i], filters[i], boundary)
    return out


def _stack_target(y, mu, z):
    return np.concatenate([y[None], np.sqrt(mu) * z], axis=0)


def cpcr(y, ker, bank, mu, z, inv_bank, x0=None, iters=5,
         boundary=Boundary.REPLICATE, tol=0.0):
    """Preconditioned Richardson iteration ``x <- x + C(u - L x)``.

    Runs exactly ``iters`` steps unless ``tol`` > 0, in which case it stops
    once the correction norm drops below ``tol * max(1, |x|)``.  The
    residual history records the norm of each applied correction.  Raises
    :class:`DivergenceError` if the iterate stops being finite.
    """
    y, z = _check_inputs(y, bank, mu, z)
    if len(inv_bank) != 1 + len(bank):
        raise ValueError(
            f"inverse bank has {len(inv_bank)} filters, expected {1 + len(bank)}"
        )
    if not np.isclose(inv_bank.mu, mu, rtol=1e-9, atol=1e-12):
        raise ValueError(
            f"inverse bank was built for mu={inv_bank.mu:.6g}, solver got mu={mu:.6g}"
        )
    x = y.copy() if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"x0 shape {x.shape} does not match image {y.shape}")
    u = _stack_target(y, mu, z)
    report = SolveReport(method="cpcr")
    for _ in range(iters):
        residual = u - apply_stack(x, ker, bank, mu, boundary)
        correction = apply_cbank(residual, inv_bank, boundary)
        x += correction
        step = float(np.linalg.norm(correction))
        report.iterations += 1
        report.residual_history.append(step)
        if not np.isfinite(step) or not np.isfinite(x).all():
            raise DivergenceError(
                f"iterate became non-finite after {report.iterations} steps",
                report=report,
            )
        if tol > 0 and step <= tol * max(1.0, float(np.linalg.norm(x))):
            report.converged = True
            break
    return x, report


def _cg_core(normal_op, rhs, x0, max_iters, tol):
    """Plain CG on a symmetric positive (semi)definite operator equation."""
    x = x0.copy()
    rhs_norm = float(np.linalg.norm(rhs))
    r = rhs - normal_op(x)
    p = r.copy()
    rs = float(np.dot(r.ravel(), r.ravel()))
    report = SolveReport(method="cg")
    if rs == 0.0:
        report.converged = True
        return x, report
    for _ in range(max_iters):
        ap = normal_op(p)
        curvature = float(np.dot(p.ravel(), ap.ravel()))
        if curvature <= 0.0 or not np.isfinite(curvature):
            report.breakdown = True
            break
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.dot(r.ravel(), r.ravel()))
        report.iterations += 1
        report.residual_history.append(float(np.sqrt(rs_new)))
        if not np.isfinite(x).all():
            raise DivergenceError(
                f"iterate became non-finite after {report.iterations} steps",
                report=report,
            )
        if rs_new == 0.0 or (tol > 0 and np.sqrt(rs_new) <= tol * max(rhs_norm, 1e-300)):
            report.converged = True
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, report


def cg_normal(y, ker, bank, mu, z, x0=None, max_iters=100,
              boundary=Boundary.ZERO, tol=0.0):
    """Conjugate gradient on ``L' L x = L' u``.

    The residual history records the normal-equation residual norm after
    each step.  ``tol`` is relative to the initial right-hand side norm; 0
    disables early stopping.  A non-positive curvature or a vanishing
    residual sets ``breakdown``/``converged`` and stops cleanly.  With
    ``Boundary.ZERO`` the adjoint is exact and the result converges to the
    true least-squares solution; other boundaries use the correlation as an
    approximate transpose.
    """
    y, z = _check_inputs(y, bank, mu, z)
    x = y.copy() if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"x0 shape {x.shape} does not match image {y.shape}")
    u = _stack_target(y, mu, z)

    def normal_op(v):
        return apply_stack_adjoint(apply_stack(v, ker, bank, mu, boundary),
                                   ker, bank, mu, boundary)

    rhs = apply_stack_adjoint(u, ker, bank, mu, boundary)
    return _cg_core(normal_op, rhs, x, max_iters, tol)


def cg_deconv(y, ker, bank, mu, z, x0, max_iters=100, tol=0.0):
    """CG for deconvolution on an extended domain with exact adjoints.

    The unknown lives on a grid padded by the kernel half-width; the data
    row is the zero-boundary convolution restricted to the observed frame
    (so no fabricated border observations enter the objective), and the
    regularizer rows act on the full padded grid.  Minimizes

        0.5*|crop(k * x) - y|^2 + 0.5*mu*sum_i |w_i f_i * x - z_i|^2

    with every convolution zero-boundary, via CG on the normal equations.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    rh, rw = ker.half
    h, w = y.shape
    if x.shape != (h + 2 * rh, w + 2 * rw):
        raise ValueError(
            f"x0 must be the observation padded by the kernel half-width "
            f"{(h + 2 * rh, w + 2 * rw)}, got {x.shape}")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (len(bank),) + x.shape:
        raise ValueError(
            f"auxiliary stack must have shape {(len(bank),) + x.shape}, got {z.shape}")
    if mu < 0 or not np.isfinite(mu):
        raise ValueError(f"mu must be finite and >= 0, got {mu}")
    boundary = Boundary.ZERO

    def embed(v):
        out = np.zeros_like(x)
        out[rh : rh + h, rw : rw + w] = v
        return out

    def normal_op(v):
        data = conv2d(v, ker, boundary)[rh : rh + h, rw : rw + w]
        out = correlate2d(embed(data), ker, boundary)
        for fker, weight in bank:
            out += mu * weight**2 * correlate2d(conv2d(v, fker, boundary),
                                                fker, boundary)
        return out

    rhs = correlate2d(embed(y), ker, boundary)
    for i, (fker, weight) in enumerate(bank):
        rhs += mu * weight * correlate2d(z[i], fker, boundary)
    return _cg_core(normal_op, rhs, x, max_iters, tol)


# ---------------------------------------------------------------------------
# dense oracles (small grids only)


def stack_matrix(ker, bank, mu, h, w, boundary):
    """Dense ((n+1)*h*w, h*w) matrix of :func:`apply_stack`."""
    blocks = [conv_matrix(ker, h, w, boundary)]
    root = np.sqrt(mu)
    for fker, weight in bank:
        blocks.append(root * weight * conv_matrix(fker, h, w, boundary))
    return np.vstack(blocks)


def cbank_matrix(inv_bank, h, w, boundary):
    """Dense (h*w, (n+1)*h*w) matrix of :func:`apply_cbank`."""
    return np.hstack([conv_matrix(c, h, w, boundary) for c in inv_bank.filters])


def iteration_matrix(ker, bank, mu, inv_bank, h, w, boundary):
    """Richardson iteration matrix ``I - C L`` whose spectral radius governs
    convergence of :func:`cpcr` on an h-by-w grid."""
    lmat = stack_matrix(ker, bank, mu, h, w, boundary)
    cmat = cbank_matrix(inv_bank, h, w, boundary)
    return np.eye(h * w) - cmat @ lmat


def dense_fixed_point(y, ker, bank, mu, z, inv_bank, boundary):
    """Solve ``C(L x - u) = 0`` exactly; the point :func:`cpcr` converges to."""
    y, z = _check_inputs(y, bank, mu, z)
    h, w = y.shape
    lmat = stack_matrix(ker, bank, mu, h, w, boundary)
    cmat = cbank_matrix(inv_bank, h, w, boundary)
    u = _stack_target(y, mu, z).reshape(-1)
    x = np.linalg.solve(cmat @ lmat, cmat @ u)
    return x.reshape(h, w)


def dense_least_squares(y, ker, bank, mu, z, boundary):
    """Minimum-norm least-squares solution of ``L x ~ u``; the point
    :func:`cg_normal` converges to."""
    y, z = _check_inputs(y, bank, mu, z)
    h, w = y.shape
    lmat = stack_matrix(ker, bank, mu, h, w, boundary)
    u = _stack_target(y, mu, z).reshape(-1)
    x, *_ = np.linalg.lstsq(lmat, u, rcond=None)
    return x.reshape(h, w)

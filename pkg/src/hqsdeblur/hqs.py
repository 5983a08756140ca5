"""Half-quadratic splitting outer loop with three interchangeable x-solvers.

The objective is ``0.5*|k*x - y|^2 + lambda * sum_i |w_i f_i * x|_1``.
Splitting introduces auxiliaries ``z_i ~ w_i f_i * x`` coupled by a weight
``mu`` that follows the geometric schedule ``mu_t = mu0 * mu_factor^t``.
Each outer iteration does an exact soft-threshold z-update followed by a
quadratic x-update, solved by one of:

- ``cpcr``: a few preconditioned Richardson steps, all-spatial arithmetic;
- ``cg``: conjugate gradient on the normal equations, on a replicate
  pre-padded grid with zero-padding convolutions;
- ``fft``: the closed-form periodic-model solve, with selectable padding
  (none, replicate, or replicate + edge tapering).
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .imagecore import Boundary, bank_apply, conv2d, gradient_bank, psnr
from .invfilter import compute_inverse_bank
from .solvers import cg_deconv, cpcr
from .spectral import edgetaper, wiener_solve

__all__ = [
    "HqsConfig",
    "HqsSnapshot",
    "HqsOutcome",
    "soft_threshold",
    "hqs_energy",
    "chqs",
    "hqs_cg",
    "hqs_fft",
    "deblur",
]

_INNERS = ("cpcr", "cg", "fft")
_PADDINGS = ("none", "replicate", "edgetaper")


@dataclass
class HqsConfig:
    """All tunables of the outer loop and its inner solvers."""

    lam: float = 0.003
    mu0: float = 0.008
    mu_factor: float = 4.0
    outer_iters: int = 10
    inner: str = "cpcr"
    cpcr_iters: int = 5
    cg_iters: int = 100
    cg_tol: float = 1e-9
    rho: float = 0.05
    ratio: float = 2.0
    aux_side: int = 31
    padding: str = "edgetaper"

    def __post_init__(self):
        if self.lam < 0 or not np.isfinite(self.lam):
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.mu0 <= 0 or not np.isfinite(self.mu0):
            raise ConfigError(f"mu0 must be finite and > 0, got {self.mu0}")
        if self.mu_factor < 1 or not np.isfinite(self.mu_factor):
            raise ConfigError(f"mu_factor must be >= 1, got {self.mu_factor}")
        if self.outer_iters < 1:
            raise ConfigError(f"outer_iters must be >= 1, got {self.outer_iters}")
        if self.inner not in _INNERS:
            raise ConfigError(f"inner must be one of {_INNERS}, got {self.inner!r}")
        if self.cpcr_iters < 1:
            raise ConfigError(f"cpcr_iters must be >= 1, got {self.cpcr_iters}")
        if self.cg_iters < 1:
            raise ConfigError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.cg_tol < 0:
            raise ConfigError(f"cg_tol must be >= 0, got {self.cg_tol}")
        if self.rho <= 0 or not np.isfinite(self.rho):
            raise ConfigError(f"rho must be finite and > 0, got {self.rho}")
        if self.ratio < 1:
            raise ConfigError(f"ratio must be >= 1, got {self.ratio}")
        if self.aux_side < 1 or self.aux_side % 2 == 0:
            raise ConfigError(f"aux_side must be a positive odd integer, got {self.aux_side}")
        if self.padding not in _PADDINGS:
            raise ConfigError(f"padding must be one of {_PADDINGS}, got {self.padding!r}")

    def mu_at(self, t):
        return self.mu0 * self.mu_factor**t

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # -- flat key=value persistence -----------------------------------------

    _ALIASES = {"lambda": "lam"}

    def to_file(self, path):
        names = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        names["lambda"] = names.pop("lam")
        with open(path, "w") as fh:
            for key in sorted(names):
                fh.write(f"{key} = {names[key]}\n")

    @classmethod
    def from_file(cls, path):
        """Parse ``key = value`` lines; '#' starts a comment, blanks ignored.

        Keys accept either spelling of word breaks (``outer_iters`` or
        ``outer-iters``, matching the command-line flags).
        """
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                key = key.strip().replace("-", "_")
                field_name = cls._ALIASES.get(key, key)
                if field_name not in types:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                caster = types[field_name]
                if isinstance(caster, str):
                    caster = {"float": float, "int": int, "str": str}[caster]
                try:
                    kwargs[field_name] = caster(value.strip())
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        return cls(**kwargs)


@dataclass
class HqsSnapshot:
    """State captured at one outer iteration, on the solver's working grid."""

    iteration: int
    mu: float
    energy_pre_z: float
    energy_post_z: float
    x: np.ndarray
    z: np.ndarray


@dataclass
class HqsOutcome:
    """Final estimate plus per-iteration diagnostics."""

    x: np.ndarray
    snapshots: list
    solver_reports: list
    psnr_history: list


def soft_threshold(values, tau):
    """Elementwise ``sign(v) * max(|v| - tau, 0)``, the exact minimizer of
    ``0.5*(v - z)^2 + tau*|z|`` over z."""
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.maximum(np.abs(values) - tau, 0.0)


def hqs_energy(x, z, y, ker, bank, mu, lam, boundary):
    """Split objective ``0.5|k*x - y|^2 + mu/2 |Fx - z|^2 + lam |z|_1``."""
    data = conv2d(x, ker, boundary) - y
    energy = 0.5 * float(np.dot(data.ravel(), data.ravel()))
    if len(bank):
        coupling = bank_apply(bank, x, boundary) - z
        energy += 0.5 * mu * float(np.dot(coupling.ravel(), coupling.ravel()))
        energy += lam * float(np.abs(z).sum())
    return energy


def _run_outer(start, ker, bank, cfg, boundary, x_update, crop, truth,
               energy_fn):
    """Shared outer loop: z prox, then the supplied x-solver, per iteration."""
    x = start.copy()
    snapshots = []
    reports = []
    psnr_history = []
    for t in range(cfg.outer_iters):
        mu = cfg.mu_at(t)
        responses = bank_apply(bank, x, boundary) if len(bank) else np.zeros((0,) + x.shape)
        z_pre = responses if t == 0 else z_carry
        energy_pre = energy_fn(x, z_pre, mu)
        z = soft_threshold(responses, cfg.lam / mu) if len(bank) else z_pre
        energy_post = energy_fn(x, z, mu)

        x, report = x_update(x, z, mu, t)
        if not np.isfinite(x).all():
            raise DivergenceError(f"estimate became non-finite at outer iteration {t}",
                                  report=report)
        z_carry = z
        snapshots.append(HqsSnapshot(iteration=t, mu=mu, energy_pre_z=energy_pre,
                                     energy_post_z=energy_post, x=x.copy(), z=z.copy()))
        if report is not None:
            reports.append(report)
        if truth is not None:
            psnr_history.append(psnr(crop(x), truth))
    return HqsOutcome(x=crop(x), snapshots=snapshots,
                      solver_reports=reports, psnr_history=psnr_history)


def _default_bank(bank):
    return gradient_bank() if bank is None else bank


def chqs(y, ker, config=None, bank=None, truth=None):
    """HQS with the preconditioned Richardson inner solver (all-spatial).

    Runs on a replicate pre-padded frame with replicate-boundary
    convolutions and crops back, which keeps boundary-model error away from
    the delivered pixels.  Inverse banks are refit per outer iteration
    because the stacked operator changes with ``mu``.
    """
    cfg = config or HqsConfig()
    bank = _default_bank(bank)
    boundary = Boundary.REPLICATE
    ker.require_blur("blur kernel")
    y = np.asarray(y, dtype=np.float64)
    rh, rw = ker.half
    y_work = np.pad(y, ((rh, rh), (rw, rw)), mode="edge")
    inv_banks = {}

    def crop(x):
        if rh == 0 and rw == 0:
            return x.copy()
        return x[rh : rh + y.shape[0], rw : rw + y.shape[1]].copy()

    def x_update(x, z, mu, t):
        if t not in inv_banks:
            inv_banks[t] = compute_inverse_bank(ker, bank, mu, rho=cfg.rho,
                                                ratio=cfg.ratio, aux_side=cfg.aux_side)
        return cpcr(y_work, ker, bank, mu, z, inv_banks[t], x0=x,
                    iters=cfg.cpcr_iters, boundary=boundary)

    def energy_fn(x, z, mu):
        return hqs_energy(x, z, y_work, ker, bank, mu, cfg.lam, boundary)

    return _run_outer(y_work, ker, bank, cfg, boundary, x_update, crop, truth,
                      energy_fn)


def hqs_cg(y, ker, config=None, bank=None, truth=None):
    """HQS with conjugate gradient on the normal equations.

    The unknown lives on a grid padded by the kernel half-width with
    zero-boundary operators throughout (exact adjoints); the data term only
    compares the valid central frame against the real observation, so no
    fabricated border pixels enter the objective.  The estimate is cropped
    back at the end.
    """
    cfg = config or HqsConfig()
    bank = _default_bank(bank)
    ker.require_blur("blur kernel")
    y = np.asarray(y, dtype=np.float64)
    rh, rw = ker.half
    start = np.pad(y, ((rh, rh), (rw, rw)), mode="edge")
    boundary = Boundary.ZERO

    def crop(x):
        return x[rh : rh + y.shape[0], rw : rw + y.shape[1]].copy()

    def x_update(x, z, mu, t):
        return cg_deconv(y, ker, bank, mu, z, x0=x, max_iters=cfg.cg_iters,
                         tol=cfg.cg_tol)

    def energy_fn(x, z, mu):
        data = conv2d(x, ker, boundary)[rh : rh + y.shape[0], rw : rw + y.shape[1]] - y
        energy = 0.5 * float(np.dot(data.ravel(), data.ravel()))
        if len(bank):
            coupling = bank_apply(bank, x, boundary) - z
            energy += 0.5 * mu * float(np.dot(coupling.ravel(), coupling.ravel()))
            energy += cfg.lam * float(np.abs(z).sum())
        return energy

    return _run_outer(start, ker, bank, cfg, boundary, x_update, crop, truth,
                      energy_fn)


def hqs_fft(y, ker, config=None, bank=None, truth=None):
    """HQS with the closed-form periodic x-update.

    ``config.padding`` controls boundary handling: "none" works on the raw
    frame, "replicate" pre-pads by the kernel half-width, "edgetaper"
    additionally blends the padded frame toward its blurred version so the
    periodic model sees almost-matching opposite edges.
    """
    cfg = config or HqsConfig()
    bank = _default_bank(bank)
    ker.require_blur("blur kernel")
    y = np.asarray(y, dtype=np.float64)
    if cfg.padding == "none":
        y_work = y
        rh = rw = 0
    else:
        rh, rw = ker.half
        y_work = np.pad(y, ((rh, rh), (rw, rw)), mode="edge")
        if cfg.padding == "edgetaper":
            y_work = edgetaper(y_work, ker)
    boundary = Boundary.PERIODIC

    def crop(x):
        if rh == 0 and rw == 0:
            return x.copy()
        return x[rh : rh + y.shape[0], rw : rw + y.shape[1]].copy()

    def x_update(x, z, mu, t):
        return wiener_solve(y_work, ker, bank, mu, z), None

    def energy_fn(x, z, mu):
        return hqs_energy(x, z, y_work, ker, bank, mu, cfg.lam, boundary)

    return _run_outer(y_work, ker, bank, cfg, boundary, x_update, crop, truth,
                      energy_fn)


_METHODS = {"cpcr": chqs, "cg": hqs_cg, "fft": hqs_fft}


def deblur(y, ker, config=None, bank=None, truth=None):
    """Dispatch on ``config.inner``; RGB images are solved per channel.

    For RGB input the returned outcome holds the stacked result and the
    per-channel outcomes' diagnostics concatenated in channel order.
    """
    cfg = config or HqsConfig()
    runner = _METHODS[cfg.inner]
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        return runner(y, ker, cfg, bank=bank, truth=truth)
    if y.ndim == 3 and y.shape[2] == 3:
        outs = []
        for c in range(3):
            t_c = truth[:, :, c] if truth is not None else None
            outs.append(runner(y[:, :, c], ker, cfg, bank=bank, truth=t_c))
        x = np.stack([o.x for o in outs], axis=2)
        return HqsOutcome(
            x=x,
            snapshots=[s for o in outs for s in o.snapshots],
            solver_reports=[r for o in outs for r in o.solver_reports],
            psnr_history=[p for o in outs for p in o.psnr_history],
        )
    raise ValueError(f"expected (h, w) or (h, w, 3) image, got shape {y.shape}")

"""Command line interface.

Subcommands: ``blur`` (apply uniform or per-pixel blur plus noise),
``deblur`` (run a solver), ``bench`` (corpus benchmark with CSV output),
``invkernel`` (fit and export an approximate inverse bank), ``dict``
(build the motion-kernel dictionary), ``corpus`` (emit the synthetic
benchmark data as files).

Exit codes: 0 success, 1 failed benchmark ordering check, 2 I/O or file
format error, 3 configuration/validation error, 4 solver divergence.
"""

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import backend
from .errors import ConfigError, DivergenceError, FormatError
from .hqs import HqsConfig, deblur
from .imagecore import (Boundary, Kernel, add_gaussian_noise, conv2d, psnr,
                        read_kernel_txt, read_png, write_kernel_txt, write_png)
from .invfilter import compute_inverse_bank, spectral_radius_estimate
from .imagecore import gradient_bank, FilterBank
from .nonuniform import (KernelDictionary, build_dictionary, nonuniform_chqs,
                         read_field_txt, varying_conv)
from .synthetic import blur_pair, corpus_image, shake_kernels

_METHOD_CHOICES = ("cpcr", "cg", "fft-none", "fft-replicate", "fft-edgetaper")


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems as config errors (3)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _config_from_args(args):
    cfg = HqsConfig.from_file(args.config) if args.config else HqsConfig()
    overrides = {}
    for flag, field in [
        ("lam", "lam"), ("mu0", "mu0"), ("mu_factor", "mu_factor"),
        ("outer_iters", "outer_iters"), ("cpcr_iters", "cpcr_iters"),
        ("cg_iters", "cg_iters"), ("cg_tol", "cg_tol"), ("rho", "rho"),
        ("ratio", "ratio"), ("aux_side", "aux_side"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    method = getattr(args, "method", None)
    if method is not None:
        if method.startswith("fft"):
            overrides["inner"] = "fft"
            overrides["padding"] = method.split("-", 1)[1]
        else:
            overrides["inner"] = method
    return cfg.replace(**overrides) if overrides else cfg


def _channels(img):
    if img.ndim == 2:
        yield img
    else:
        for c in range(img.shape[2]):
            yield img[:, :, c]


def cmd_blur(args):
    img = read_png(args.image)
    if args.field:
        dictionary = KernelDictionary.load(args.dict) if args.dict else build_dictionary()
        field = read_field_txt(args.field)
        if field.max() >= len(dictionary):
            raise ConfigError(
                f"field references kernel {field.max()} but dictionary has "
                f"{len(dictionary)} entries")
        planes = [varying_conv(ch, field, dictionary) for ch in _channels(img)]
    else:
        ker = read_kernel_txt(args.kernel).require_blur("blur kernel")
        planes = [conv2d(ch, ker, Boundary.REPLICATE) for ch in _channels(img)]
    out = planes[0] if img.ndim == 2 else np.stack(planes, axis=2)
    if args.noise:
        out = add_gaussian_noise(out, args.noise, args.seed)
    write_png(args.out, out)
    print(f"wrote {args.out}")
    return 0


def cmd_deblur(args):
    img = read_png(args.image)
    cfg = _config_from_args(args)
    truth = read_png(args.truth) if args.truth else None
    started = time.perf_counter()
    if args.field:
        dictionary = KernelDictionary.load(args.dict) if args.dict else build_dictionary()
        field = read_field_txt(args.field)
        planes = []
        history = []
        for ch in _channels(img):
            outcome = nonuniform_chqs(ch, field, dictionary, cfg)
            planes.append(outcome.x)
            history.extend(outcome.psnr_history)
        x = planes[0] if img.ndim == 2 else np.stack(planes, axis=2)
    else:
        ker = read_kernel_txt(args.kernel).require_blur("blur kernel")
        outcome = deblur(img, ker, cfg, truth=truth)
        x = outcome.x
    elapsed = time.perf_counter() - started
    write_png(args.out, x)
    line = f"wrote {args.out} method={cfg.inner} seconds={elapsed:.2f}"
    if truth is not None:
        line += f" psnr={psnr(np.clip(x, 0.0, 1.0), truth):.2f}dB"
    print(line)
    return 0


def _bench_config(method):
    if method == "cpcr":
        return HqsConfig(inner="cpcr")
    if method == "cg":
        return HqsConfig(inner="cg")
    return HqsConfig(inner="fft", padding=method.split("-", 1)[1])


def cmd_bench(args):
    if args.backend:
        backend.use(args.backend)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in _METHOD_CHOICES:
            raise ConfigError(f"unknown method {m!r}; choose from {_METHOD_CHOICES}")
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    kernels = shake_kernels()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for i in range(args.images):
        truth_big = corpus_image(i, side=args.side + 2 * args.margin)
        ker = kernels[i % len(kernels)]
        truth, observed = blur_pair(truth_big, ker, args.noise, seed=4000 + i,
                                    margin=args.margin)
        for method in methods:
            tasks.append((i, truth, observed, ker, method))

    def run_task(task):
        i, truth, observed, ker, method = task
        started = time.perf_counter()
        outcome = deblur(observed, ker, _bench_config(method), truth=truth)
        elapsed = time.perf_counter() - started
        score = psnr(outcome.x, truth)
        return {"image": i, "kernel_side": ker.side_h, "method": method,
                "psnr_db": f"{score:.4f}", "seconds": f"{elapsed:.3f}"}

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_task, tasks))
    else:
        rows = [run_task(t) for t in tasks]
    for r in rows:
        print(f"image {r['image']:2d} {r['method']:14s} "
              f"psnr={float(r['psnr_db']):6.2f}dB  {float(r['seconds']):6.2f}s")
    with open(outdir / "results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    means = {}
    for method in methods:
        scores = [float(r["psnr_db"]) for r in rows if r["method"] == method]
        times = [float(r["seconds"]) for r in rows if r["method"] == method]
        means[method] = (float(np.mean(scores)), float(np.mean(times)))
    with open(outdir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mean_psnr_db", "mean_seconds"])
        for method in methods:
            writer.writerow([method, f"{means[method][0]:.4f}", f"{means[method][1]:.3f}"])
    print(f"wrote {outdir / 'results.csv'} and {outdir / 'summary.csv'}")
    for method in methods:
        print(f"mean {method:14s} psnr={means[method][0]:6.2f}dB  {means[method][1]:6.2f}s")

    if args.check:
        failures = []

        def expect(a, b, slack, label):
            if not (a in means and b in means):
                return
            if means[a][0] < means[b][0] - slack:
                failures.append(f"{label}: {means[a][0]:.2f} < {means[b][0]:.2f} - {slack}")

        expect("cpcr", "cg", 0.1, "cpcr vs cg")
        expect("cpcr", "fft-edgetaper", 0.0, "cpcr vs fft-edgetaper")
        expect("fft-edgetaper", "fft-replicate", 0.0, "edgetaper vs replicate")
        expect("fft-replicate", "fft-none", 0.0, "replicate vs no padding")
        if failures:
            for f in failures:
                print(f"ordering check failed: {f}", file=sys.stderr)
            return 1
        print("ordering checks passed")
    return 0


def cmd_invkernel(args):
    ker = read_kernel_txt(args.kernel)
    bank = FilterBank([]) if args.no_bank else gradient_bank()
    inv = compute_inverse_bank(ker, bank, args.mu, rho=args.rho,
                               ratio=args.ratio, aux_side=args.aux_side)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for i, fil in enumerate(inv.filters):
        write_kernel_txt(f"{prefix}_c{i}.txt", fil)
    print(f"wrote {len(inv.filters)} filters to {prefix}_c*.txt "
          f"(dirac residual {inv.dirac_residual:.3e})")
    if args.grid:
        radius, converged, iters = spectral_radius_estimate(ker, bank, inv,
                                                            args.mu, args.grid)
        print(f"iteration spectral radius on {args.grid}x{args.grid} grid: "
              f"{radius:.6f} (converged={converged}, power iterations={iters})")
        if radius >= 1.0:
            print("warning: radius >= 1, the Richardson iteration may diverge",
                  file=sys.stderr)
    return 0


def cmd_dict(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dictionary = build_dictionary(side=args.side)
    dictionary.save(outdir / "kernels.npz")
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(dictionary.manifest(), fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(dictionary)} kernels to {outdir / 'kernels.npz'}")
    return 0


def cmd_corpus(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    kernels = shake_kernels()
    for i in range(args.count):
        truth_big = corpus_image(i, side=args.side + 2 * args.margin)
        ker = kernels[i % len(kernels)]
        truth, observed = blur_pair(truth_big, ker, args.noise, seed=4000 + i,
                                    margin=args.margin)
        write_png(outdir / f"truth_{i:02d}.png", truth)
        write_png(outdir / f"blurred_{i:02d}.png", observed)
        write_kernel_txt(outdir / f"kernel_{i:02d}.txt", ker)
    print(f"wrote {args.count} image/kernel triples to {outdir}")
    return 0


def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--method", choices=_METHOD_CHOICES, help="solver to run")
    p.add_argument("--lam", "--lambda", dest="lam", type=float,
                   help="sparsity weight")
    p.add_argument("--mu0", type=float, help="initial coupling weight")
    p.add_argument("--mu-factor", dest="mu_factor", type=float,
                   help="per-iteration coupling growth")
    p.add_argument("--outer-iters", dest="outer_iters", type=int)
    p.add_argument("--cpcr-iters", dest="cpcr_iters", type=int)
    p.add_argument("--cg-iters", dest="cg_iters", type=int)
    p.add_argument("--cg-tol", dest="cg_tol", type=float)
    p.add_argument("--rho", type=float, help="inverse-filter ridge weight")
    p.add_argument("--ratio", type=float, help="blur-row inverse support ratio")
    p.add_argument("--aux-side", dest="aux_side", type=int,
                   help="regularizer-row inverse support side")


def build_parser():
    parser = _Parser(prog="hqsdeblur",
                     description="Non-blind deblurring via half-quadratic "
                                 "splitting with convolutional solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blur", parents=[], help="apply blur and noise")
    p.add_argument("--image", required=True)
    p.add_argument("--kernel", help="kernel text file (uniform blur)")
    p.add_argument("--field", help="per-pixel kernel-index text file")
    p.add_argument("--dict", help="kernel dictionary .npz (with --field)")
    p.add_argument("--noise", type=float, default=0.0,
                   help="Gaussian noise std as percent of the intensity range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_blur)

    p = sub.add_parser("deblur", help="solve for the sharp image")
    p.add_argument("--image", required=True)
    p.add_argument("--kernel", help="kernel text file (uniform blur)")
    p.add_argument("--field", help="per-pixel kernel-index text file")
    p.add_argument("--dict", help="kernel dictionary .npz (with --field)")
    p.add_argument("--truth", help="reference image for PSNR reporting")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("bench", help="run the synthetic benchmark")
    p.add_argument("--out", required=True, help="directory for CSV results")
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--side", type=int, default=128)
    p.add_argument("--margin", type=int, default=16)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--methods", default=",".join(_METHOD_CHOICES))
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads for (image, method) tasks")
    p.add_argument("--backend", choices=("cython", "python"))
    p.add_argument("--check", action="store_true",
                   help="fail (exit 1) if the expected quality ordering breaks")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("invkernel", help="fit an approximate inverse bank")
    p.add_argument("--kernel", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--ratio", type=float, default=2.0)
    p.add_argument("--aux-side", dest="aux_side", type=int, default=31)
    p.add_argument("--no-bank", action="store_true",
                   help="fit for the blur row only")
    p.add_argument("--grid", type=int, default=0,
                   help="if set, report the iteration spectral radius on this grid")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_invkernel)

    p = sub.add_parser("dict", help="build the motion-kernel dictionary")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--side", type=int, default=35)
    p.set_defaults(func=cmd_dict)

    p = sub.add_parser("corpus", help="write the synthetic corpus to disk")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--side", type=int, default=128)
    p.add_argument("--margin", type=int, default=16)
    p.add_argument("--noise", type=float, default=2.0)
    p.set_defaults(func=cmd_corpus)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "field", None) is None and getattr(args, "kernel", None) is None \
                and args.command in ("blur", "deblur"):
            raise ConfigError("either --kernel or --field is required")
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return 4
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IsADirectoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Non-blind image deblurring via half-quadratic splitting.

The x-subproblem can be solved three ways: a convolutional preconditioned
Richardson iteration (a handful of small convolutions per step), conjugate
gradient on the normal equations, or a closed-form periodic FFT solve.
Spatially-varying blur is handled with per-pixel kernels drawn from a
motion dictionary.  Hot loops run on a compiled extension when available,
with a pure NumPy/SciPy fallback (see :mod:`hqsdeblur.backend`).
"""

from . import backend
from .errors import ConfigError, DivergenceError, FormatError
from .hqs import (HqsConfig, HqsOutcome, HqsSnapshot, chqs, deblur, hqs_cg,
                  hqs_energy, hqs_fft, soft_threshold)
from .imagecore import (Boundary, FilterBank, Kernel, add_gaussian_noise,
                        bank_apply, conv2d, conv_matrix, correlate2d,
                        gradient_bank, psnr, read_kernel_txt, read_png,
                        round_to_odd, write_kernel_txt, write_png)
from .invfilter import (InverseBank, compute_inverse_bank, power_radius,
                        spectral_radius_estimate)
from .nonuniform import (KernelDictionary, build_dictionary, dominant_index,
                         make_line_kernel, nonuniform_chqs, read_field_txt,
                         varying_conv, write_field_txt)
from .solvers import (SolveReport, cg_normal, cpcr, dense_fixed_point,
                      dense_least_squares, iteration_matrix)
from .spectral import dft2, edgetaper, embed_kernel, idft2, wiener_solve
from .synthetic import blur_pair, corpus_image, shake_kernels, two_region_field

__version__ = "0.1.0"

__all__ = [
    "backend",
    "Boundary", "Kernel", "FilterBank", "InverseBank",
    "HqsConfig", "HqsOutcome", "HqsSnapshot", "SolveReport",
    "KernelDictionary",
    "ConfigError", "DivergenceError", "FormatError",
    "conv2d", "correlate2d", "bank_apply", "conv_matrix", "varying_conv",
    "gradient_bank", "round_to_odd",
    "psnr", "add_gaussian_noise",
    "read_png", "write_png", "read_kernel_txt", "write_kernel_txt",
    "read_field_txt", "write_field_txt",
    "dft2", "idft2", "embed_kernel", "wiener_solve", "edgetaper",
    "compute_inverse_bank", "power_radius", "spectral_radius_estimate",
    "iteration_matrix",
    "cpcr", "cg_normal", "dense_fixed_point", "dense_least_squares",
    "soft_threshold", "hqs_energy", "chqs", "hqs_cg", "hqs_fft", "deblur",
    "make_line_kernel", "build_dictionary", "dominant_index", "nonuniform_chqs",
    "corpus_image", "shake_kernels", "blur_pair", "two_region_field",
    "__version__",
]

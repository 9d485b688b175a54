"""Robin heat kernel: spectral and parametrix constructions, tables and estimate checks."""

from .bounds import (MODES, PARAMETRIX, SPECTRAL, BoundReport, KernelTable, build_kernel_table,
                     split_gradient, verify_kernel_bounds)
from .eigen import EigenSystem, interval_modes, modes_needed, robin_eigensystem
from .geometry import (SingularFit, analytic_bound, analytic_bound_max, fit_singular_exponent,
                       singular_boundary_integral)
from .parametrix import kernel_parametrix, parametrix_terms
from .slabs import SlabTable, build_slab_table, cell_kernel
from .spectral import (gaussian, half_line_kernel, interval_images, interval_kernel,
                       interval_time_integral, kernel_spectral, neumann_images, resolvent,
                       robin_kernel_1d)

__all__ = [
    "MODES", "PARAMETRIX", "SPECTRAL", "BoundReport", "KernelTable", "build_kernel_table",
    "verify_kernel_bounds", "split_gradient", "EigenSystem", "interval_modes", "modes_needed", "robin_eigensystem",
    "SingularFit", "analytic_bound", "analytic_bound_max", "fit_singular_exponent",
    "singular_boundary_integral", "kernel_parametrix", "parametrix_terms", "SlabTable",
    "build_slab_table", "cell_kernel", "gaussian", "half_line_kernel", "interval_images",
    "interval_kernel", "interval_time_integral", "kernel_spectral", "neumann_images", "resolvent",
    "robin_kernel_1d",
]

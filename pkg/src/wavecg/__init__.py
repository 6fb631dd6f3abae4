"""wavecg: numerics for a 1D wave / memory-diffusion (Coleman-Gurtin) system.

Submodules
----------
kernel    exponential-sum memory kernels and their derived constants
symbols   complex diffusivity, segment transfer functions, characteristic function
spectrum  strip eigenvalue location (diffusivity zeros + characteristic roots)
operator  finite-difference generator with its energy Gram matrix
resolvent energy-norm resolvent norms, closed-form lower bounds, semi-analytic solver
evolve    contractive time stepping and decay-rate measurement
cli       command-line front end
"""

from .kernel import KernelReport, MemoryKernel, check, normalize, unit_exponential

__version__ = "0.1.0"

__all__ = [
    "MemoryKernel",
    "KernelReport",
    "check",
    "normalize",
    "unit_exponential",
    "__version__",
]

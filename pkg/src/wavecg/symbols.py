"""Closed-form frequency-domain symbols of the coupled model.

For a kernel mu(s) = sum a_k e^{-b_k s} the heat segment has complex
diffusivity

    ell(lam) = 1 + (1/lam) int_0^inf mu(s)(1 - e^{-lam s}) ds
             = 1 + sum_k a_k / (b_k (b_k + lam)),

which is a rational function, regular at lam = 0 with ell(0) = 1 + sum a/b^2.
The two segment transfer functions (boundary output per unit boundary input)
are

    wave segment:  coth(lam)
    heat segment:  tanh sqrt(lam/ell) / sqrt(lam ell)  =  h(z) / (ell c(z)),

with z = lam/ell and the entire helpers c(z) = cosh sqrt(z),
h(z) = sinh sqrt(z) / sqrt(z).  The h/(ell c) form removes the removable
singularity at lam = 0, where the heat transfer equals 1/ell(0) = 1/2 for
unit-mass kernels.

Eigenvalues of the coupled generator in the strip -delta/2 < Re lam <= 0 are
the zeros of the characteristic function

    chi(lam) = sqrt(ell lam) sinh(lam) c(lam/ell)
               + cosh(lam) sqrt(lam/ell) h(lam/ell),

together with the zeros of ell itself.  All square roots are principal
(branch cut along the negative real axis, Re sqrt >= 0).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DiffusivityZeroError, DomainError, PoleError, PropertyViolation
from .kernel import MemoryKernel

SERIES_RADIUS = 0.25
_HUGE_Z = 1.0e5  # beyond this |lam/ell| the tanh route avoids cosh overflow

# Taylor coefficients of cosh(sqrt(z)) = sum z^n/(2n)! and
# sinh(sqrt(z))/sqrt(z) = sum z^n/(2n+1)!; 12 terms give ~1e-26 tail at |z|=1/4.
_N_TERMS = 12
_COSH_COEF = np.array([1.0 / math.factorial(2 * n) for n in range(_N_TERMS)])
_SINHC_COEF = np.array([1.0 / math.factorial(2 * n + 1) for n in range(_N_TERMS)])


def _horner(coef: np.ndarray, z: np.ndarray) -> np.ndarray:
    acc = np.full_like(z, coef[-1])
    for c in coef[-2::-1]:
        acc = acc * z + c
    return acc


def cosh_sqrt(z):
    """cosh(sqrt(z)) evaluated as an entire function of z (branch free)."""
    z_arr = np.asarray(z, dtype=complex)
    out = np.empty_like(z_arr)
    small = np.abs(z_arr) < SERIES_RADIUS
    if np.any(small):
        out[small] = _horner(_COSH_COEF, z_arr[small])
    if np.any(~small):
        out[~small] = np.cosh(np.sqrt(z_arr[~small]))
    return out if np.ndim(z) else complex(out)


def sinhc_sqrt(z):
    """sinh(sqrt(z))/sqrt(z) evaluated as an entire function of z; value 1 at 0."""
    z_arr = np.asarray(z, dtype=complex)
    out = np.empty_like(z_arr)
    small = np.abs(z_arr) < SERIES_RADIUS
    if np.any(small):
        out[small] = _horner(_SINHC_COEF, z_arr[small])
    if np.any(~small):
        w = np.sqrt(z_arr[~small])
        out[~small] = np.sinh(w) / w
    return out if np.ndim(z) else complex(out)


def rational_diffusivity(kernel: MemoryKernel, lam):
    """ell as a rational function, without domain checks.

    This is the analytic continuation of the defining integral to all of C
    minus the poles -b_k; zero-residual checks for diffusivity zeros may sit
    left of the integral's convergence abscissa.
    """
    lam_arr = np.asarray(lam, dtype=complex)
    a = kernel.amplitudes
    b = kernel.rates
    denom = b[:, None] + lam_arr.reshape(1, -1)
    val = 1.0 + np.sum((a / b)[:, None] / denom, axis=0)
    val = val.reshape(lam_arr.shape)
    return val if np.ndim(lam) else complex(val)


def complex_diffusivity(kernel: MemoryKernel, lam):
    """Rational diffusivity ell(lam) = 1 + sum a_k/(b_k(b_k+lam)).

    Defined for Re lam > -delta (where the defining integral converges) and
    away from the poles lam = -b_k.  Regular at lam = 0.
    """
    lam_arr = np.asarray(lam, dtype=complex)
    delta = kernel.delta
    b = kernel.rates
    denom = b[:, None] + lam_arr.reshape(1, -1)
    if np.any(np.abs(denom) < 1e-12 * b[:, None]):
        raise PoleError("lambda coincides with a kernel pole -b_k")
    if np.any(lam_arr.real <= -delta):
        raise DomainError(f"complex_diffusivity requires Re lambda > -delta = {-delta}")
    return rational_diffusivity(kernel, lam)


def wave_transfer(lam):
    """Transfer function of the wave segment: coth(lam) = u'(0) per unit v(0).

    Poles at lam in i*pi*Z; flagged when |sinh lam| < 1e-14 cosh(Re lam).
    """
    lam_arr = np.asarray(lam, dtype=complex)
    sh = np.sinh(lam_arr)
    if np.any(np.abs(sh) < 1e-14 * np.cosh(lam_arr.real)):
        raise PoleError("coth evaluated at (or numerically at) a pole i*k*pi")
    out = np.cosh(lam_arr) / sh
    return out if np.ndim(lam) else complex(out)


def cg_transfer(kernel: MemoryKernel, lam):
    """Transfer function of the heat segment: tanh(sqrt(lam/ell))/sqrt(lam ell).

    Evaluated as h(z)/(ell c(z)) with z = lam/ell, which is branch free and
    regular at lam = 0 (value 1/ell(0) * 1 = 1/2 for unit-mass kernels).
    """
    lam_arr = np.asarray(lam, dtype=complex)
    ell = np.asarray(complex_diffusivity(kernel, lam_arr), dtype=complex).reshape(
        lam_arr.shape
    )
    if np.any(np.abs(ell) < 1e-14):
        raise DiffusivityZeroError("ell(lambda) = 0: heat transfer undefined")
    z = lam_arr / ell
    out = np.empty_like(z)
    huge = np.abs(z) > _HUGE_Z
    rest = ~huge
    if np.any(rest):
        c = cosh_sqrt(z[rest])
        if np.any(np.abs(c) < 1e-290):
            raise PoleError("cosh sqrt(lam/ell) = 0: heat transfer pole")
        out[rest] = sinhc_sqrt(z[rest]) / (ell[rest] * c)
    if np.any(huge):
        # tanh is overflow-safe for any |sqrt z|; identical value where both apply
        w = np.sqrt(z[huge])
        out[huge] = np.tanh(w) / (ell[huge] * w)
    return out if np.ndim(lam) else complex(out)


def cg_transfer_floor(kernel: MemoryKernel, s_max: float, n_samples: int) -> float:
    """Measured floor c0_hat = min over s of (1 + sqrt|s|) Re cg_transfer(is).

    Samples n_samples frequencies on [-s_max, s_max].  The proven positivity
    of Re cg_transfer on the imaginary axis means the result must be > 0;
    a non-positive sample raises PropertyViolation.
    """
    if not (s_max > 0):
        raise DomainError("s_max must be positive")
    if n_samples < 2:
        raise DomainError("need at least two samples")
    s = np.linspace(-s_max, s_max, int(n_samples))
    vals = cg_transfer(kernel, 1j * s)
    re = vals.real
    if np.any(re <= 0.0):
        bad = s[np.argmin(re)]
        raise PropertyViolation(f"Re cg_transfer(is) <= 0 at s = {bad}")
    weighted = (1.0 + np.sqrt(np.abs(s))) * re
    return float(np.min(weighted))


def characteristic(kernel: MemoryKernel, lam):
    """Characteristic function chi whose strip zeros are coupled eigenvalues.

    chi(lam) = sqrt(ell lam) sinh(lam) c(lam/ell)
               + cosh(lam) sqrt(lam/ell) h(lam/ell),
    principal square roots.  chi(0) = 0 by construction, but 0 is not an
    eigenvalue; root searches must exclude it.
    """
    lam_arr = np.asarray(lam, dtype=complex)
    delta = kernel.delta
    if np.any(lam_arr.real <= -0.5 * delta):
        raise DomainError("characteristic defined for Re lambda > -delta/2")
    ell = np.asarray(complex_diffusivity(kernel, lam_arr), dtype=complex).reshape(
        lam_arr.shape
    )
    if np.any(np.abs(ell) < 1e-14):
        raise DiffusivityZeroError("chi undefined where ell = 0")
    z = lam_arr / ell
    out = np.sqrt(ell * lam_arr) * np.sinh(lam_arr) * cosh_sqrt(z) + np.cosh(
        lam_arr
    ) * np.sqrt(z) * sinhc_sqrt(z)
    return out if np.ndim(lam) else complex(out)

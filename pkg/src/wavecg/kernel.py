"""Exponential-sum memory kernels.

The relaxation density is mu(s) = sum_k a_k exp(-b_k s) with a_k, b_k > 0.
The induced convolution kernel is its tail integral
g(s) = int_s^inf mu(r) dr = sum_k (a_k/b_k) exp(-b_k s), and the model
requires g to have unit total mass: int_0^inf g = sum_k a_k/b_k**2 = 1.

Restricting to finite exponential sums keeps every derived quantity in
closed form (masses, complex diffusivity, history-cell weights) and makes
the decay comparison mu(t+s) <= exp(-delta t) mu(s) hold termwise with
delta = min_k b_k and constant 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

UNIT_MASS_TOL = 1e-12


@dataclass(frozen=True)
class MemoryKernel:
    """Sum-of-exponentials density mu(s) = sum_k a_k exp(-b_k s).

    `modes` is a sequence of (a_k, b_k) pairs, all strictly positive.
    Instances are immutable and safe to share across threads/processes.
    """

    modes: tuple[tuple[float, float], ...]

    def __post_init__(self):
        modes = tuple((float(a), float(b)) for a, b in self.modes)
        if not modes:
            raise ConfigError("memory kernel needs at least one (a, b) mode")
        for a, b in modes:
            if not (a > 0.0 and b > 0.0 and np.isfinite(a) and np.isfinite(b)):
                raise ConfigError(f"kernel mode ({a}, {b}) must be positive and finite")
        object.__setattr__(self, "modes", modes)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.modes])

    @property
    def rates(self) -> np.ndarray:
        return np.array([b for _, b in self.modes])

    @property
    def kappa(self) -> float:
        """Total mass of mu: int_0^inf mu = sum a_k / b_k."""
        return float(np.sum(self.amplitudes / self.rates))

    @property
    def g_mass(self) -> float:
        """Total mass of g: int_0^inf g = sum a_k / b_k**2 (should be 1)."""
        return float(np.sum(self.amplitudes / self.rates**2))

    @property
    def delta(self) -> float:
        """Exponential decay gap: mu(t+s) <= exp(-delta t) mu(s) with delta = min b_k."""
        return float(np.min(self.rates))

    @property
    def theta(self) -> float:
        """Valid (not necessarily tight) constant with g(s) <= theta * mu(s).

        Termwise (a_k/b_k) e^{-b_k s} <= (1/min_j b_j) a_k e^{-b_k s}, so
        theta = 1/min_k b_k always works.
        """
        return 1.0 / self.delta

    def mu(self, s):
        """Evaluate mu at s >= 0 (scalar or array)."""
        s_arr = _check_nonneg(s)
        a = self.amplitudes
        b = self.rates
        out = np.einsum("k,k...->...", a, np.exp(-np.multiply.outer(b, s_arr)))
        return out if np.ndim(s) else float(out)

    def g(self, s):
        """Evaluate g(s) = int_s^inf mu = sum (a_k/b_k) e^{-b_k s} at s >= 0."""
        s_arr = _check_nonneg(s)
        a = self.amplitudes
        b = self.rates
        out = np.einsum("k,k...->...", a / b, np.exp(-np.multiply.outer(b, s_arr)))
        return out if np.ndim(s) else float(out)


@dataclass(frozen=True)
class KernelReport:
    """Derived constants of a kernel plus the unit-mass verdict."""

    mass_g: float
    kappa: float
    delta: float
    theta: float
    valid: bool

    def as_dict(self) -> dict:
        return {
            "mass_g": self.mass_g,
            "kappa": self.kappa,
            "delta": self.delta,
            "theta": self.theta,
            "valid": self.valid,
        }


def check(kernel: MemoryKernel, tol: float = UNIT_MASS_TOL) -> KernelReport:
    """Compute closed-form masses/constants and test the unit-mass requirement."""
    mass_g = kernel.g_mass
    return KernelReport(
        mass_g=mass_g,
        kappa=kernel.kappa,
        delta=kernel.delta,
        theta=kernel.theta,
        valid=bool(abs(mass_g - 1.0) <= tol),
    )


def normalize(modes) -> MemoryKernel:
    """Rescale amplitudes so the returned kernel has unit g-mass.

    Idempotent: normalizing an already-valid kernel reproduces it.
    """
    kernel = modes if isinstance(modes, MemoryKernel) else MemoryKernel(tuple(modes))
    scale = kernel.g_mass
    return MemoryKernel(tuple((a / scale, b) for a, b in kernel.modes))


def unit_exponential() -> MemoryKernel:
    """The reference kernel mu(s) = exp(-s); g = mu, kappa = delta = theta = 1."""
    return MemoryKernel(((1.0, 1.0),))


def _check_nonneg(s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0):
        raise ValueError("kernel evaluation requires s >= 0")
    return s_arr

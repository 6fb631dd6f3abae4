"""Eigenvalue location in the vertical strip -delta/2 < Re lambda <= 0.

Inside the strip the spectrum of the coupled generator consists of the
zeros of the complex diffusivity ell (a rational function, reduced here to
a polynomial root problem) together with the zeros of the transcendental
characteristic function chi (located by a seeded scan plus damped Newton).

chi is evaluated with principal square roots exactly as defined and is not
analytically continued across branch cuts, so root finding deliberately
avoids argument-principle machinery in favour of scan + Newton.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kernel import MemoryKernel
from .symbols import characteristic, rational_diffusivity

logger = logging.getLogger("wavecg.spectrum")

DEFAULT_STRIP_MARGIN = 0.49  # re_min = -margin*delta keeps ell's integral usable
ZELL_RESIDUAL_TOL = 1e-10
CHI_RESIDUAL_TOL = 1e-9
ORIGIN_EXCLUSION = 1e-8
DEDUPE_RADIUS = 1e-6
NEWTON_MAX_ITER = 60


@dataclass(frozen=True)
class Strip:
    """Search window: re_min <= Re lambda <= re_max, im_min <= Im lambda <= im_max."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max or self.re_min == self.re_max):
            raise ConfigError("strip needs re_min <= re_max")
        if not self.im_min < self.im_max:
            raise ConfigError("strip needs im_min < im_max")

    @classmethod
    def for_kernel(
        cls,
        kernel: MemoryKernel,
        im_min: float = 0.5,
        im_max: float = 50.0 * np.pi,
        margin: float = DEFAULT_STRIP_MARGIN,
    ) -> "Strip":
        return cls(-margin * kernel.delta, 0.0, im_min, im_max)

    def contains(self, lam, pad: float = 0.0) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        return (
            (lam.real >= self.re_min - pad)
            & (lam.real <= self.re_max + pad)
            & (lam.imag >= self.im_min - pad)
            & (lam.imag <= self.im_max + pad)
        )


@dataclass
class RootList:
    """Strip eigenvalue candidates, split by which symbol vanishes."""

    z_ell: np.ndarray = field(default_factory=lambda: np.empty(0, complex))
    z_ell_residual: np.ndarray = field(default_factory=lambda: np.empty(0))
    sigma: np.ndarray = field(default_factory=lambda: np.empty(0, complex))
    sigma_residual: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def all_roots(self) -> np.ndarray:
        return np.concatenate([self.z_ell, self.sigma])


def diffusivity_zeros(
    kernel: MemoryKernel, strip: Strip, tol: float = ZELL_RESIDUAL_TOL
) -> np.ndarray:
    """Zeros of ell inside the strip.

    ell = 0 is equivalent to the degree-K polynomial equation
    prod_j (b_j + lam) + sum_k (a_k/b_k) prod_{j != k} (b_j + lam) = 0.
    The searched region may be wider than the convergence strip of the
    defining integral; residuals use the rational continuation.
    """
    a = kernel.amplitudes
    b = kernel.rates
    poly = np.poly(-b)
    for k in range(len(b)):
        others = np.delete(b, k)
        term = (a[k] / b[k]) * np.poly(-others)
        poly = np.polyadd(poly, term)
    roots = np.roots(poly)
    roots = roots[np.abs(rational_diffusivity(kernel, roots)) < tol]
    roots = roots[strip.contains(roots)]
    return np.sort_complex(roots)


def characteristic_roots(
    kernel: MemoryKernel,
    strip: Strip,
    seed_grid: tuple[int, int] = (24, 1200),
    chi_tol: float = CHI_RESIDUAL_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> RootList:
    """Locate strip zeros of the characteristic function (plus ell zeros).

    Scans |chi| on an (n_re, n_im) seed grid, refines every local minimum by
    damped Newton with a central-difference derivative, and keeps converged
    roots that lie in the strip, are at least 1e-8 away from 0 and from every
    diffusivity zero, and deduplicate within 1e-6.  Diverging seeds are
    dropped (logged at debug level), never fatal.
    """
    delta = kernel.delta
    if strip.re_min <= -0.5 * delta:
        raise ConfigError(
            f"strip re_min = {strip.re_min} must stay right of -delta/2 = {-0.5 * delta}"
        )
    n_re, n_im = seed_grid
    if n_re < 2 or n_im < 2:
        raise ConfigError("seed grid needs at least 2 points per direction")

    z_ell = diffusivity_zeros(kernel, strip)
    z_ell_res = np.abs(rational_diffusivity(kernel, z_ell)) if len(z_ell) else np.empty(0)

    re = np.linspace(strip.re_min, strip.re_max, n_re)
    im = np.linspace(strip.im_min, strip.im_max, n_im)
    lam_grid = re[None, :] + 1j * im[:, None]
    mag = np.abs(characteristic(kernel, lam_grid))

    seeds = [lam_grid[ij] for ij in _local_minima(mag)]
    roots, residuals = [], []
    for seed in seeds:
        root, res = _newton_refine(kernel, seed, chi_tol, max_iter)
        if root is None:
            logger.debug("seed %s dropped: no convergence", seed)
            continue
        if not strip.contains(root):
            continue
        if abs(root) <= ORIGIN_EXCLUSION:
            continue
        if len(z_ell) and np.min(np.abs(z_ell - root)) <= ORIGIN_EXCLUSION:
            continue
        if any(abs(root - r) <= DEDUPE_RADIUS for r in roots):
            continue
        roots.append(root)
        residuals.append(res)

    order = np.argsort([r.imag for r in roots]) if roots else []
    return RootList(
        z_ell=z_ell,
        z_ell_residual=z_ell_res,
        sigma=np.array([roots[i] for i in order], dtype=complex),
        sigma_residual=np.array([residuals[i] for i in order]),
    )


@dataclass
class ConsistencyRow:
    s: float
    norm: float
    dist: float
    ok: bool


@dataclass
class ConsistencyReport:
    rows: list[ConsistencyRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def violations(self) -> list[float]:
        return [r.s for r in self.rows if not r.ok]


def resolvent_spectrum_consistency(
    gen, roots: RootList, s_samples, rel_tol: float = 0.05
) -> ConsistencyReport:
    """Check norm(R(is)) >= (1 - rel_tol)/dist(is, located roots).

    The elementary resolvent bound ties the two independent computations
    (shifted solves on the discrete generator vs. symbol root finding)
    together; a violation names the offending frequency.
    """
    from .resolvent import norm_at

    all_roots = roots.all_roots
    rows = []
    for s in np.atleast_1d(np.asarray(s_samples, dtype=float)):
        norm = norm_at(gen, float(s)).norm
        if len(all_roots):
            dist = float(np.min(np.abs(1j * s - all_roots)))
            ok = norm >= (1.0 - rel_tol) / dist
        else:
            dist = np.inf
            ok = True
        rows.append(ConsistencyRow(s=float(s), norm=norm, dist=dist, ok=ok))
    report = ConsistencyReport(rows=rows)
    if not report.ok:
        logger.warning("resolvent/spectrum inconsistency at s = %s", report.violations)
    return report


def _local_minima(mag: np.ndarray):
    """Indices of strict-or-flat local minima of a 2D array (8-neighbourhood)."""
    padded = np.pad(mag, 1, constant_values=np.inf)
    is_min = np.ones_like(mag, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[
                1 + di : 1 + di + mag.shape[0], 1 + dj : 1 + dj + mag.shape[1]
            ]
            is_min &= mag <= shifted
    return zip(*np.nonzero(is_min))


def _newton_refine(kernel, lam, chi_tol, max_iter):
    """Damped Newton on chi with numerically differenced derivative."""

    def chi(z):
        return characteristic(kernel, z)

    val = chi(lam)
    best, best_res = lam, abs(val)
    for _ in range(max_iter):
        if abs(val) < chi_tol:
            return lam, abs(val)
        h = 1e-7 * (1.0 + abs(lam))
        dval = (chi(lam + h) - chi(lam - h)) / (2.0 * h)
        if dval == 0 or not np.isfinite(dval):
            return None, None
        step = -val / dval
        alpha = 1.0
        moved = False
        for _ in range(10):
            try:
                cand = lam + alpha * step
                cand_val = chi(cand)
            except Exception:
                alpha *= 0.5
                continue
            if abs(cand_val) < abs(val):
                lam, val = cand, cand_val
                moved = True
                break
            alpha *= 0.5
        if not moved:
            break
        if abs(val) < best_res:
            best, best_res = lam, abs(val)
    if best_res < chi_tol:
        return best, best_res
    return None, None

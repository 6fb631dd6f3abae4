"""Energy-norm resolvent machinery for the discrete generator.

norm_at measures ||(is - A)^{-1}|| in the W = F^T F energy norm through the
similarity B = F (is - A)^{-1} F^{-1}: dense SVD up to dimension 2000, an
ARPACK-accelerated power iteration on the normal equations above that.

lower_bound evaluates the closed-form family certifying resolvent growth at
the even wave resonances s = 2 pi n: the resolvent applied to the unit-energy
datum (sin(2 pi n x)/(2 pi n), cos(2 pi n x), 0, 0) has energy at least
sqrt(max(|u_plus|^2 - 1/3, 0)) with u_plus = 1/4 + alpha sigma/(4 tanh sigma),
alpha = ell(2 pi n i), sigma = sqrt(2 pi n i / alpha); |u_plus| grows like
sqrt(2 pi n)/4, hence the square of the bound grows like pi n / 8.

apply_semianalytic solves the shifted equation by the explicit formulas of
the continuous problem (integrating factors in the memory variable, sinh
kernels in space, one 2x2 interface system) using only quadrature on the
operator grids, giving an independent cross-check of the shifted FD solve.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConfigError,
    DiffusivityZeroError,
    NearSpectrumError,
    SingularShiftError,
    WavecgError,
)
from .kernel import MemoryKernel
from .operator import GeneratorMatrix, HistoryGrid, StateVector
from .symbols import complex_diffusivity

logger = logging.getLogger("wavecg.resolvent")

DENSE_SVD_MAX_DIM = 2000
ITER_TOL = 1e-8
DET_REL_TOL = 1e-12


@dataclass(frozen=True)
class ResolventSample:
    s: float
    norm: float
    method: str  # "svd" | "power_iteration"


@dataclass(frozen=True)
class LowerBoundSample:
    n: int
    alpha: complex
    sigma: complex
    u_plus: complex
    bound: float


@dataclass
class ScanResult:
    samples: list[ResolventSample]
    exponent: float  # log-log growth rate fitted over the top decade
    errors: list[tuple[float, str]]


def norm_at(gen: GeneratorMatrix, s: float, method: str | None = None) -> ResolventSample:
    """Operator norm of (is - A)^{-1} in the energy norm.

    Dense SVD when dim <= 2000 unless overridden; otherwise power iteration
    (ARPACK Lanczos on the normal equations) with tolerance 1e-8.
    """
    s = float(s)
    lam = 1j * s
    if method is None:
        method = "svd" if gen.dim <= DENSE_SVD_MAX_DIM else "power_iteration"
    try:
        lu = gen.shifted_lu(lam)
    except RuntimeError as exc:
        raise SingularShiftError(
            f"shift is = {lam} hits the discrete spectrum",
            nearest=_nearest_eigenvalue(gen, lam),
        ) from exc

    if method == "svd":
        kd = (lam * sp.identity(gen.dim, dtype=complex) - gen.A).toarray()
        f_dense = gen.F.toarray()
        finv = gen.energy_factor_lu().solve(np.eye(gen.dim, dtype=complex))
        m = f_dense @ kd @ finv
        smin = la.svdvals(m)[-1]
        if smin < 1e-13 * la.norm(m, 1):
            raise SingularShiftError(
                f"shift is = {lam} is numerically an eigenvalue",
                nearest=_nearest_eigenvalue(gen, lam),
            )
        return ResolventSample(s=s, norm=float(1.0 / smin), method="svd")

    flu = gen.energy_factor_lu()
    f_c = gen.F.astype(complex)

    def mv(x):
        return f_c @ lu.solve(flu.solve(x))

    def rmv(x):
        return flu.solve(lu.solve(f_c.T @ x, trans="H"), trans="T")

    op = spla.LinearOperator((gen.dim, gen.dim), matvec=mv, rmatvec=rmv, dtype=complex)
    v0 = np.ones(gen.dim) / np.sqrt(gen.dim)
    try:
        top = spla.svds(
            op, k=1, which="LM", tol=ITER_TOL, v0=v0, maxiter=8000,
            return_singular_vectors=False,
        )[0]
    except Exception as exc:  # pragma: no cover - ARPACK breakdowns are rare
        raise WavecgError(f"power iteration failed at s = {s}: {exc}") from exc
    if not np.isfinite(top) or top > 1e13:
        raise SingularShiftError(
            f"shift is = {lam} is numerically an eigenvalue",
            nearest=_nearest_eigenvalue(gen, lam),
        )
    return ResolventSample(s=s, norm=float(top), method="power_iteration")


def scan(gen: GeneratorMatrix, s_grid, threads: int = 1) -> ScanResult:
    """norm_at over a sorted frequency grid; per-sample failures are recorded.

    Attaches the growth exponent fitted (least squares, log-log) over the top
    decade of successful sample frequencies.
    """
    s_grid = list(np.atleast_1d(np.asarray(s_grid, dtype=float)))
    samples: list[ResolventSample] = []
    errors: list[tuple[float, str]] = []

    def one(s):
        return norm_at(gen, s)

    if threads > 1 and len(s_grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = list(pool.map(_safe_norm, [gen] * len(s_grid), s_grid))
        for s, (sample, err) in zip(s_grid, futures):
            if sample is not None:
                samples.append(sample)
            else:
                errors.append((s, err))
    else:
        for s in s_grid:
            sample, err = _safe_norm(gen, s)
            if sample is not None:
                samples.append(sample)
            else:
                errors.append((s, err))
    return ScanResult(samples=samples, exponent=growth_exponent(samples), errors=errors)


def _safe_norm(gen, s):
    try:
        return norm_at(gen, s), None
    except WavecgError as exc:
        logger.warning("norm_at failed at s=%s: %s", s, exc)
        return None, str(exc)


def growth_exponent(samples: list[ResolventSample]) -> float:
    """Least-squares slope of log norm vs log s over the top decade of |s|."""
    pts = [(abs(x.s), x.norm) for x in samples if abs(x.s) > 0 and np.isfinite(x.norm)]
    if len(pts) < 2:
        return float("nan")
    smax = max(p[0] for p in pts)
    pts = [p for p in pts if p[0] >= smax / 10.0]
    if len(pts) < 2:
        return float("nan")
    logs = np.log([p[0] for p in pts])
    logn = np.log([p[1] for p in pts])
    design = np.vstack([logs, np.ones_like(logs)]).T
    return float(np.linalg.lstsq(design, logn, rcond=None)[0][0])


def lower_bound(kernel: MemoryKernel, n: int) -> LowerBoundSample:
    """Closed-form certified lower bound for the resolvent norm at s = 2 pi n."""
    if n < 1:
        raise ConfigError("lower bound family is indexed by n >= 1")
    lam = 2j * np.pi * n
    alpha = complex(complex_diffusivity(kernel, lam))
    sigma = complex(np.sqrt(lam / alpha))
    th = complex(np.tanh(sigma))
    if abs(th) < 1e-12:
        raise WavecgError(f"tanh sigma_n degenerate at n = {n}")
    u_plus = 0.25 + alpha * sigma / (4.0 * th)
    bound = float(np.sqrt(max(abs(u_plus) ** 2 - 1.0 / 3.0, 0.0)))
    return LowerBoundSample(n=n, alpha=alpha, sigma=sigma, u_plus=u_plus, bound=bound)


def resonant_datum(gen: GeneratorMatrix, n: int) -> StateVector:
    """Unit-energy wave datum (sin(2 pi n x)/(2 pi n), cos(2 pi n x), 0, 0)."""
    x = gen.x_wave
    two_pi_n = 2.0 * np.pi * n
    u = np.sin(two_pi_n * x) / two_pi_n
    v_nodes = np.cos(two_pi_n * x)
    return StateVector(
        u=u.astype(complex),
        v=v_nodes[:-1].astype(complex),
        c=complex(v_nodes[-1]),
        w=np.zeros(gen.M - 1, dtype=complex),
        eta=np.zeros((gen.n_mem_rows, gen.M), dtype=complex),
    )


# --------------------------------------------------------------- semi-analytic


def apply_semianalytic(
    gen: GeneratorMatrix, lam: complex, zhat: StateVector
) -> StateVector:
    """Resolvent application (lam - A)^{-1} zhat via the explicit formulas.

    Memory data are treated as piecewise constant on history cells and the
    memory convolution is integrated exactly per cell; the output memory
    component holds cell averages.  Spatial integrals use composite Simpson
    chains on the operator nodes; the interface constants solve a 2x2 system
    whose determinant vanishing signals proximity to the spectrum.
    """
    if not isinstance(gen.grid.memory, HistoryGrid):
        raise ConfigError("semi-analytic resolvent needs history-grid memory")
    lam = complex(lam)
    if abs(lam) < 1e-12:
        raise ConfigError("lambda = 0 is excluded from the semi-analytic formulas")
    kernel = gen.kernel
    ell = complex(complex_diffusivity(kernel, lam))
    if abs(ell) < 1e-13:
        raise DiffusivityZeroError("ell(lambda) = 0: shifted problem degenerate")
    q = complex(np.sqrt(lam / ell))

    mem = gen.grid.memory
    s_nodes = mem.s_nodes
    widths = mem.cell_widths
    omega = mem.weights
    n_cells = mem.n_cells
    m_nodes = gen.M  # heat nodes 0..M-1 carry unknowns, node M pinned

    eta_hat = np.asarray(zhat.eta, dtype=complex)
    if eta_hat.shape != (n_cells, m_nodes):
        raise ConfigError("memory data shape mismatch")

    # --- memory convolution, exact per cell for piecewise-constant data
    x_cells = lam * widths
    decay = np.exp(-x_cells)
    p1 = _phi1(x_cells)
    p2 = _phi2(x_cells)
    xi_nodes = np.zeros((n_cells + 1, m_nodes), dtype=complex)
    for k in range(n_cells):
        xi_nodes[k + 1] = decay[k] * xi_nodes[k] + widths[k] * p1[k] * eta_hat[k]
    xi_avg = xi_nodes[:-1] * p1[:, None] + (widths * p2)[:, None] * eta_hat

    rho = (lam / ell) * np.einsum("k,kj->j", omega, xi_avg)  # at heat nodes 0..M-1

    # --- wave side: u = a sinh(lam (x+1)) - U
    n_wave = gen.N
    h_u = gen.h_u
    x_full = -1.0 + h_u * np.arange(0, n_wave + 1)
    u_hat_full = np.concatenate([[0.0], np.asarray(zhat.u, dtype=complex)])
    v_hat_full = np.concatenate(
        [[0.0], np.asarray(zhat.v, dtype=complex), [complex(zhat.c)]]
    )
    f_wave = v_hat_full + lam * u_hat_full
    wq = _chain_weights(n_wave + 1, h_u)
    u_conv = _left_convolution(lam, x_full, f_wave, wq) / lam
    u_conv_x0 = u_conv[-1]
    ux_conv_x0 = complex(wq[-1] @ (np.cosh(lam * (0.0 - x_full)) * f_wave))

    # --- heat side: phi = -b sinh(q(1-x)) - Phi
    h_w = gen.h_w
    y_full = h_w * np.arange(0, m_nodes + 1)
    w_hat_full = np.concatenate(
        [[complex(zhat.c)], np.asarray(zhat.w, dtype=complex), [0.0]]
    )
    rho_full = np.concatenate([rho, [0.0]])
    g_heat = w_hat_full + rho_full
    wq_heat = _chain_weights(m_nodes + 1, h_w)
    phi_conv = _right_convolution(q, y_full, g_heat, wq_heat) / q
    phi_conv_x0 = phi_conv[0]
    phix_conv_x0 = -complex(wq_heat[-1] @ (np.cosh(q * y_full) * g_heat))

    # --- interface constants
    sinh_lam, cosh_lam = np.sinh(lam), np.cosh(lam)
    sinh_q, cosh_q = np.sinh(q), np.cosh(q)
    mtx = np.array(
        [
            [ell * lam * sinh_lam, sinh_q],
            [ell * lam * cosh_lam, -ell * q * cosh_q],
        ],
        dtype=complex,
    )
    rhs = np.array(
        [
            ell * (u_hat_full[-1] + lam * u_conv_x0 - rho[0] / lam) - phi_conv_x0,
            ell * (ux_conv_x0 - phix_conv_x0),
        ],
        dtype=complex,
    )
    det = mtx[0, 0] * mtx[1, 1] - mtx[0, 1] * mtx[1, 0]
    det_scale = abs(mtx[0, 0] * mtx[1, 1]) + abs(mtx[0, 1] * mtx[1, 0])
    if abs(det) < DET_REL_TOL * det_scale:
        raise NearSpectrumError(f"interface system singular at lambda = {lam}")
    a_coef = (rhs[0] * mtx[1, 1] - mtx[0, 1] * rhs[1]) / det
    b_coef = (mtx[0, 0] * rhs[1] - mtx[1, 0] * rhs[0]) / det

    # --- reconstruction on the grid
    u_out = a_coef * np.sinh(lam * (x_full[1:] + 1.0)) - u_conv[1:]
    v_out = lam * u_out[:-1] - u_hat_full[1:-1]
    c_out = lam * u_out[-1] - u_hat_full[-1]

    y_nodes = y_full[:-1]
    phi_out = -b_coef * np.sinh(q * (1.0 - y_nodes)) - phi_conv[:-1]
    w_out = phi_out / ell - rho / lam

    mean_resolvent_factor = _averaged_resolvent_factor(lam, s_nodes, widths, p1)
    eta_out = mean_resolvent_factor[:, None] * w_out[None, :] + xi_avg

    return StateVector(
        u=u_out,
        v=v_out,
        c=complex(c_out),
        w=w_out[1:],
        eta=eta_out,
    )


def semianalytic_mismatch(gen: GeneratorMatrix, lam: complex, zhat: StateVector):
    """W-relative gap between the semi-analytic and the direct shifted solve."""
    rhs = gen.pack(zhat)
    direct = gen.shifted_lu(complex(lam)).solve(rhs)
    semi = gen.pack(apply_semianalytic(gen, lam, zhat))
    denom = gen.energy_norm(direct)
    return gen.energy_norm(semi - direct) / denom, direct, semi


# ------------------------------------------------------------------ internals


def _phi1(x):
    """(1 - e^{-x})/x elementwise, stable near 0 (-> 1)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-5
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs**2 / 6.0 - xs**3 / 24.0
    xl = x[~small]
    out[~small] = (1.0 - np.exp(-xl)) / xl
    return out


def _phi2(x):
    """(x - 1 + e^{-x})/x^2 elementwise, stable near 0 (-> 1/2)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = 0.5 - xs / 6.0 + xs**2 / 24.0 - xs**3 / 120.0
    xl = x[~small]
    out[~small] = (xl - 1.0 + np.exp(-xl)) / xl**2
    return out


def _averaged_resolvent_factor(lam, s_nodes, widths, p1_cells):
    """Cell averages of (1 - e^{-lam s})/lam over the history cells."""
    s_prev = np.concatenate([[0.0], s_nodes[:-1]])
    big = np.abs(lam) * np.abs(s_nodes) >= 1e-4
    out = np.empty(len(s_nodes), dtype=complex)
    exp_prev = np.exp(-lam * s_prev[big])
    out[big] = (1.0 - exp_prev * p1_cells[big]) / lam
    if np.any(~big):
        s0 = s_prev[~big]
        s1 = s_nodes[~big]
        d = widths[~big]
        mean_s = 0.5 * (s0 + s1)
        mean_s2 = (s1**3 - s0**3) / (3.0 * d)
        mean_s3 = (s1**4 - s0**4) / (4.0 * d)
        out[~big] = mean_s - lam * mean_s2 / 2.0 + lam**2 * mean_s3 / 6.0
    return out


def _chain_weights(n_nodes: int, h: float) -> np.ndarray:
    """Rows i: composite quadrature weights for int over the first i intervals.

    Simpson where the interval count is even, Simpson + 3/8 block for odd
    counts >= 3, trapezoid for a single interval.  Row 0 is zero.
    """
    w = np.zeros((n_nodes, n_nodes))
    for i in range(1, n_nodes):
        if i == 1:
            w[1, 0:2] = [0.5, 0.5]
        elif i == 2:
            w[2, 0:3] = np.array([1.0, 4.0, 1.0]) / 3.0
        elif i % 2 == 0:
            row = np.zeros(i + 1)
            row[0] = row[-1] = 1.0 / 3.0
            row[1:-1:2] = 4.0 / 3.0
            row[2:-1:2] = 2.0 / 3.0
            w[i, : i + 1] = row
        elif i == 3:
            w[3, 0:4] = np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
        else:
            row = np.zeros(i + 1)
            head = i - 3
            row[0] = row[head] = 1.0 / 3.0
            row[1:head:2] = 4.0 / 3.0
            row[2:head:2] = 2.0 / 3.0
            row[head] += 3.0 / 8.0
            row[head + 1 : i + 1] = [9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0]
            w[i, : i + 1] = row
    return w * h


def _left_convolution(lam, nodes, f, weights, chunk: int = 512):
    """rows i: int_{x_0}^{x_i} sinh(lam (x_i - r)) f(r) dr on the node chain."""
    n = len(nodes)
    out = np.empty(n, dtype=complex)
    fw = weights * f[None, :]
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        kernel_blk = np.sinh(lam * (nodes[lo:hi, None] - nodes[None, :]))
        out[lo:hi] = np.einsum("ij,ij->i", fw[lo:hi], kernel_blk)
    return out


def _right_convolution(q, nodes, g, weights, chunk: int = 512):
    """rows j: int_{x_j}^{x_end} sinh(q (r - x_j)) g(r) dr on the node chain."""
    n = len(nodes)
    out = np.empty(n, dtype=complex)
    # mirrored chain: row j integrates over the last n-1-j intervals, so the
    # left-anchored weight table applies with both axes reversed
    gw = weights[::-1, ::-1] * g[None, :]
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        kernel_blk = np.sinh(q * (nodes[None, :] - nodes[lo:hi, None]))
        out[lo:hi] = np.einsum("ij,ij->i", gw[lo:hi], kernel_blk)
    return out


def _nearest_eigenvalue(gen: GeneratorMatrix, lam: complex):
    """Best-effort location of the eigenvalue closest to a singular shift."""
    try:
        probe = lam * (1.0 + 1e-7) + 1e-7
        vals = spla.eigs(
            gen.A.astype(complex), k=1, sigma=probe, return_eigenvectors=False
        )
        return complex(vals[0])
    except Exception:  # pragma: no cover - diagnostic only
        return None

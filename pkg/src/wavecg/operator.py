"""Finite-difference generator of the coupled wave / memory-diffusion system.

State layout (history memory, J cells, wave step h_u = 1/(n_u+1), heat step
h_w = 1/(n_w+1), N = n_u+1, M = n_w+1):

    u_1..u_N        displacement at interior wave nodes and at the interface
                    (u at x=-1 is pinned to 0)
    v_1..v_{N-1}    velocity at interior wave nodes
    c               shared interface value: v at x=0 == w at x=0
    w_1..w_{M-1}    temperature at interior heat nodes (w at x=1 pinned to 0)
    eta[k, j]       integrated history, k = 1..J memory cells, j = 0..M-1
                    heat nodes (eta at x=1 pinned to 0)

Dynamics: second-order central differences for u_xx and phi_xx with
phi = w + sum_k omega_k eta_k (omega_k = integral of mu over cell k),
first-order upwind transport in the memory variable with zero inflow at
s=0, and a conservative half-cell flux balance at the interface,

    (h_u + h_w)/2 * dc/dt = (phi_1 - phi_0)/h_w - (u_N - u_{N-1})/h_u,

which is what ghost-point elimination with central through-interface
stencils plus matching accelerations produces.  With the energy Gram matrix
W = F^T F below, Re <A z, z>_W = -|w|_{H1}^2 + (upwind transport term) <= 0
holds exactly on the whole discrete space because the per-cell averages of
mu are non-increasing; assembly verifies this on random states.

The energy factor F stacks the difference quotients defining the discrete
norm: H1 quotients for u, lumped L2 masses for v, c and w, and
sqrt(omega_k) * H1 quotients for each memory cell.  Any factor with
F^T F = W gives the same W-operator norms as a Cholesky factor.

Mode-reduced memory (zeta_k' = -b_k zeta_k + (a_k/b_k) w, phi = w + sum
zeta_k) is exact for exponential-sum kernels and is intended for fast
(u, v, w) trajectories only: its Gram weights (b_k/a_k) H1(zeta_k) make the
scheme contractive but are not the history-space energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, ConfigError
from .kernel import MemoryKernel

DISSIPATIVITY_EPS = 1e-10
_CHOLESKY_CHECK_DIM = 600


@dataclass(frozen=True)
class HistoryGrid:
    """Geometric memory grid 0 < s_1 < ... < s_J with exact per-cell mu masses."""

    s_nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if s.ndim != 1 or len(s) == 0 or np.any(np.diff(s) <= 0) or s[0] <= 0:
            raise ConfigError("history nodes must be strictly increasing and positive")
        if len(w) != len(s) or np.any(w <= 0):
            raise ConfigError("history weights must be positive, one per cell")
        object.__setattr__(self, "s_nodes", s)
        object.__setattr__(self, "weights", w)

    @property
    def n_cells(self) -> int:
        return len(self.s_nodes)

    @property
    def cell_widths(self) -> np.ndarray:
        return np.diff(self.s_nodes, prepend=0.0)


@dataclass(frozen=True)
class ModeReduction:
    """Marker: represent the memory by one auxiliary field per kernel mode."""


def history_grid(
    kernel: MemoryKernel,
    ratio: float = 1.15,
    s1: float | None = None,
    tail_tol: float = 1e-8,
) -> HistoryGrid:
    """Geometric grid s_k = s1 * ratio**(k-1), truncated when g(s_k) <= tail_tol.

    Weights are the exact cell masses g(s_{k-1}) - g(s_k), so the total
    retained mass is kappa - g(S_max).  Their cell averages inherit the
    monotonicity of mu, which is what the upwind transport needs.
    """
    if ratio <= 1.0:
        raise ConfigError("history ratio must exceed 1")
    if s1 is None:
        s1 = 0.01 / kernel.delta
    if s1 <= 0:
        raise ConfigError("first history node must be positive")
    nodes = [s1]
    while kernel.g(nodes[-1]) > tail_tol:
        nodes.append(nodes[-1] * ratio)
        if len(nodes) > 100000:
            raise ConfigError("history grid did not reach the tail tolerance")
    s = np.array(nodes)
    g_vals = kernel.g(s)
    weights = np.concatenate([[kernel.kappa - g_vals[0]], g_vals[:-1] - g_vals[1:]])
    return HistoryGrid(s_nodes=s, weights=weights)


@dataclass(frozen=True)
class GridSpec:
    """Spatial resolution plus the memory representation."""

    n_u: int
    n_w: int
    memory: HistoryGrid | ModeReduction

    def __post_init__(self):
        if self.n_u < 8 or self.n_w < 8:
            raise ConfigError("need at least 8 interior nodes per segment")


def default_grid(
    kernel: MemoryKernel,
    n_u: int = 128,
    n_w: int = 128,
    ratio: float = 1.15,
    s1: float | None = None,
    tail_tol: float = 1e-8,
) -> GridSpec:
    return GridSpec(n_u=n_u, n_w=n_w, memory=history_grid(kernel, ratio, s1, tail_tol))


@dataclass
class StateVector:
    """Discrete state (u, v, c, w, eta); eta rows are memory cells (or modes)."""

    u: np.ndarray
    v: np.ndarray
    c: complex
    w: np.ndarray
    eta: np.ndarray


class GeneratorMatrix:
    """Assembled generator A with its energy Gram matrix W = F^T F.

    Immutable after assembly apart from internal factorization caches; safe
    to share across threads for frequency scans.
    """

    def __init__(self, A, F, kernel, grid, blocks, label):
        self.A = A.tocsr()
        self.F = F.tocsc()
        self.kernel = kernel
        self.grid = grid
        self.blocks = blocks  # dict name -> slice into the flat state
        self.label = label
        self.dim = A.shape[0]
        self._flu = None
        self._shift_cache = {}
        self._cn_cache = {}

    # -- norms ---------------------------------------------------------------

    @property
    def W(self):
        return (self.F.T @ self.F).tocsr()

    def energy_factor_lu(self):
        if self._flu is None:
            self._flu = spla.splu(self.F.astype(complex))
        return self._flu

    def energy_norm(self, vec: np.ndarray) -> float:
        return float(np.linalg.norm(self.F @ vec))

    def w_inner(self, x: np.ndarray, y: np.ndarray) -> complex:
        return complex(np.vdot(self.F @ y, self.F @ x))

    # -- factorizations ------------------------------------------------------

    def shifted_lu(self, lam: complex):
        """Cached sparse LU of (lam I - A)."""
        key = complex(lam)
        if key not in self._shift_cache:
            shifted = (
                sp.identity(self.dim, format="csc", dtype=complex) * key
                - self.A.astype(complex).tocsc()
            )
            if len(self._shift_cache) > 8:
                self._shift_cache.clear()
            self._shift_cache[key] = spla.splu(shifted)
        return self._shift_cache[key]

    # -- state packing -------------------------------------------------------

    def unpack(self, vec: np.ndarray) -> StateVector:
        b = self.blocks
        n_mem = self.n_mem_rows
        m = self.M
        return StateVector(
            u=vec[b["u"]].copy(),
            v=vec[b["v"]].copy(),
            c=complex(vec[b["c"]][0]),
            w=vec[b["w"]].copy(),
            eta=vec[b["eta"]].reshape(n_mem, m).copy(),
        )

    def pack(self, sv: StateVector) -> np.ndarray:
        b = self.blocks
        out = np.empty(self.dim, dtype=complex)
        if len(sv.u) != self.N or len(sv.w) != self.M - 1:
            raise ConfigError("state shapes do not match the grid")
        if sv.eta.shape != (self.n_mem_rows, self.M):
            raise ConfigError("memory block shape mismatch")
        out[b["u"]] = sv.u
        out[b["v"]] = sv.v
        out[b["c"]] = sv.c
        out[b["w"]] = sv.w
        out[b["eta"]] = sv.eta.ravel()
        return out

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.dim, dtype=complex)

    # -- geometry helpers ----------------------------------------------------

    @property
    def N(self) -> int:
        return self.blocks["u"].stop - self.blocks["u"].start

    @property
    def M(self) -> int:
        return len(range(*self.blocks["w"].indices(self.dim))) + 1

    @property
    def n_mem_rows(self) -> int:
        eta = self.blocks["eta"]
        return (eta.stop - eta.start) // self.M

    @property
    def h_u(self) -> float:
        return 1.0 / self.N

    @property
    def h_w(self) -> float:
        return 1.0 / self.M

    @property
    def x_wave(self) -> np.ndarray:
        """Wave node coordinates for u (x_1..x_N, x_N = 0 is the interface)."""
        return -1.0 + self.h_u * np.arange(1, self.N + 1)

    @property
    def y_heat(self) -> np.ndarray:
        """Heat node coordinates y_0..y_{M-1} (y_0 = 0 is the interface)."""
        return self.h_w * np.arange(0, self.M)


def assemble(
    kernel: MemoryKernel, grid: GridSpec, verify: bool = True
) -> GeneratorMatrix:
    """Build the coupled generator and its energy factor; self-check structure."""
    N = grid.n_u + 1
    M = grid.n_w + 1
    h_u = 1.0 / N
    h_w = 1.0 / M
    if isinstance(grid.memory, HistoryGrid):
        mem_weights = grid.memory.weights
        phi_weights = mem_weights
        n_mem = grid.memory.n_cells
    elif isinstance(grid.memory, ModeReduction):
        n_mem = len(kernel.modes)
        mem_weights = None
        phi_weights = np.ones(n_mem)
    else:
        raise ConfigError("unknown memory representation")

    blocks = _layout(N, M, n_mem)
    dim = blocks["eta"].stop

    idx_u = lambda i: i - 1  # i = 1..N
    idx_v = lambda i: N + i - 1  # i = 1..N-1
    idx_c = 2 * N - 1
    idx_w = lambda j: 2 * N + j - 1  # j = 1..M-1
    idx_eta = lambda k, j: 2 * N + (M - 1) + k * M + j  # k = 0..n_mem-1, j = 0..M-1

    def phi_terms(j):
        """phi_j = w_j + sum_k phi_weights[k] eta[k, j] as (index, coef) pairs."""
        if j == M:
            return []
        base = [(idx_c, 1.0)] if j == 0 else [(idx_w(j), 1.0)]
        base += [(idx_eta(k, j), phi_weights[k]) for k in range(n_mem)]
        return base

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # u' = v (interface u follows the shared value c)
    for i in range(1, N):
        add(idx_u(i), idx_v(i), 1.0)
    add(idx_u(N), idx_c, 1.0)

    # v' = u_xx at interior wave nodes (u_0 = 0)
    inv_h2u = 1.0 / h_u**2
    for i in range(1, N):
        add(idx_v(i), idx_u(i), -2.0 * inv_h2u)
        if i > 1:
            add(idx_v(i), idx_u(i - 1), inv_h2u)
        add(idx_v(i), idx_u(i + 1), inv_h2u)

    # interface flux balance for the shared value c
    m_c = 0.5 * (h_u + h_w)
    add(idx_c, idx_u(N), -1.0 / (h_u * m_c))
    add(idx_c, idx_u(N - 1), 1.0 / (h_u * m_c))
    for col, coef in phi_terms(1):
        add(idx_c, col, coef / (h_w * m_c))
    for col, coef in phi_terms(0):
        add(idx_c, col, -coef / (h_w * m_c))

    # w' = phi_xx at interior heat nodes (phi_M = 0)
    inv_h2w = 1.0 / h_w**2
    for j in range(1, M):
        for jj, stencil in ((j - 1, 1.0), (j, -2.0), (j + 1, 1.0)):
            for col, coef in phi_terms(jj):
                add(idx_w(j), col, stencil * coef * inv_h2w)

    # memory dynamics
    if mem_weights is not None:
        widths = grid.memory.cell_widths
        for k in range(n_mem):
            inv_dk = 1.0 / widths[k]
            for j in range(M):
                add(idx_eta(k, j), idx_eta(k, j), -inv_dk)
                if k > 0:
                    add(idx_eta(k, j), idx_eta(k - 1, j), inv_dk)
                add(idx_eta(k, j), idx_c if j == 0 else idx_w(j), 1.0)
    else:
        a = kernel.amplitudes
        b = kernel.rates
        for k in range(n_mem):
            for j in range(M):
                add(idx_eta(k, j), idx_eta(k, j), -b[k])
                add(idx_eta(k, j), idx_c if j == 0 else idx_w(j), a[k] / b[k])

    A = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()

    # energy factor: rows are the difference quotients / lumped masses
    frows, fcols, fvals = [], [], []

    def fadd(r, c, v):
        frows.append(r)
        fcols.append(c)
        fvals.append(v)

    r = 0
    inv_sqrt_hu = 1.0 / np.sqrt(h_u)
    for i in range(1, N + 1):
        fadd(r, idx_u(i), inv_sqrt_hu)
        if i > 1:
            fadd(r, idx_u(i - 1), -inv_sqrt_hu)
        r += 1
    for i in range(1, N):
        fadd(r, idx_v(i), np.sqrt(h_u))
        r += 1
    fadd(r, idx_c, np.sqrt(m_c))
    r += 1
    for j in range(1, M):
        fadd(r, idx_w(j), np.sqrt(h_w))
        r += 1
    if mem_weights is not None:
        mem_scale = np.sqrt(mem_weights / h_w)
    else:
        mem_scale = np.sqrt(kernel.rates / (kernel.amplitudes * h_w))
    for k in range(n_mem):
        sc = mem_scale[k]
        for j in range(1, M):
            fadd(r, idx_eta(k, j), sc)
            fadd(r, idx_eta(k, j - 1), -sc)
            r += 1
        fadd(r, idx_eta(k, M - 1), -sc)
        r += 1
    if r != dim:
        raise AssemblyError("energy factor row count mismatch")
    F = sp.coo_matrix((fvals, (frows, fcols)), shape=(dim, dim)).tocsc()

    label = "history" if mem_weights is not None else "modes"
    gen = GeneratorMatrix(A, F, kernel, grid, blocks, label)
    if verify:
        _verify_structure(gen)
    return gen


def wave_block(gen: GeneratorMatrix) -> "GeneratorMatrix":
    """Decoupled wave sub-operator (interface velocity pinned to zero).

    Skew-adjoint in its W inner product; spectrum approaches {i k pi}.
    Reuses the GeneratorMatrix container with blocks u, v and empty c/w/eta.
    """
    N = gen.N
    h_u = gen.h_u
    dim = 2 * N - 1
    idx_u = lambda i: i - 1
    idx_v = lambda i: N + i - 1
    rows, cols, vals = [], [], []
    for i in range(1, N):
        rows.append(idx_u(i)), cols.append(idx_v(i)), vals.append(1.0)
    inv_h2 = 1.0 / h_u**2
    for i in range(1, N):
        rows.append(idx_v(i)), cols.append(idx_u(i)), vals.append(-2.0 * inv_h2)
        if i > 1:
            rows.append(idx_v(i)), cols.append(idx_u(i - 1)), vals.append(inv_h2)
        rows.append(idx_v(i)), cols.append(idx_u(i + 1)), vals.append(inv_h2)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))

    frows, fcols, fvals = [], [], []
    r = 0
    inv_sqrt_hu = 1.0 / np.sqrt(h_u)
    for i in range(1, N + 1):
        frows.append(r), fcols.append(idx_u(i)), fvals.append(inv_sqrt_hu)
        if i > 1:
            frows.append(r), fcols.append(idx_u(i - 1)), fvals.append(-inv_sqrt_hu)
        r += 1
    for i in range(1, N):
        frows.append(r), fcols.append(idx_v(i)), fvals.append(np.sqrt(h_u))
        r += 1
    F = sp.coo_matrix((fvals, (frows, fcols)), shape=(dim, dim))

    blocks = {
        "u": slice(0, N),
        "v": slice(N, 2 * N - 1),
        "c": slice(dim, dim),
        "w": slice(dim, dim),
        "eta": slice(dim, dim),
    }
    return GeneratorMatrix(A, F, gen.kernel, gen.grid, blocks, "wave")


def heat_block(gen: GeneratorMatrix) -> "GeneratorMatrix":
    """Decoupled memory-diffusion sub-operator with zero flux at the interface.

    State: w at heat nodes 0..M-1 (node 0 carries the former shared value)
    plus the full memory block.  The Neumann condition phi_x(0) = 0 enters
    through a symmetric ghost, w_0' = 2 (phi_1 - phi_0)/h^2.
    """
    if gen.label != "history":
        raise ConfigError("heat_block requires history-grid memory (energy norm)")
    kernel = gen.kernel
    grid = gen.grid
    M = gen.M
    h_w = gen.h_w
    weights = grid.memory.weights
    widths = grid.memory.cell_widths
    n_mem = grid.memory.n_cells
    dim = M + n_mem * M

    idx_w = lambda j: j  # j = 0..M-1
    idx_eta = lambda k, j: M + k * M + j

    def phi_terms(j):
        if j == M:
            return []
        return [(idx_w(j), 1.0)] + [(idx_eta(k, j), weights[k]) for k in range(n_mem)]

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r), cols.append(c), vals.append(v)

    inv_h2 = 1.0 / h_w**2
    for col, coef in phi_terms(1):
        add(idx_w(0), col, 2.0 * coef * inv_h2)
    for col, coef in phi_terms(0):
        add(idx_w(0), col, -2.0 * coef * inv_h2)
    for j in range(1, M):
        for jj, stencil in ((j - 1, 1.0), (j, -2.0), (j + 1, 1.0)):
            for col, coef in phi_terms(jj):
                add(idx_w(j), col, stencil * coef * inv_h2)
    for k in range(n_mem):
        inv_dk = 1.0 / widths[k]
        for j in range(M):
            add(idx_eta(k, j), idx_eta(k, j), -inv_dk)
            if k > 0:
                add(idx_eta(k, j), idx_eta(k - 1, j), inv_dk)
            add(idx_eta(k, j), idx_w(j), 1.0)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))

    frows, fcols, fvals = [], [], []
    r = 0
    fvals.append(np.sqrt(0.5 * h_w)), frows.append(r), fcols.append(idx_w(0))
    r += 1
    for j in range(1, M):
        frows.append(r), fcols.append(idx_w(j)), fvals.append(np.sqrt(h_w))
        r += 1
    mem_scale = np.sqrt(weights / h_w)
    for k in range(n_mem):
        sc = mem_scale[k]
        for j in range(1, M):
            frows.append(r), fcols.append(idx_eta(k, j)), fvals.append(sc)
            frows.append(r), fcols.append(idx_eta(k, j - 1)), fvals.append(-sc)
            r += 1
        frows.append(r), fcols.append(idx_eta(k, M - 1)), fvals.append(-sc)
        r += 1
    if r != dim:
        raise AssemblyError("heat block energy factor row count mismatch")
    F = sp.coo_matrix((fvals, (frows, fcols)), shape=(dim, dim))

    blocks = {
        "u": slice(0, 0),
        "v": slice(0, 0),
        "c": slice(0, 1),  # node-0 temperature doubles as the boundary trace
        "w": slice(1, M),
        "eta": slice(M, dim),
    }
    out = GeneratorMatrix(A, F, kernel, grid, blocks, "heat")
    _verify_structure(out)
    return out


def flux_constraint_vector(gen: GeneratorMatrix) -> np.ndarray:
    """Row vector g with g . z = u_x(0) - phi_x(0), second-order one-sided stencils.

    Discrete membership in the generator domain asks for g . z = 0; this is a
    constraint on states, not part of the evolution matrix.
    """
    if gen.label != "history" and gen.label != "modes":
        raise ConfigError("flux constraint defined for the coupled operator only")
    N, M = gen.N, gen.M
    h_u, h_w = gen.h_u, gen.h_w
    if isinstance(gen.grid.memory, HistoryGrid):
        phi_weights = gen.grid.memory.weights
    else:
        phi_weights = np.ones(len(gen.kernel.modes))
    g = np.zeros(gen.dim)
    b = gen.blocks
    u0 = b["u"].start
    g[u0 + N - 1] += 3.0 / (2.0 * h_u)
    g[u0 + N - 2] += -4.0 / (2.0 * h_u)
    g[u0 + N - 3] += 1.0 / (2.0 * h_u)

    def phi_cols(j):
        if j == 0:
            cols = [(b["c"].start, 1.0)]
        else:
            cols = [(b["w"].start + j - 1, 1.0)]
        cols += [
            (b["eta"].start + k * M + j, phi_weights[k]) for k in range(gen.n_mem_rows)
        ]
        return cols

    for j, stencil in ((0, -3.0), (1, 4.0), (2, -1.0)):
        for col, coef in phi_cols(j):
            g[col] -= stencil * coef / (2.0 * h_w)
    return g


def domain_project(gen: GeneratorMatrix, raw) -> StateVector:
    """W-orthogonal projection onto the discrete flux-matching constraint.

    The shared-node layout enforces v(0) = w(0) structurally; the remaining
    interface condition u_x(0) = phi_x(0) is imposed here.  Idempotent.
    """
    vec = raw if isinstance(raw, np.ndarray) else gen.pack(raw)
    if vec.shape != (gen.dim,):
        raise ConfigError("state vector has wrong length for this operator")
    g = flux_constraint_vector(gen)
    flu = gen.energy_factor_lu()
    winv_g = flu.solve(flu.solve(g.astype(complex), trans="T"))
    corr = (g @ vec) / (g @ winv_g)
    projected = vec - corr * winv_g
    return gen.unpack(projected)


def export_matrix(mat, path):
    """Write a sparse matrix as text lines 'row col real imag' (0-based)."""
    coo = sp.coo_matrix(mat)
    with open(path, "w") as fh:
        fh.write("# sparse matrix, 0-based indices: row col re im\n")
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            v = complex(v)
            fh.write(f"{r} {c} {v.real!r} {v.imag!r}\n")


def _layout(N, M, n_mem):
    return {
        "u": slice(0, N),
        "v": slice(N, 2 * N - 1),
        "c": slice(2 * N - 1, 2 * N),
        "w": slice(2 * N, 2 * N + M - 1),
        "eta": slice(2 * N + M - 1, 2 * N + M - 1 + n_mem * M),
    }


def _verify_structure(gen: GeneratorMatrix):
    """Assembly self-checks: SPD energy matrix and discrete dissipativity."""
    # F must be nonsingular (then W = F^T F is SPD); its LU diagonal tells us
    flu = spla.splu(gen.F.astype(float))
    diag_u = flu.U.diagonal()
    if np.any(np.abs(diag_u) < 1e-14):
        raise AssemblyError("energy factor is singular; W would not be SPD")
    if gen.dim <= _CHOLESKY_CHECK_DIM:
        try:
            np.linalg.cholesky(gen.W.toarray())
        except np.linalg.LinAlgError as exc:  # pragma: no cover - structural bug
            raise AssemblyError("Cholesky of W failed") from exc
    rng = np.random.default_rng(1234)
    for _ in range(3):
        z = rng.standard_normal(gen.dim) + 1j * rng.standard_normal(gen.dim)
        fz = gen.F @ z
        num = np.real(np.vdot(fz, gen.F @ (gen.A @ z)))
        den = np.real(np.vdot(fz, fz))
        if num > DISSIPATIVITY_EPS * den:
            raise AssemblyError(
                f"dissipativity violated: Re<Az,z>_W = {num / den:.3e} * |z|_W^2 > 0"
            )

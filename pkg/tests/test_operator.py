import numpy as np
import pytest
import scipy.sparse.linalg as spla

from wavecg.errors import ConfigError
from wavecg.kernel import unit_exponential
from wavecg.operator import (
    GridSpec,
    HistoryGrid,
    ModeReduction,
    StateVector,
    assemble,
    default_grid,
    domain_project,
    export_matrix,
    flux_constraint_vector,
    heat_block,
    history_grid,
    wave_block,
)


@pytest.fixture(scope="module")
def small_gen(unit_kernel):
    return assemble(unit_kernel, default_grid(unit_kernel, n_u=32, n_w=32))


@pytest.fixture(scope="module")
def medium_gen(unit_kernel):
    return assemble(unit_kernel, default_grid(unit_kernel, n_u=96, n_w=96))


def random_states(gen, rng, count):
    for _ in range(count):
        z = rng.standard_normal(gen.dim) + 1j * rng.standard_normal(gen.dim)
        yield z


# ----------------------------------------------------------------- history grid


def test_history_grid_nodes_and_tail(unit_kernel):
    hg = history_grid(unit_kernel, ratio=1.15, tail_tol=1e-8)
    assert hg.s_nodes[0] == pytest.approx(0.01)
    assert unit_kernel.g(hg.s_nodes[-1]) <= 1e-8
    assert np.all(np.diff(hg.s_nodes) > 0)


def test_history_grid_weights_are_cell_masses(unit_kernel):
    hg = history_grid(unit_kernel, ratio=1.2)
    # independent check: quadrature of mu over two sample cells
    from scipy.integrate import quad

    for k in (0, 7):
        lo = 0.0 if k == 0 else hg.s_nodes[k - 1]
        val = quad(lambda s: unit_kernel.mu(s), lo, hg.s_nodes[k], limit=200)[0]
        assert hg.weights[k] == pytest.approx(val, rel=1e-10)
    assert np.sum(hg.weights) <= unit_kernel.kappa + 1e-14
    assert np.all(hg.weights > 0)


def test_history_grid_cell_averages_nonincreasing(two_mode_kernel):
    hg = history_grid(two_mode_kernel, ratio=1.3)
    avg = hg.weights / hg.cell_widths
    assert np.all(np.diff(avg) <= 1e-14)


def test_grid_spec_rejects_tiny(unit_kernel):
    with pytest.raises(ConfigError):
        GridSpec(n_u=4, n_w=32, memory=history_grid(unit_kernel))


# -------------------------------------------------------------------- assembly


def test_dimensions_and_blocks(small_gen):
    n = 33  # n_u + 1
    m = 33  # n_w + 1
    j = small_gen.grid.memory.n_cells
    assert small_gen.dim == 2 * n + (m - 1) + j * m
    assert small_gen.N == n and small_gen.M == m and small_gen.n_mem_rows == j


def test_zero_state_maps_to_zero(small_gen):
    assert np.linalg.norm(small_gen.A @ small_gen.zero_state()) == 0.0


def test_gram_matrix_spd(small_gen):
    w = small_gen.W.toarray()
    assert np.allclose(w, w.T, atol=1e-14)
    np.linalg.cholesky(w)  # raises if not SPD


def test_energy_factor_consistent_with_gram(small_gen, rng):
    z = rng.standard_normal(small_gen.dim) + 1j * rng.standard_normal(small_gen.dim)
    via_f = small_gen.energy_norm(z) ** 2
    via_w = np.real(np.vdot(z, small_gen.W @ z))
    assert via_f == pytest.approx(via_w, rel=1e-12)


def test_dissipativity_random_states(medium_gen, rng):
    for z in random_states(medium_gen, rng, 100):
        fz = medium_gen.F @ z
        num = np.real(np.vdot(fz, medium_gen.F @ (medium_gen.A @ z)))
        assert num <= 1e-10 * np.real(np.vdot(fz, fz))


def test_pack_unpack_roundtrip(small_gen, rng):
    z = rng.standard_normal(small_gen.dim) + 1j * rng.standard_normal(small_gen.dim)
    sv = small_gen.unpack(z)
    assert isinstance(sv, StateVector)
    assert np.allclose(small_gen.pack(sv), z)


def test_mode_reduction_assembles_and_dissipates(unit_kernel, rng):
    grid = GridSpec(n_u=24, n_w=24, memory=ModeReduction())
    gen = assemble(unit_kernel, grid)
    assert gen.n_mem_rows == len(unit_kernel.modes)
    for z in random_states(gen, rng, 20):
        fz = gen.F @ z
        assert np.real(np.vdot(fz, gen.F @ (gen.A @ z))) <= 1e-10 * np.vdot(
            fz, fz
        ).real


def test_mode_and_history_trajectories_agree(unit_kernel):
    # same smooth (u, v, w) data; zero memory: the two memory representations
    # must produce nearby physical trajectories over a short horizon
    from wavecg.evolve import step_cn

    g_hist = assemble(unit_kernel, default_grid(unit_kernel, n_u=48, n_w=48, ratio=1.05))
    g_mode = assemble(unit_kernel, GridSpec(n_u=48, n_w=48, memory=ModeReduction()))
    x = g_hist.x_wave
    y = g_hist.y_heat
    u = np.sin(np.pi * (x + 1.0)) * 0.3
    vfull = 0.2 * np.cos(np.pi * (x + 1.0) / 2.0)
    w = 0.7 * (1.0 - y)
    sv_h = StateVector(
        u=u.astype(complex),
        v=vfull[:-1].astype(complex),
        c=complex(vfull[-1]),
        w=w[1:].astype(complex),
        eta=np.zeros((g_hist.n_mem_rows, g_hist.M), dtype=complex),
    )
    sv_m = StateVector(
        u=sv_h.u.copy(),
        v=sv_h.v.copy(),
        c=sv_h.c,
        w=sv_h.w.copy(),
        eta=np.zeros((g_mode.n_mem_rows, g_mode.M), dtype=complex),
    )
    zh, zm = g_hist.pack(sv_h), g_mode.pack(sv_m)
    dt = 0.002
    for _ in range(250):
        zh = step_cn(g_hist, zh, dt)
        zm = step_cn(g_mode, zm, dt)
    uh, um = g_hist.unpack(zh), g_mode.unpack(zm)
    scale = np.max(np.abs(uh.u))
    assert np.max(np.abs(uh.u - um.u)) < 2e-3 * scale
    assert np.max(np.abs(uh.w - um.w)) < 2e-3 * scale


# ------------------------------------------------------------------ sub-blocks


def test_wave_block_skew_adjoint(medium_gen, rng):
    wb = wave_block(medium_gen)
    for _ in range(20):
        z = rng.standard_normal(wb.dim) + 1j * rng.standard_normal(wb.dim)
        y = rng.standard_normal(wb.dim) + 1j * rng.standard_normal(wb.dim)
        fz, fy = wb.F @ z, wb.F @ y
        lhs = np.vdot(fy, wb.F @ (wb.A @ z))
        rhs = -np.vdot(wb.F @ (wb.A @ y), fz)
        scale = np.linalg.norm(fz) * np.linalg.norm(fy)
        assert abs(lhs - rhs) <= 1e-10 * scale


def test_wave_block_eigenvalues_converge_to_resonances(unit_kernel):
    # dense eigensolve at two resolutions; errors to i*k*pi shrink ~4x
    errs = {}
    for n_u in (32, 64):
        gen = assemble(unit_kernel, default_grid(unit_kernel, n_u=n_u, n_w=16, ratio=1.5))
        wb = wave_block(gen)
        vals = np.linalg.eigvals(wb.A.toarray())
        errs[n_u] = [
            np.min(np.abs(vals - 1j * np.pi * k_res)) for k_res in (1.0, 2.0)
        ]
        assert np.min(np.abs(vals)) < 1e-10  # rigid mode (x+1, 0)
    for k_i in range(2):
        assert errs[64][k_i] < 0.3 * errs[32][k_i]


def test_heat_block_dissipative_and_invertible(small_gen, rng):
    hb = heat_block(small_gen)
    for z in random_states(hb, rng, 20):
        fz = hb.F @ z
        assert np.real(np.vdot(fz, hb.F @ (hb.A @ z))) <= 1e-10 * np.vdot(fz, fz).real
    lu = spla.splu(hb.A.astype(complex).tocsc())
    r = rng.standard_normal(hb.dim)
    x = lu.solve(r.astype(complex))
    assert np.linalg.norm(hb.A @ x - r) < 1e-8 * np.linalg.norm(r)


def test_heat_block_rejects_mode_memory(unit_kernel):
    gen = assemble(unit_kernel, GridSpec(n_u=24, n_w=24, memory=ModeReduction()))
    with pytest.raises(ConfigError):
        heat_block(gen)


# ------------------------------------------------------------- domain projection


def test_domain_project_idempotent_and_conforming(small_gen, rng):
    z = rng.standard_normal(small_gen.dim) + 1j * rng.standard_normal(small_gen.dim)
    proj = small_gen.pack(domain_project(small_gen, z))
    g = flux_constraint_vector(small_gen)
    scale = np.linalg.norm(g) * np.linalg.norm(proj)
    assert abs(g @ proj) < 1e-12 * scale
    again = small_gen.pack(domain_project(small_gen, proj))
    assert np.linalg.norm(again - proj) < 1e-10 * np.linalg.norm(proj)


def test_domain_project_no_op_on_conforming(small_gen, rng):
    z = rng.standard_normal(small_gen.dim) + 1j * rng.standard_normal(small_gen.dim)
    proj = small_gen.pack(domain_project(small_gen, z))
    assert np.allclose(small_gen.pack(domain_project(small_gen, proj)), proj)


def test_domain_project_is_w_orthogonal(small_gen, rng):
    # least-squares oracle: correction must be W-parallel to W^{-1} g, i.e.
    # <raw - out, y>_W = 0 for every y with g.y = 0
    z = rng.standard_normal(small_gen.dim) + 1j * rng.standard_normal(small_gen.dim)
    out = small_gen.pack(domain_project(small_gen, z))
    corr = z - out
    g = flux_constraint_vector(small_gen)
    for _ in range(5):
        y = rng.standard_normal(small_gen.dim)
        y = y - g * (g @ y) / (g @ g)  # now g.y = 0
        inner = np.vdot(small_gen.F @ y, small_gen.F @ corr)
        assert abs(inner) < 1e-10 * small_gen.energy_norm(corr) * small_gen.energy_norm(
            y + 0j
        )


# ---------------------------------------------------------------------- export


def test_export_matrix_roundtrip(tmp_path, small_gen):
    path = tmp_path / "a.txt"
    export_matrix(small_gen.A, path)
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            r, c, re, im = line.split()
            rows.append((int(r), int(c), float(re), float(im)))
    assert len(rows) == small_gen.A.nnz
    # spot check a known entry: du_1/dt = v_1
    entries = {(r, c): re + 1j * im for r, c, re, im in rows}
    assert entries[(0, small_gen.blocks["v"].start)] == 1.0 + 0.0j

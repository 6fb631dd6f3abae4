"""Contractive time integration and decay-rate measurement.

The implicit midpoint rule (I - dt/2 A) z+ = (I + dt/2 A) z is A-stable and,
because Re<Az,z>_W <= 0, cannot increase the energy norm |z|_W: with
y = (z + z+)/2 one has |z+|^2 - |z|^2 = 2 dt Re<Ay,y>_W <= 0.  One sparse
factorization per (operator, dt) pair is cached and reused.

evolve_energy tracks |z(t)|_W at geometrically spaced checkpoints and fits
local log-log slopes over sliding windows; for smooth data (z0 = A^{-1} r)
the slope approaches -2 inside the window where the discrete spectrum still
resolves the continuum of weakly damped wave modes.

semi_uniform_norm propagates all columns of A^{-1} with the same one-step
map (batched through binary powering of the dense step matrix, which is the
exact composition of CN steps) and reports the energy operator norm of
S_h(t) A_h^{-1}; t^2 times this quantity staying in a bounded band is the
discrete signature of the sharp t^{-2} decay rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, WavecgError
from .operator import GeneratorMatrix, StateVector

DENSE_PROPAGATOR_MAX_DIM = 2000


@dataclass
class DecayTrace:
    """Checkpointed energy history with windowed log-log slopes."""

    times: np.ndarray
    energies: np.ndarray
    slope_times: np.ndarray
    slopes: np.ndarray
    initial_data_tag: str

    def windowed_slope(self, t_lo: float, t_hi: float) -> float:
        """Least-squares slope of log|z| vs log t over checkpoints in [t_lo, t_hi]."""
        mask = (self.times >= t_lo) & (self.times <= t_hi) & (self.times > 0)
        if np.count_nonzero(mask) < 2:
            raise WavecgError("not enough checkpoints in the requested window")
        lt = np.log(self.times[mask])
        le = np.log(self.energies[mask])
        design = np.vstack([lt, np.ones_like(lt)]).T
        return float(np.linalg.lstsq(design, le, rcond=None)[0][0])


def _cn_lu(gen: GeneratorMatrix, dt: float):
    key = float(dt)
    if key not in gen._cn_cache:
        eye = sp.identity(gen.dim, format="csc", dtype=complex)
        lhs = (eye - (dt / 2.0) * gen.A.astype(complex)).tocsc()
        try:
            lu = spla.splu(lhs)
        except RuntimeError as exc:  # dissipative A keeps I - dt/2 A regular
            raise WavecgError(f"midpoint factorization failed for dt={dt}") from exc
        if len(gen._cn_cache) > 4:
            gen._cn_cache.clear()
        gen._cn_cache[key] = lu
    return gen._cn_cache[key]


def step_cn(gen: GeneratorMatrix, z, dt: float):
    """One implicit-midpoint step; accepts/returns StateVector or flat vector."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    as_state = isinstance(z, StateVector)
    vec = gen.pack(z) if as_state else np.asarray(z, dtype=complex)
    lu = _cn_lu(gen, dt)
    out = lu.solve(vec + (dt / 2.0) * (gen.A @ vec))
    return gen.unpack(out) if as_state else out


def evolve_energy(
    gen: GeneratorMatrix,
    z0,
    t_max: float,
    dt: float,
    checkpoint_ratio: float = 1.2,
    slope_window: int = 8,
    initial_data_tag: str = "custom",
) -> DecayTrace:
    """March z' = A z with cached CN steps, recording |z|_W at checkpoints.

    Checkpoints are geometric with the given ratio (at least one step apart).
    NaN contamination aborts with diagnostics rather than returning garbage.
    """
    if t_max <= 0 or dt <= 0:
        raise ConfigError("t_max and dt must be positive")
    vec = gen.pack(z0) if isinstance(z0, StateVector) else np.asarray(z0, complex)
    lu = _cn_lu(gen, dt)
    a_mat = gen.A

    n_steps = int(round(t_max / dt))
    checkpoint_steps = _geometric_steps(n_steps, dt, checkpoint_ratio)
    times = [0.0]
    energies = [gen.energy_norm(vec)]
    next_idx = 0
    for step in range(1, n_steps + 1):
        vec = lu.solve(vec + (dt / 2.0) * (a_mat @ vec))
        if next_idx < len(checkpoint_steps) and step == checkpoint_steps[next_idx]:
            e = gen.energy_norm(vec)
            if not np.isfinite(e):
                raise WavecgError(
                    f"NaN/Inf energy at t = {step * dt}: unstable configuration"
                )
            times.append(step * dt)
            energies.append(e)
            next_idx += 1
    times = np.array(times)
    energies = np.array(energies)
    slope_times, slopes = _sliding_slopes(times, energies, slope_window)
    return DecayTrace(
        times=times,
        energies=energies,
        slope_times=slope_times,
        slopes=slopes,
        initial_data_tag=initial_data_tag,
    )


def smooth_initial_data(
    gen: GeneratorMatrix, seed: int = 0, band_fraction: float = 0.5
) -> np.ndarray:
    """z0 = A^{-1} r for seeded random r with band-limited wave content.

    Plain white node noise concentrates energy in the near-Nyquist wave modes
    of the difference scheme, which have vanishing group velocity and are
    essentially undamped; they are grid artifacts, not functions.  r is
    therefore sine-transformed on the wave components and truncated to the
    lowest band_fraction of the mode band before applying A^{-1}.
    """
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(gen.dim) + 1j * rng.standard_normal(gen.dim)
    _bandlimit_wave_components(gen, r, band_fraction)
    r /= gen.energy_norm(r)
    return spla.splu(gen.A.astype(complex).tocsc()).solve(r)


def decay_datum(gen: GeneratorMatrix, seed: int = 0, dt: float = 0.01) -> np.ndarray:
    """Random z0 = A^{-1} r graded to witness the sharp polynomial decay rate.

    A fixed datum decays at a rate set by its spectral weights: flat (white)
    wave-mode energies in r average the per-mode exponentials into a t^{-1}
    trajectory, while the extremal t^{-2} rate is tracked by mode energies
    decaying like 1/s.  r is built from the discrete sine modes of the wave
    segment with amplitudes (1+s_k)^{-1/2} xi_k (xi_k seeded unit normals),
    cut off where the midpoint rule stops damping faithfully (s dt/2 ~ 1) or
    where grid dispersion bends the wave band, whichever comes first.
    """
    rng = np.random.default_rng(seed)
    h = gen.h_u
    s_cut = min(1.6 / dt, 0.62 * 2.0 / h)

    from scipy.fft import idst

    r = np.zeros(gen.dim, dtype=complex)
    for sl in (gen.blocks["u"], gen.blocks["v"]):
        width = sl.stop - sl.start
        k_modes = np.arange(1, width + 1)
        s_modes = (2.0 / h) * np.sin(np.minimum(0.5 * np.pi * k_modes * h, 0.5 * np.pi))
        amp = np.where(s_modes <= s_cut, (1.0 + s_modes) ** -0.5, 0.0)
        coef = amp * (rng.standard_normal(width) + 1j * rng.standard_normal(width))
        r[sl] = idst(coef.real, type=1, n=width) + 1j * idst(coef.imag, type=1, n=width)
    # mild smooth content in the strongly damped heat/memory blocks
    y = gen.y_heat
    r[gen.blocks["w"]] = 0.1 * np.sin(np.pi * y[1:]) * rng.standard_normal()
    r /= gen.energy_norm(r)
    return spla.splu(gen.A.astype(complex).tocsc()).solve(r)


def _bandlimit_wave_components(gen: GeneratorMatrix, r: np.ndarray, fraction: float):
    from scipy.fft import dst, idst

    for sl in (gen.blocks["u"], gen.blocks["v"]):
        block = r[sl]
        width = len(block)
        kmax = max(1, int(fraction * width))
        for part in (block.real, block.imag):
            coef = dst(part, type=1)
            coef[kmax:] = 0.0
            part[:] = idst(coef, type=1)
        r[sl] = block


def semi_uniform_norm(gen: GeneratorMatrix, times, dt: float = 0.01):
    """|S_h(t) A_h^{-1}|_W at the requested times (t = 0 gives |A^{-1}|_W).

    Dense path only: propagates the whole inverse through powers of the CN
    one-step matrix.  Refuses dimensions above 2000; use a reduced grid.
    """
    if gen.dim > DENSE_PROPAGATOR_MAX_DIM:
        raise ConfigError(
            f"dimension {gen.dim} too large for the dense propagator; reduce the grid"
        )
    times = sorted(float(t) for t in np.atleast_1d(times))
    if times and times[0] < 0:
        raise ConfigError("times must be nonnegative")
    a_dense = gen.A.toarray()
    eye = np.eye(gen.dim)
    step = la.solve(eye - (dt / 2.0) * a_dense, eye + (dt / 2.0) * a_dense)
    x = la.solve(a_dense, eye)  # A^{-1}
    f_dense = gen.F.toarray()
    f_inv = la.solve(f_dense, eye)

    out = []
    current_steps = 0
    for t in times:
        target = int(round(t / dt))
        delta = target - current_steps
        if delta < 0:
            raise ConfigError("times must be nondecreasing after rounding to steps")
        if delta:
            x = _matrix_power_apply(step, delta) @ x
            current_steps = target
        norm = np.linalg.norm(f_dense @ x @ f_inv, 2)
        out.append((current_steps * dt, float(norm)))
    return out


def _matrix_power_apply(step: np.ndarray, power: int) -> np.ndarray:
    """step**power by binary powering (exact composition of CN steps)."""
    result = None
    base = step
    p = power
    while p:
        if p & 1:
            result = base if result is None else result @ base
        p >>= 1
        if p:
            base = base @ base
    return result


def _geometric_steps(n_steps: int, dt: float, ratio: float) -> list[int]:
    if ratio <= 1.0:
        raise ConfigError("checkpoint ratio must exceed 1")
    steps = []
    t = dt
    while True:
        k = max(1, int(round(t / dt)))
        if k > n_steps:
            break
        if not steps or k > steps[-1]:
            steps.append(k)
        t = max(t * ratio, t + dt)
    if not steps or steps[-1] != n_steps:
        steps.append(n_steps)
    return steps


def _sliding_slopes(times, energies, window):
    pts = [(t, e) for t, e in zip(times, energies) if t > 0 and e > 0]
    if len(pts) < window:
        return np.empty(0), np.empty(0)
    slope_times, slopes = [], []
    for lo in range(0, len(pts) - window + 1):
        chunk = pts[lo : lo + window]
        lt = np.log([p[0] for p in chunk])
        le = np.log([p[1] for p in chunk])
        design = np.vstack([lt, np.ones_like(lt)]).T
        slopes.append(float(np.linalg.lstsq(design, le, rcond=None)[0][0]))
        slope_times.append(float(np.exp(lt.mean())))
    return np.array(slope_times), np.array(slopes)

"""Command-line front end.

Single JSON configuration file, machine-readable CSV/JSON artifacts with a
commented metadata header, deterministic bodies for fixed config + seed.
Exit codes: 0 success, 1 usage/configuration error, 2 property violation
(e.g. an invalid kernel or a non-positive transfer real part).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ConfigError, PropertyViolation, WavecgError
from .evolve import decay_datum, evolve_energy
from .kernel import MemoryKernel, check
from .operator import GridSpec, ModeReduction, assemble, history_grid
from .resolvent import lower_bound, scan
from .spectrum import Strip, characteristic_roots
from .symbols import cg_transfer, complex_diffusivity

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROPERTY = 2

COMMANDS = (
    "kernel-check",
    "transfer-scan",
    "spectrum",
    "resolvent-scan",
    "lower-bound",
    "evolve",
    "decay-report",
)

# schema: key -> (default, allowed subkeys or None for scalars/lists)
_HISTORY_KEYS = {"ratio": 1.15, "s1": None, "tail_tol": 1e-8}
_GRID_KEYS = {"n_u": 768, "n_w": 768, "memory": "history", "history": _HISTORY_KEYS}
_SCHEMA = {
    "kernel": {"modes": [[1.0, 1.0]]},
    "grid": _GRID_KEYS,
    "transfer_scan": {"s_max": 1000.0, "n_samples": 10001},
    "spectrum": {
        "im_min": 0.5,
        "im_max": 50.0 * float(np.pi),
        "n_re": 24,
        "n_im": 2400,
        "margin": 0.49,
    },
    "resolvent_scan": {
        "s_min": 20.0,
        "s_max": 400.0,
        "n_samples": 24,
        "sampling": "resonant",
        "s_values": None,
    },
    "lower_bound": {"n_min": 1, "n_max": 100},
    "evolve": {
        "n_u": 1280,
        "n_w": 128,
        "ratio": 1.3,
        "t_max": 100.0,
        "dt": 0.00125,
        "initial": "inverse_applied",
        "checkpoint_ratio": 1.2,
    },
    "decay_report": {"t_lo": 10.0, "t_hi": 100.0},
    "svg": False,
    "seed": 0,
    "threads": 1,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavecg",
        description="wave / memory-diffusion coupled system: symbols, spectrum, "
        "resolvent growth and energy decay",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="JSON configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = int(args.seed)
        if args.threads is not None:
            config["threads"] = int(args.threads)
        env_threads = os.environ.get("WAVECG_THREADS")
        if env_threads is not None:
            config["threads"] = int(env_threads)
        os.makedirs(args.out, exist_ok=True)
        runner = {
            "kernel-check": _run_kernel_check,
            "transfer-scan": _run_transfer_scan,
            "spectrum": _run_spectrum,
            "resolvent-scan": _run_resolvent_scan,
            "lower-bound": _run_lower_bound,
            "evolve": _run_evolve,
            "decay-report": _run_decay_report,
        }[args.command]
        return runner(config, args.out)
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WavecgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


# ----------------------------------------------------------------- config I/O


def _load_config(path):
    if path is None:
        raw = {}
    else:
        with open(path) as fh:
            raw = json.load(fh)
    _reject_unknown(raw, _SCHEMA, "")
    return _merge(_SCHEMA, raw)


def _reject_unknown(raw, schema, prefix):
    if not isinstance(raw, dict):
        raise ConfigError(f"config section '{prefix or '/'}' must be an object")
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown config key '{prefix}{key}'")
        sub = schema[key]
        if isinstance(sub, dict):
            _reject_unknown(val, sub, f"{prefix}{key}.")


def _merge(schema, raw):
    out = {}
    for key, default in schema.items():
        if key in raw:
            out[key] = _merge(default, raw[key]) if isinstance(default, dict) else raw[key]
        else:
            out[key] = json.loads(json.dumps(default)) if isinstance(default, dict) else default
    return out


def _kernel_from(config) -> MemoryKernel:
    modes = config["kernel"].get("modes")
    if not modes:
        raise ConfigError("kernel.modes must be a non-empty list of [a, b] pairs")
    try:
        return MemoryKernel(tuple((float(a), float(b)) for a, b in modes))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid kernel modes: {exc}") from exc


def _grid_from(config, kernel) -> GridSpec:
    g = config["grid"]
    if g["memory"] == "modes":
        memory = ModeReduction()
    elif g["memory"] == "history":
        h = g["history"]
        memory = history_grid(
            kernel, ratio=float(h["ratio"]), s1=h["s1"], tail_tol=float(h["tail_tol"])
        )
    else:
        raise ConfigError("grid.memory must be 'history' or 'modes'")
    return GridSpec(n_u=int(g["n_u"]), n_w=int(g["n_w"]), memory=memory)


# ------------------------------------------------------------------- emitters


def _meta_lines(command, config, extra=None):
    lines = [
        f"# wavecg {__version__}",
        f"# command: {command}",
        f"# generated_at: {datetime.now(timezone.utc).isoformat()}",
        f"# seed: {config['seed']}",
        f"# threads: {config['threads']}",
        f"# kernel_modes: {json.dumps(config['kernel']['modes'])}",
    ]
    for key, val in (extra or {}).items():
        lines.append(f"# {key}: {val}")
    return lines


def _write_csv(path, meta, header, rows):
    with open(path, "w") as fh:
        for line in meta:
            fh.write(line + "\n")
        fh.write(f"# columns: {','.join(header)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_svg(path, xs, ys, title):
    """Minimal standalone polyline plot; no plotting library involved."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ok = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = xs[ok], ys[ok]
    w, h, pad = 640, 400, 45
    if len(xs) < 2:
        return
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    sx = lambda x: pad + (w - 2 * pad) * (x - x0) / (x1 - x0 or 1.0)
    sy = lambda y: h - pad - (h - 2 * pad) * (y - y0) / (y1 - y0 or 1.0)
    pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
    with open(path, "w") as fh:
        fh.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">'
            f'<rect width="{w}" height="{h}" fill="white"/>'
            f'<text x="{w/2:.0f}" y="20" text-anchor="middle" '
            f'font-family="monospace">{title}</text>'
            f'<polyline points="{pts}" fill="none" stroke="steelblue"/>'
            f'<text x="{pad}" y="{h-10}" font-family="monospace" font-size="10">'
            f"x: [{x0:.3g}, {x1:.3g}]  y: [{y0:.3g}, {y1:.3g}]</text></svg>\n"
        )


# ------------------------------------------------------------------- commands


def _run_kernel_check(config, out):
    kernel = _kernel_from(config)
    report = check(kernel)
    payload = report.as_dict()
    payload["modes"] = [list(m) for m in kernel.modes]
    _write_json(os.path.join(out, "kernel_report.json"), payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK if report.valid else EXIT_PROPERTY


def _run_transfer_scan(config, out):
    kernel = _kernel_from(config)
    params = config["transfer_scan"]
    s_max = float(params["s_max"])
    n = int(params["n_samples"])
    if s_max <= 0 or n < 2:
        raise ConfigError("transfer_scan needs s_max > 0 and n_samples >= 2")
    s = np.linspace(0.0, s_max, n)
    ell = complex_diffusivity(kernel, 1j * s)
    p2 = cg_transfer(kernel, 1j * s)
    rows = [
        (
            float(si),
            float(ei.real),
            float(ei.imag),
            float(pi.real),
            float(pi.imag),
            float((1.0 + np.sqrt(abs(si))) * pi.real),
            float(np.angle(pi)),
        )
        for si, ei, pi in zip(s, ell, p2)
    ]
    meta = _meta_lines("transfer-scan", config, {"s_max": s_max, "n_samples": n})
    path = os.path.join(out, "transfer_scan.csv")
    _write_csv(
        path,
        meta,
        ["s", "re_ell", "im_ell", "re_p2", "im_p2", "floor_weighted", "arg_p2"],
        rows,
    )
    if config["svg"]:
        _write_svg(
            os.path.join(out, "transfer_scan.svg"),
            s,
            [r[5] for r in rows],
            "(1+sqrt s) Re p2(is)",
        )
    if np.any(p2.real <= 0.0):
        raise PropertyViolation("Re p2(is) <= 0 detected in transfer scan")
    print(f"wrote {path}")
    return EXIT_OK


def _run_spectrum(config, out):
    kernel = _kernel_from(config)
    params = config["spectrum"]
    strip = Strip.for_kernel(
        kernel,
        im_min=float(params["im_min"]),
        im_max=float(params["im_max"]),
        margin=float(params["margin"]),
    )
    roots = characteristic_roots(
        kernel, strip, seed_grid=(int(params["n_re"]), int(params["n_im"]))
    )
    rows = [
        (float(r.real), float(r.imag), float(res), "z_ell")
        for r, res in zip(roots.z_ell, roots.z_ell_residual)
    ] + [
        (float(r.real), float(r.imag), float(res), "sigma")
        for r, res in zip(roots.sigma, roots.sigma_residual)
    ]
    meta = _meta_lines(
        "spectrum",
        config,
        {
            "strip": f"[{strip.re_min}, {strip.re_max}] x [{strip.im_min}, {strip.im_max}]",
            "n_roots_sigma": len(roots.sigma),
            "n_roots_z_ell": len(roots.z_ell),
        },
    )
    path = os.path.join(out, "spectrum.csv")
    _write_csv(path, meta, ["re_lambda", "im_lambda", "residual", "class"], rows)
    if config["svg"] and rows:
        _write_svg(
            os.path.join(out, "spectrum.svg"),
            [r[0] for r in rows],
            [r[1] for r in rows],
            "strip eigenvalue candidates",
        )
    print(f"wrote {path} ({len(rows)} roots)")
    return EXIT_OK


def _resolvent_frequencies(params, gen):
    if params["s_values"]:
        return [float(s) for s in params["s_values"]]
    s_min, s_max = float(params["s_min"]), float(params["s_max"])
    n = int(params["n_samples"])
    if params["sampling"] == "linear":
        return list(np.linspace(s_min, s_max, n))
    if params["sampling"] != "resonant":
        raise ConfigError("resolvent_scan.sampling must be 'resonant' or 'linear'")
    # discrete wave resonances (2/h) sin(k pi h / 2) inside the window
    h = gen.h_u
    nyquist = 2.0 / h
    if s_max >= nyquist:
        raise ConfigError("s_max beyond the discrete wave band; refine the grid")
    k_lo = max(1, int(np.ceil(2.0 * np.arcsin(s_min / nyquist) / (np.pi * h))))
    k_hi = int(np.floor(2.0 * np.arcsin(s_max / nyquist) / (np.pi * h)))
    ks = np.unique(np.linspace(k_lo, k_hi, n).round().astype(int))
    return list((2.0 / h) * np.sin(0.5 * np.pi * ks * h))


def _run_resolvent_scan(config, out):
    kernel = _kernel_from(config)
    gen = assemble(kernel, _grid_from(config, kernel))
    params = config["resolvent_scan"]
    freqs = _resolvent_frequencies(params, gen)
    result = scan(gen, freqs, threads=int(config["threads"]))
    rows = [(x.s, x.norm, x.method) for x in result.samples]
    meta = _meta_lines(
        "resolvent-scan",
        config,
        {
            "grid": f"n_u={gen.grid.n_u} n_w={gen.grid.n_w} mem_rows={gen.n_mem_rows}",
            "fitted_exponent_top_decade": result.exponent,
            "n_errors": len(result.errors),
        },
    )
    path = os.path.join(out, "resolvent_scan.csv")
    _write_csv(path, meta, ["s", "norm", "method"], rows)
    _write_json(
        os.path.join(out, "resolvent_summary.json"),
        {
            "exponent": result.exponent,
            "n_samples": len(rows),
            "errors": [{"s": s, "message": m} for s, m in result.errors],
        },
    )
    if config["svg"] and rows:
        _write_svg(
            os.path.join(out, "resolvent_scan.svg"),
            np.log10([r[0] for r in rows]),
            np.log10([r[1] for r in rows]),
            "log10 resolvent norm vs log10 s",
        )
    print(f"wrote {path}; fitted exponent {result.exponent:.4f}")
    return EXIT_OK


def _run_lower_bound(config, out):
    kernel = _kernel_from(config)
    params = config["lower_bound"]
    n_min, n_max = int(params["n_min"]), int(params["n_max"])
    if n_min < 1 or n_max < n_min:
        raise ConfigError("lower_bound needs 1 <= n_min <= n_max")
    rows = []
    for n in range(n_min, n_max + 1):
        lb = lower_bound(kernel, n)
        rows.append(
            (
                n,
                float(lb.alpha.real),
                float(lb.alpha.imag),
                float(lb.sigma.real),
                float(lb.sigma.imag),
                float(abs(lb.u_plus)),
                float(lb.bound),
                float(np.pi * n / 16.0),
            )
        )
    meta = _meta_lines("lower-bound", config, {"n_min": n_min, "n_max": n_max})
    path = os.path.join(out, "lower_bound.csv")
    _write_csv(
        path,
        meta,
        [
            "n",
            "re_alpha",
            "im_alpha",
            "re_sigma",
            "im_sigma",
            "abs_u_plus",
            "bound",
            "pi_n_over_16",
        ],
        rows,
    )
    if config["svg"]:
        _write_svg(
            os.path.join(out, "lower_bound.svg"),
            [r[0] for r in rows],
            [r[6] ** 2 for r in rows],
            "bound^2 vs n",
        )
    print(f"wrote {path}")
    return EXIT_OK


def _evolve_common(config):
    kernel = _kernel_from(config)
    params = config["evolve"]
    grid = GridSpec(
        n_u=int(params["n_u"]),
        n_w=int(params["n_w"]),
        memory=history_grid(kernel, ratio=float(params["ratio"])),
    )
    gen = assemble(kernel, grid)
    dt = float(params["dt"])
    seed = int(config["seed"])
    if params["initial"] == "inverse_applied":
        z0 = decay_datum(gen, seed=seed, dt=dt)
        tag = "inverse_applied"
    elif params["initial"] == "random":
        rng = np.random.default_rng(seed)
        z0 = rng.standard_normal(gen.dim) + 1j * rng.standard_normal(gen.dim)
        z0 /= gen.energy_norm(z0)
        tag = "custom"
    else:
        raise ConfigError("evolve.initial must be 'inverse_applied' or 'random'")
    trace = evolve_energy(
        gen,
        z0,
        t_max=float(params["t_max"]),
        dt=dt,
        checkpoint_ratio=float(params["checkpoint_ratio"]),
        initial_data_tag=tag,
    )
    return gen, trace


def _trace_rows(trace):
    # attach each sliding-window slope to the window's last checkpoint
    rows = []
    slope_list = list(trace.slopes)
    window = len(trace.times) - len(slope_list) if slope_list else 0
    for i, (t, e) in enumerate(zip(trace.times, trace.energies)):
        j = i - window
        slope = slope_list[j] if 0 <= j < len(slope_list) else float("nan")
        rows.append((float(t), float(e), float(slope)))
    return rows


def _run_evolve(config, out):
    gen, trace = _evolve_common(config)
    rows = _trace_rows(trace)
    meta = _meta_lines(
        "evolve",
        config,
        {
            "grid": f"n_u={gen.grid.n_u} n_w={gen.grid.n_w} mem_rows={gen.n_mem_rows}",
            "dt": config["evolve"]["dt"],
            "initial": trace.initial_data_tag,
        },
    )
    path = os.path.join(out, "evolve.csv")
    _write_csv(path, meta, ["t", "energy", "local_slope"], rows)
    if config["svg"]:
        pos = [(t, e) for t, e, _ in rows if t > 0 and e > 0]
        _write_svg(
            os.path.join(out, "evolve.svg"),
            np.log10([p[0] for p in pos]),
            np.log10([p[1] for p in pos]),
            "log10 energy vs log10 t",
        )
    print(f"wrote {path}")
    return EXIT_OK


def _run_decay_report(config, out):
    gen, trace = _evolve_common(config)
    params = config["decay_report"]
    t_lo, t_hi = float(params["t_lo"]), float(params["t_hi"])
    slope = trace.windowed_slope(t_lo, t_hi)
    rows = _trace_rows(trace)
    path = os.path.join(out, "decay_report.csv")
    meta = _meta_lines(
        "decay-report",
        config,
        {"window": f"[{t_lo}, {t_hi}]", "fitted_slope": slope},
    )
    _write_csv(path, meta, ["t", "energy", "local_slope"], rows)
    payload = {
        "fitted_slope": slope,
        "window": [t_lo, t_hi],
        "grid": {
            "n_u": gen.grid.n_u,
            "n_w": gen.grid.n_w,
            "mem_rows": gen.n_mem_rows,
        },
        "dt": config["evolve"]["dt"],
        "initial": trace.initial_data_tag,
        "final_energy": float(trace.energies[-1]),
    }
    _write_json(os.path.join(out, "decay_report.json"), payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line interface.

Subcommands: validate, thermo-table, waves-solve, simulate, experiment,
exact-entropy, gap-scan, plotdata, and run (dispatch on a config file's
``mode``).  Every report CSV gets a companion PNG figure and a
manifest.json with input hashes and versions.  Exit status 0 on success,
2 for configuration errors, 3 when a domain guard (physical domain,
shock time, hyperbolicity) refuses to run.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__, exact, model, plots, reports, sim, thermo, waves
from .errors import BifluxError, ConfigurationError, GuardError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3

BUILTIN_MODELS = ("two_lane_tasep", "two_species_exclusion")


def _resolve_model(name_or_path: str) -> tuple[model.ModelSpec, Path]:
    if name_or_path in BUILTIN_MODELS:
        path = model.builtin_model_path(name_or_path)
    else:
        path = Path(name_or_path)
    if not path.is_file():
        raise ConfigurationError(f"model file not found: {path}")
    return model.load_model_spec(path), path


def _profile_from(block) -> tuple:
    """(callable, description) from {'name': ..., 'amplitude': ...}."""
    if block is None:
        block = {"name": "zero"}
    if isinstance(block, str):
        block = {"name": block}
    name = block.get("name", "zero")
    amp = float(block.get("amplitude", 1.0))
    table = {
        "cos": lambda x: amp * np.cos(2.0 * np.pi * np.asarray(x, dtype=float)),
        "sin": lambda x: amp * np.sin(2.0 * np.pi * np.asarray(x, dtype=float)),
        "const": lambda x: np.full_like(np.asarray(x, dtype=float), amp),
        "zero": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    }
    if name not in table:
        raise ConfigurationError(
            f"unknown profile {name!r}; choose from {sorted(table)}"
        )
    return table[name], f"{name}(amplitude={amp})"


def _seed_list(block, override_start=None) -> list[int]:
    if block is None:
        block = {"start": 0, "count": 1}
    if isinstance(block, list):
        seeds = [int(s) for s in block]
        if override_start is not None:
            seeds = [int(override_start) + k for k in range(len(seeds))]
        return seeds
    start = int(block.get("start", 0)) if override_start is None else int(override_start)
    count = int(block.get("count", 1))
    return list(range(start, start + count))


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 0.2:
        raise ConfigurationError(
            f"beta = {beta} is not admissible: the scaling regime requires "
            "beta in the open interval (0, 1/5)"
        )
    return beta


def _out_dir(args, config=None) -> Path:
    out = getattr(args, "out", None)
    if out is None and config:
        out = config.get("out")
    path = Path(out) if out else Path(".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        payload = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {p}: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config {p} must be a mapping")
    return payload


def _write_manifest(out: Path, mode: str, inputs: dict, params: dict, extra=None):
    reports.write_json(out / "manifest.json", reports.make_manifest(mode, inputs, params, extra))


# ---------------------------------------------------------------------------
# mode implementations
# ---------------------------------------------------------------------------


def _mode_validate(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    sizes = config.get("torus_sizes", [3, 4])
    out = _out_dir(args, config)
    report = model.validate_model(spec, sizes)
    reports.write_json(out / "validate_report.json", report.as_dict())
    (out / "validate_report.txt").write_text(report.as_text() + "\n")
    _write_manifest(out, "validate", {"model": path}, {"torus_sizes": list(sizes)})
    print(report.as_text())
    return EXIT_OK if report.all_ok else EXIT_OK  # invalid model is a finding, not an error


def _mode_thermo_table(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    grid = int(config.get("grid", 20))
    out = _out_dir(args, config)
    rows = thermo.thermo_table_rows(spec, grid=grid)
    csv_path = out / "thermo_table.csv"
    reports.write_csv(
        csv_path,
        "thermo@1",
        {"model": spec.name, "grid": grid, "flux_constants": "C1=C2=0"},
        thermo.THERMO_TABLE_COLUMNS,
        rows,
    )
    plots.render_report_figure(csv_path)
    _write_manifest(out, "thermo-table", {"model": path}, {"grid": grid})
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return EXIT_OK


def _mode_waves_solve(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    p = config.get("params", config)
    n = int(p.get("n", 1024))
    beta = _check_beta(p.get("beta", 0.1))
    u0, v0 = float(p["u0"]), float(p["v0"])
    u_star, u_desc = _profile_from(p.get("u_star"))
    v_star, v_desc = _profile_from(p.get("v_star"))
    times = [float(t) for t in p.get("times", [0.1])]
    grid = int(p.get("grid", waves.DEFAULT_GRID))
    out = _out_dir(args, config)

    problem = waves.WaveProblem.build(spec, u0, v0, u_star, v_star, m=grid)
    problem.guard_times(times)
    fields = problem.fields_at(times)
    rows = []
    for field in fields:
        du, dv = waves.reconstruct_profiles(field, problem.eigen, n, beta, x=field.x)
        prof = waves.corrected_profiles(
            field, problem.coeffs, problem.eigen, n, beta, x=field.x
        )
        e = problem.eigen
        ut = prof.u_tilde * e.r[0] + prof.v_tilde * e.s[0]
        vt = prof.u_tilde * e.r[1] + prof.v_tilde * e.s[1]
        for k in range(len(field.x)):
            rows.append(
                [field.time, field.x[k], field.sigma[k], field.delta[k],
                 du[k], dv[k], ut[k], vt[k]]
            )
    csv_path = out / "waves.csv"
    reports.write_csv(
        csv_path,
        "waves@1",
        {"model": spec.name, "n": n, "beta": beta, "u0": u0, "v0": v0},
        reports.WAVES_COLUMNS,
        rows,
    )
    plots.render_report_figure(csv_path)
    co = problem.coeffs
    meta = {
        "lambda": problem.eigen.lam,
        "mu": problem.eigen.mu,
        "r": problem.eigen.r.tolist(),
        "s": problem.eigen.s.tolist(),
        "l": problem.eigen.l.tolist(),
        "m": problem.eigen.m.tolist(),
        "coefficients": {
            "a1": co.a1, "a2": co.a2, "b1": co.b1, "b2": co.b2,
            "a2n": co.a2n, "a3": co.a3, "b2n": co.b2n, "b3": co.b3,
            "c_sigma": co.c_sigma, "c_delta": co.c_delta,
        },
        "grid": grid,
        "cfl": waves.DEFAULT_CFL,
        "shock_time_estimate": problem.shock_time,
        "profiles": {"u_star": u_desc, "v_star": v_desc},
    }
    reports.write_json(out / "waves_meta.json", meta)
    _write_manifest(out, "waves-solve", {"model": path}, {k: str(v) for k, v in p.items()})
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return EXIT_OK


def _run_residual_study(spec, p, seeds, threads, n_values) -> tuple[list, dict, int]:
    beta = _check_beta(p.get("beta", 0.1))
    u0, v0 = float(p["u0"]), float(p["v0"])
    u_star, _ = _profile_from(p.get("u_star"))
    v_star, _ = _profile_from(p.get("v_star"))
    times = [float(t) for t in p.get("times", [0.1])]
    g_names = list(p.get("test_functions", ["1", "cos2pix", "sin2pix"]))
    grid = int(p.get("grid", 1024))
    rows = []
    events = 0
    summaries: dict[str, dict] = {}
    for n in n_values:
        params = sim.SimParams(
            n=int(n), beta=beta, u0=u0, v0=v0, u_star=u_star, v_star=v_star
        )
        rep = sim.run_experiment(
            spec, params, seeds, times, g_names, threads=threads, grid_m=grid
        )
        rows += reports.residual_report_rows(rep)
        events += rep.total_events
        for row in rep.rows:
            key = f"g={row.g_name}|{row.component}|t={row.t:g}"
            summaries.setdefault(key, {})[str(n)] = row.mean_abs
    return rows, summaries, events


def _mode_simulate(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    p = config.get("params", config)
    seeds = _seed_list(p.get("seeds"), getattr(args, "seed", None))
    threads = int(getattr(args, "threads", 1) or 1)
    out = _out_dir(args, config)
    started = time.perf_counter()
    rows, _summaries, events = _run_residual_study(
        spec, p, seeds, threads, [int(p.get("n", 256))]
    )
    csv_path = out / "residuals.csv"
    reports.write_csv(
        csv_path,
        "residuals@1",
        {"model": spec.name, "rng": sim.RNG_IDENTITY, "seeds": len(seeds)},
        reports.RESIDUAL_COLUMNS,
        rows,
    )
    plots.render_report_figure(csv_path)
    _write_manifest(
        out,
        "simulate",
        {"model": path, "config": config},
        {"seeds": seeds},
        {"event_count": events, "wall_time_s": time.perf_counter() - started,
         "rng": sim.RNG_IDENTITY},
    )
    print(f"wrote {csv_path} ({events} events)")
    return EXIT_OK


def _mode_experiment(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    p = config.get("params", config)
    n_values = [int(n) for n in p.get("n_values", [256, 1024, 4096])]
    seeds = _seed_list(p.get("seeds"), getattr(args, "seed", None))
    threads = int(getattr(args, "threads", 1) or 1)
    out = _out_dir(args, config)
    started = time.perf_counter()
    rows, summaries, events = _run_residual_study(spec, p, seeds, threads, n_values)
    csv_path = out / "residuals.csv"
    reports.write_csv(
        csv_path,
        "residuals@1",
        {"model": spec.name, "rng": sim.RNG_IDENTITY, "seeds": len(seeds),
         "n_values": " ".join(str(n) for n in n_values)},
        reports.RESIDUAL_COLUMNS,
        rows,
    )
    plots.render_report_figure(csv_path)
    trend = {}
    for key, by_n in summaries.items():
        ordered = [by_n[str(n)] for n in n_values if str(n) in by_n]
        trend[key] = {
            "values_by_n": by_n,
            "monotone_decreasing": all(
                b < a for a, b in zip(ordered, ordered[1:])
            ),
            "last_over_first": (ordered[-1] / ordered[0]) if len(ordered) > 1 else 1.0,
        }
    reports.write_json(out / "trend_summary.json", trend)
    _write_manifest(
        out,
        "experiment",
        {"model": path, "config": config},
        {"seeds": seeds, "n_values": n_values},
        {"event_count": events, "wall_time_s": time.perf_counter() - started,
         "rng": sim.RNG_IDENTITY},
    )
    print(f"wrote {csv_path} and trend_summary.json ({events} events)")
    return EXIT_OK


def _mode_exact_entropy(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    p = config.get("params", config)
    n = int(p.get("n", 5))
    beta = _check_beta(p.get("beta", 0.1))
    u0, v0 = float(p["u0"]), float(p["v0"])
    u_star, _ = _profile_from(p.get("u_star"))
    v_star, _ = _profile_from(p.get("v_star"))
    t_max = float(p.get("t_max", 0.2))
    t_points = int(p.get("t_points", 20))
    grid = int(p.get("grid", 256))
    out = _out_dir(args, config)
    problem = waves.WaveProblem.build(spec, u0, v0, u_star, v_star, m=grid)
    t_grid = np.linspace(0.0, t_max, t_points)
    problem.guard_times(t_grid.tolist())
    traj = exact.entropy_trajectory(spec, n, beta, t_grid, problem)
    csv_path = out / "entropy.csv"
    reports.write_csv(
        csv_path,
        "entropy@1",
        {"model": spec.name, "n": n, "beta": beta, "u0": u0, "v0": v0},
        reports.ENTROPY_COLUMNS,
        reports.entropy_rows(traj),
    )
    plots.render_report_figure(csv_path)
    reports.write_json(
        out / "entropy_meta.json",
        {"mass_error": traj.mass_error, "n": n, "beta": beta,
         "monotone_H_pi": bool(np.all(np.diff(traj.h_pi) <= 1e-10))},
    )
    _write_manifest(out, "exact-entropy", {"model": path, "config": config}, {})
    print(f"wrote {csv_path}")
    return EXIT_OK


def _mode_gap_scan(args, config) -> int:
    spec, path = _resolve_model(config["model"])
    p = config.get("params", config)
    l_min = int(p.get("l_min", 2))
    l_max = int(p.get("l_max", 6))
    sectors = p.get("sectors", "all")
    out = _out_dir(args, config)
    report = exact.gap_scaling_report(spec, range(l_min, l_max + 1), sectors)
    csv_path = out / "gap.csv"
    reports.write_csv(
        csv_path,
        "gap@1",
        {"model": spec.name, "sectors": sectors, "slope_logW_logl": report.slope,
         "ratio": report.ratio, "bounded": report.bounded, "partial": report.partial,
         "note": "W is the empirical max over the tested range (extrapolation)"},
        reports.GAP_COLUMNS,
        reports.gap_rows(report),
    )
    plots.render_report_figure(csv_path)
    reports.write_json(
        out / "gap_meta.json",
        {
            "W_by_l": report.w_by_l, "slope": report.slope, "ratio": report.ratio,
            "bounded": report.bounded, "partial": report.partial,
            "violations": report.violations,
            "skipped_sectors": [list(s) for s in report.skipped],
        },
    )
    _write_manifest(out, "gap-scan", {"model": path}, {"l_min": l_min, "l_max": l_max})
    print(f"wrote {csv_path}; W(l) = {report.w_by_l}, slope {report.slope:.3f}")
    return EXIT_OK if not report.violations else EXIT_OK


def _mode_plotdata(args, config) -> int:
    paths = config["reports"]
    out = _out_dir(args, config)
    out_path = out / "plotdata.csv"
    count = reports.emit_plotdata(paths, out_path)
    print(f"wrote {out_path} ({count} rows)")
    return EXIT_OK


_MODES = {
    "validate": _mode_validate,
    "thermo-table": _mode_thermo_table,
    "waves-solve": _mode_waves_solve,
    "simulate": _mode_simulate,
    "experiment": _mode_experiment,
    "exact-entropy": _mode_exact_entropy,
    "gap-scan": _mode_gap_scan,
    "plotdata": _mode_plotdata,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biflux",
        description="Lattice systems with two conservation laws: validation, "
        "thermodynamics, wave predictions, Monte Carlo and exact checks.",
    )
    parser.add_argument("--version", action="version", version=f"biflux {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default: current)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads over seeds")
        sp.add_argument("--seed", type=int, default=None, help="override the first seed")

    p = sub.add_parser("validate", help="check conditions (A)-(C) exhaustively")
    p.add_argument("model")
    p.add_argument("--torus-sizes", default="3,4", help="comma list, each in [3,8]")
    common(p)

    p = sub.add_parser("thermo-table", help="CSV of S, fluxes, Jacobian over a grid")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=20)
    common(p)

    p = sub.add_parser("waves-solve", help="solve the decoupled waves, emit profiles")
    p.add_argument("model")
    p.add_argument("--config", help="YAML with a params block")
    common(p)

    p = sub.add_parser("simulate", help="Monte Carlo residual study at one size")
    p.add_argument("--config", required=True)
    common(p)

    p = sub.add_parser("experiment", help="residual study over several sizes")
    p.add_argument("--config", required=True)
    common(p)

    p = sub.add_parser("exact-entropy", help="exact entropy trajectory at tiny n")
    p.add_argument("--config", required=True)
    common(p)

    p = sub.add_parser("gap-scan", help="spectral-gap certification over blocks")
    p.add_argument("model")
    p.add_argument("--l-min", type=int, default=2)
    p.add_argument("--l-max", type=int, default=6)
    p.add_argument("--sectors", default="all", choices=["all", "worst-k"])
    common(p)

    p = sub.add_parser("plotdata", help="reshape report CSVs into tidy plot data")
    p.add_argument("reports", nargs="+")
    common(p)

    p = sub.add_parser("run", help="dispatch on the mode field of a config file")
    p.add_argument("config")
    common(p)
    return parser


def _config_for(args) -> dict:
    """Assemble the mode config from flags and/or the config file."""
    cmd = args.command
    if cmd == "run":
        config = _load_config(args.config)
        mode = config.get("mode")
        if mode not in _MODES:
            raise ConfigurationError(
                f"config mode {mode!r} unknown; choose from {sorted(_MODES)}"
            )
        return {**config, "_mode": mode}
    if cmd == "validate":
        try:
            sizes = [int(s) for s in args.torus_sizes.split(",") if s.strip()]
        except ValueError:
            raise ConfigurationError(
                f"--torus-sizes must be a comma list of integers: {args.torus_sizes!r}"
            ) from None
        return {"_mode": cmd, "model": args.model, "torus_sizes": sizes}
    if cmd == "thermo-table":
        return {"_mode": cmd, "model": args.model, "grid": args.grid}
    if cmd == "waves-solve":
        config = _load_config(args.config) if args.config else {}
        if "model" not in config:
            config["model"] = args.model
        return {**config, "_mode": cmd}
    if cmd in ("simulate", "experiment", "exact-entropy"):
        config = _load_config(args.config)
        if "model" not in config:
            raise ConfigurationError("config must name a model")
        return {**config, "_mode": cmd}
    if cmd == "gap-scan":
        return {
            "_mode": cmd,
            "model": args.model,
            "params": {"l_min": args.l_min, "l_max": args.l_max, "sectors": args.sectors},
        }
    if cmd == "plotdata":
        return {"_mode": cmd, "reports": args.reports}
    raise ConfigurationError(f"unknown command {cmd!r}")


def run_config(args, config: dict) -> int:
    mode = config.pop("_mode")
    return _MODES[mode](args, config)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_for(args)
        return run_config(args, config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"guard refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except BifluxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

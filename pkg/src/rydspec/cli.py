"""Command-line campaigns driven by a flat JSON config.

Commands
--------
spectra            pooled DOS of a disorder ensemble
spacing            unfolded spacing statistics in the center/wings windows
transition         Poisson/Wigner transition energies
locator            self-consistent resolvent curves
tabulate-analytic  closed-form density tables
compare            overlay two curves after checking physical parameters
merge              combine accumulator shards from compatible runs

Only the config path and a handful of override flags are accepted; every
physical and numerical choice lives in the config document.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analytic, persist
from .analytic import GeometryParams
from .ensembles import EnsembleSpec
from .locator import SolverSettings, solve_high, solve_low
from .runner import dichotomy_analysis, run_ensemble, transition_analysis
from .spectra import rms_deviation, tail_exponent

COMMANDS = ("spectra", "spacing", "transition", "locator", "tabulate-analytic",
            "compare", "merge")

DEFAULTS = {
    "schema_version": persist.SCHEMA_VERSION,
    "command": "spectra",
    "ensemble": "rydberg",
    "n_atoms": 100,
    "blockade_radius": 0.0,
    "goe_sigma": None,
    "realizations": 10,
    "seed": 1,
    "workers": 1,
    "out_dir": "out",
    # spectra/spacing/transition knobs
    "window_abs_min": 0.05,
    "window_abs_max": 1000.0,
    "n_windows": 14,
    "min_spacings_per_window": 200,
    "interpolation_degree": 3,
    "tail_decades": [1.5, 3.0],
    "dump_positions": False,
    # locator knobs
    "locator_method": "low",
    "locator_order": 1,
    "lambda_min": -10.0,
    "lambda_max": 10.0,
    "lambda_points": 201,
    "eps_schedule": [0.2, 0.1, 0.05, 0.03, 0.02],
    # tabulate-analytic knobs
    "table": "coupling_pdf",
    "table_min": -1.0,
    "table_max": 1.0,
    "table_points": 401,
    # compare/merge inputs
    "inputs": [],
}


class ConfigError(ValueError):
    pass


def load_config(path: str, overrides: dict) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    cfg = dict(DEFAULTS)
    for key, val in raw.items():
        if key not in DEFAULTS:
            raise ConfigError(f"config: unknown field {key!r}")
        cfg[key] = val
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"config.command: must be one of {COMMANDS}")
    if cfg["realizations"] < 1:
        raise ConfigError("config.realizations: must be >= 1")
    if cfg["seed"] != int(cfg["seed"]):
        raise ConfigError("config.seed: must be an integer")
    return cfg


def _ensemble_spec(cfg: dict) -> EnsembleSpec:
    return EnsembleSpec(cfg["ensemble"], cfg["n_atoms"], cfg["blockade_radius"],
                        cfg.get("goe_sigma"))


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_meta(cfg: dict) -> dict:
    spec_meta = {}
    if cfg["command"] in ("spectra", "spacing", "transition"):
        spec_meta = _ensemble_spec(cfg).metadata()
    return {"config_hash": persist.config_hash(cfg), **spec_meta}


def _run_campaign(cfg: dict):
    spec = _ensemble_spec(cfg)
    return run_ensemble(spec, cfg["realizations"], cfg["seed"],
                        workers=cfg["workers"])


def cmd_spectra(cfg: dict) -> dict:
    out = _out_dir(cfg)
    meta = _base_meta(cfg)
    if cfg["dump_positions"] and cfg["ensemble"] == "rydberg":
        from .cloud import CloudConfig, sample_cloud
        from .runner import realization_rng
        cloud = sample_cloud(
            CloudConfig(cfg["n_atoms"], cfg["blockade_radius"], seed=cfg["seed"]),
            realization_rng(cfg["seed"], 0))
        persist.write_positions_csv(out / "cloud_realization0.csv",
                                    cloud.positions, meta)
    res = _run_campaign(cfg)
    edges, dens, counts, tail_mass = res.accumulator.dos_density()
    persist.write_histogram_csv(out / "dos.csv", edges, dens, counts,
                                {**meta, "tail_mass": tail_mass})
    persist.save_spectrum_accumulator(out / "dos_state.npz", res.accumulator, meta)
    summary = {
        "realizations_done": res.n_realizations,
        "realizations_failed": len(res.failures),
        "pooled_eigenvalues": res.accumulator.n_eigenvalues,
        "central_skewness": f"{res.accumulator.skewness:.6g}",
        "tail_mass": f"{tail_mass:.6g}",
    }
    try:
        fit = tail_exponent(res.accumulator, tuple(cfg["tail_decades"]))
        for side, (slope, err) in fit.items():
            summary[f"tail_slope_{side}"] = f"{slope:.4f}"
            summary[f"tail_slope_{side}_stderr"] = f"{err:.4f}"
    except Exception as exc:
        summary["tail_fit"] = f"unavailable ({exc})"
    if res.failures:
        persist.write_failures(out / "failures.csv", res.failures)
    return summary


def cmd_spacing(cfg: dict) -> dict:
    out = _out_dir(cfg)
    meta = _base_meta(cfg)
    res = _run_campaign(cfg)
    acc = dichotomy_analysis(res.eigenvalues)
    summary = {"realizations_done": res.n_realizations}
    for wi, w in enumerate(acc.windows):
        edges, dens = acc.density(wi)
        persist.write_histogram_csv(out / f"spacing_{w.name}.csv", edges, dens,
                                    acc.counts[wi], {**meta, "window": w.name})
        summary[f"delta_poisson_{w.name}"] = f"{rms_deviation(edges, dens, 'poisson'):.4f}"
        summary[f"delta_wigner_{w.name}"] = f"{rms_deviation(edges, dens, 'wigner'):.4f}"
        summary[f"spacings_{w.name}"] = int(acc.totals[wi])
    persist.save_spacing_accumulator(out / "spacing_state.npz", acc, meta)
    if res.failures:
        persist.write_failures(out / "failures.csv", res.failures)
    return summary


def cmd_transition(cfg: dict) -> dict:
    out = _out_dir(cfg)
    meta = _base_meta(cfg)
    res = _run_campaign(cfg)
    result, acc = transition_analysis(
        res.eigenvalues, cfg["window_abs_min"], cfg["window_abs_max"],
        cfg["n_windows"], cfg["min_spacings_per_window"],
        cfg["interpolation_degree"])
    persist.save_spacing_accumulator(out / "spacing_state.npz", acc, meta)
    for side in ("plus", "minus"):
        c = result.curves[side]
        persist.write_histogram_csv(
            out / f"delta_curves_{side}.csv",
            np.append(c["centers_abs"], c["centers_abs"][-1] + 1),
            c["delta_poisson"], np.zeros(len(c["centers_abs"]), dtype=int),
            {**meta, "columns": "center_abs,delta_poisson", "side": side})
    summary = {
        "realizations_done": res.n_realizations,
        "lambda_tr_minus": result.lambda_minus,
        "lambda_tr_plus": result.lambda_plus,
        "dominant_minus": result.dominant_minus,
        "dominant_plus": result.dominant_plus,
        "interpolation_degree": result.poly_degree,
    }
    if res.failures:
        persist.write_failures(out / "failures.csv", res.failures)
    return summary


def cmd_locator(cfg: dict) -> dict:
    out = _out_dir(cfg)
    meta = _base_meta(cfg)
    settings = SolverSettings(eps_schedule=tuple(cfg["eps_schedule"]))
    grid = np.linspace(cfg["lambda_min"], cfg["lambda_max"], cfg["lambda_points"])
    rb = cfg["blockade_radius"]
    if cfg["locator_method"] == "low":
        sol = solve_low(cfg["locator_order"], rb, grid, settings)
    elif cfg["locator_method"] == "high":
        sol = solve_high(rb, grid, settings)
    else:
        raise ConfigError("config.locator_method: must be 'low' or 'high'")
    name = f"locator_{cfg['locator_method']}_order{sol.order}_rb{rb}.csv"
    persist.write_curve_csv(out / name, sol.lambda_grid, sol.g_values.real,
                            sol.g_values.imag, sol.dos, sol.residuals,
                            sol.epsilon, {**meta, "method": sol.method,
                                          "order": sol.order,
                                          "blockade_radius": rb})
    return {
        "method": sol.method,
        "order": sol.order,
        "epsilon_final": sol.epsilon,
        "eps_stable": sol.diagnostics.get("eps_stable"),
        "eps_stability_rel": f"{sol.diagnostics.get('eps_stability_rel', float('nan')):.4g}",
        "points_converged": int(sol.converged.sum()),
        "points_total": int(sol.converged.size),
        "cma_points": sol.diagnostics.get("cma_points", 0),
        "curve_file": name,
    }


def cmd_tabulate_analytic(cfg: dict) -> dict:
    out = _out_dir(cfg)
    meta = _base_meta(cfg)
    params = GeometryParams(cfg["n_atoms"], cfg["blockade_radius"])
    table = cfg["table"]
    x = np.linspace(cfg["table_min"], cfg["table_max"], cfg["table_points"])
    if table == "coupling_pdf":
        y = analytic.coupling_pdf(x, params)
    elif table == "pair_distance_pdf":
        y = analytic.pair_distance_pdf(x, params)
    elif table == "semicircle":
        y = analytic.semicircle(x, analytic.lambda_w(params))
    elif table == "poisson_spacing":
        y = analytic.poisson_spacing(np.clip(x, 0, None))
    elif table == "wigner_spacing":
        y = analytic.wigner_spacing(np.clip(x, 0, None))
    else:
        raise ConfigError(f"config.table: unknown table {table!r}")
    path = out / f"{table}.csv"
    with path.open("w") as fh:
        fh.write(f"# schema_version={persist.SCHEMA_VERSION}\n")
        for key, val in meta.items():
            fh.write(f"# {key}={val}\n")
        fh.write(f"# n_atoms={cfg['n_atoms']} blockade_radius={cfg['blockade_radius']}\n")
        fh.write("x,density\n")
        for xv, yv in zip(x, y):
            fh.write(f"{xv:.12g},{yv:.12g}\n")
    return {"table": table, "points": len(x), "file": str(path.name)}


_PHYSICAL_KEYS = ("kind", "n_atoms", "blockade_radius", "window")


def cmd_compare(cfg: dict) -> dict:
    if len(cfg["inputs"]) != 2:
        raise ConfigError("config.inputs: compare needs exactly two files")
    meta_a, cols_a = persist.read_csv_with_meta(cfg["inputs"][0])
    meta_b, cols_b = persist.read_csv_with_meta(cfg["inputs"][1])
    for key in _PHYSICAL_KEYS:
        if key in meta_a and key in meta_b and meta_a[key] != meta_b[key]:
            raise ConfigError(
                f"compare: physical parameter mismatch on {key!r} "
                f"({meta_a[key]} vs {meta_b[key]})")

    def curve(cols):
        if "lambda" in cols:
            return cols["lambda"], cols["dos"]
        if "x" in cols:
            return cols["x"], cols["density"]
        mid = 0.5 * (cols["bin_left"] + cols["bin_right"])
        return mid, cols["density"]

    xa, ya = curve(cols_a)
    xb, yb = curve(cols_b)
    lo = max(xa.min(), xb.min())
    hi = min(xa.max(), xb.max())
    if not lo < hi:
        raise ConfigError("compare: curves do not overlap")
    grid = np.linspace(lo, hi, 501)
    fa = np.interp(grid, xa, ya)
    fb = np.interp(grid, xb, yb)
    out = _out_dir(cfg)
    path = out / "compare.csv"
    with path.open("w") as fh:
        fh.write(f"# schema_version={persist.SCHEMA_VERSION}\n")
        fh.write(f"# config_hash={persist.config_hash(cfg)}\n")
        fh.write("x,curve_a,curve_b\n")
        for row in zip(grid, fa, fb):
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
    scale = max(fa.max(), fb.max())
    return {
        "overlap_range": f"[{lo:.6g}, {hi:.6g}]",
        "max_abs_difference": f"{np.max(np.abs(fa - fb)):.6g}",
        "max_relative_to_peak": f"{np.max(np.abs(fa - fb)) / scale:.6g}",
        "file": str(path.name),
    }


def cmd_merge(cfg: dict) -> dict:
    if len(cfg["inputs"]) < 1:
        raise ConfigError("config.inputs: merge needs at least one state file")
    first_path = cfg["inputs"][0]
    kind = "spectrum"
    try:
        acc, meta = persist.load_spectrum_accumulator(first_path)
    except ValueError:
        acc, meta = persist.load_spacing_accumulator(first_path)
        kind = "spacing"
    seeds = {meta.get("seed")}
    for other_path in cfg["inputs"][1:]:
        if kind == "spectrum":
            other, other_meta = persist.load_spectrum_accumulator(other_path)
        else:
            other, other_meta = persist.load_spacing_accumulator(other_path)
        for key in _PHYSICAL_KEYS:
            if meta.get(key) != other_meta.get(key):
                raise ConfigError(
                    f"merge: ensemble mismatch on {key!r} between shards")
        seeds.add(other_meta.get("seed"))
        acc = acc.merge(other)
    out = _out_dir(cfg)
    summary = {"inputs": len(cfg["inputs"]), "kind": kind}
    if None not in seeds and len(seeds) < len(cfg["inputs"]):
        summary["warning"] = "duplicate seeds among shards"
    meta_out = {**meta, "merged_from": len(cfg["inputs"])}
    if kind == "spectrum":
        persist.save_spectrum_accumulator(out / "merged_state.npz", acc, meta_out)
        edges, dens, counts, tail_mass = acc.dos_density()
        persist.write_histogram_csv(out / "merged_dos.csv", edges, dens, counts,
                                    {"config_hash": persist.config_hash(cfg),
                                     **{k: meta.get(k) for k in _PHYSICAL_KEYS
                                        if meta.get(k) is not None},
                                     "tail_mass": tail_mass})
        summary["pooled_eigenvalues"] = acc.n_eigenvalues
        summary["realizations"] = acc.n_realizations
    else:
        persist.save_spacing_accumulator(out / "merged_state.npz", acc, meta_out)
        summary["total_spacings"] = int(acc.totals.sum())
    return summary


_DISPATCH = {
    "spectra": cmd_spectra,
    "spacing": cmd_spacing,
    "transition": cmd_transition,
    "locator": cmd_locator,
    "tabulate-analytic": cmd_tabulate_analytic,
    "compare": cmd_compare,
    "merge": cmd_merge,
}


def run(cfg: dict) -> dict:
    """Execute a validated config; returns the summary dict and writes the
    run summary plus artifacts under the output directory."""
    t0 = time.monotonic()
    summary = _DISPATCH[cfg["command"]](cfg)
    wall = time.monotonic() - t0
    out = _out_dir(cfg)
    doc = {
        "command": cfg["command"],
        "config_hash": persist.config_hash(cfg),
        "config_json": json.dumps(cfg, sort_keys=True),
        "wall_time_s": f"{wall:.3f}",
        **summary,
    }
    persist.write_summary(out / "run_summary.txt", doc)
    return doc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rydspec",
        description="spectral-statistics campaigns for frozen dipolar gases")
    parser.add_argument("command", nargs="?", default=None,
                        help=f"override config command; one of {', '.join(COMMANDS)}")
    parser.add_argument("--config", required=True, help="path to JSON config")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--realizations", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    overrides = {
        "command": args.command,
        "seed": args.seed,
        "realizations": args.realizations,
        "workers": args.workers,
        "out_dir": args.out,
    }
    try:
        cfg = load_config(args.config, overrides)
        doc = run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for key, val in doc.items():
        if key != "config_json":
            print(f"{key} = {val}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

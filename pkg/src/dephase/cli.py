"""Experiment runner CLI.

Subcommands:

    dephase simulate  --config PATH [--out DIR] [--seed N]
    dephase picard    --config PATH [--out DIR]
    dephase particles --config PATH [--out DIR] [--seed N]
    dephase estimates RUN_DIR [--refined RUN_DIR] [--out DIR]
    dephase sweep     --config PATH --param NAME --values V1,V2,... [--out DIR]
                      [--threads N]

Common flags can also come from the environment: DEPHASE_OUT, DEPHASE_SEED,
DEPHASE_THREADS (a flag beats the environment, which beats the config file).

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.

Config file schema (TOML, or JSON with the same keys) is documented in
`dephase.config`; the canonical copy of the ingested config is written to
every run directory as config.json.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_from_dict, load_config
from .core import ConfigError, NumericalError, mixed_to_spectral
from .estimates import (
    check_L_continuity,
    check_nesting,
    extract_h_infinity,
    fit_decay,
    mode_decay_ratios,
)
from .io import (
    build_manifest,
    read_field_bin,
    read_json,
    read_order_csv,
    write_field_bin,
    write_field_csv,
    write_json,
    write_order_csv,
)
from .norms import norm_lambda_p
from .picard import fixed_point_check, iterate
from .particles import particle_run
from .solver import run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _env_default(name: str, fallback=None):
    return os.environ.get(f"DEPHASE_{name}", fallback)


def _resolve_out(args, config: RunConfig) -> Path:
    out = args.out or _env_default("OUT") or config.out_dir
    if out is None:
        raise ConfigError(
            "no output directory: pass --out, set DEPHASE_OUT, or set "
            "[output] directory in the config"
        )
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    seed = args.seed if getattr(args, "seed", None) is not None else _env_default("SEED")
    if seed is not None:
        config = config.replace(seed=int(seed))
    return config


def _write_run_outputs(out: Path, config: RunConfig, result, command: str, t0: float) -> list:
    files = []
    order_path = out / "order.csv"
    write_order_csv(order_path, result.series)
    files.append(order_path)

    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for i, field in enumerate(result.snapshots):
        bin_path = snap_dir / f"snap_{i:04d}.bin"
        write_field_bin(bin_path, field)
        files.append(bin_path)
        if config.write_csv_snapshots:
            csv_path = snap_dir / f"snap_{i:04d}.csv"
            write_field_csv(csv_path, field)
            files.append(csv_path)

    config_path = out / "config.json"
    write_json(config_path, config.canonical_dict())
    files.append(config_path)

    diag = result.diagnostics
    checks = {
        "mass_conserved": bool(diag["mass_drift_max"] <= 1e-10),
        "mode_zero_conserved": bool(diag["mode_zero_drift_max"] <= 1e-12),
        "reality_drift_ok": bool(diag["reality_drift_max"] <= 1e-12),
        "richardson_ok": diag["richardson_ok"],
        "richardson_ratio": diag["richardson_ratio"],
        "richardson_rel_defect": diag["richardson_rel_defect"],
        "mass_drift_max": diag["mass_drift_max"],
        "reality_drift_max": diag["reality_drift_max"],
        "mode_zero_drift_max": diag["mode_zero_drift_max"],
        "truncation_tail_mass": diag["truncation_tail_mass"],
    }
    manifest = build_manifest(
        config_hash=config.config_hash(),
        tool_version=__version__,
        command=command,
        wall_clock_s=time.monotonic() - t0,
        out_dir=out,
        files=files,
        checks=checks,
    )
    write_json(out / "manifest.json", manifest.as_dict())
    return files


def cmd_simulate(args) -> int:
    t0 = time.monotonic()
    config = _apply_overrides(load_config(args.config), args)
    out = _resolve_out(args, config)
    result = run(config)
    _write_run_outputs(out, config, result, "simulate", t0)
    print(f"simulate: wrote {out} (R(0) = {result.series.R[0]:.6g})")
    return EXIT_OK


def cmd_picard(args) -> int:
    t0 = time.monotonic()
    config = _apply_overrides(load_config(args.config), args)
    out = _resolve_out(args, config)
    result = iterate(config)
    log = []
    for rec in result.records:
        log.append(
            {
                "n": rec.n,
                "delta_z": rec.delta_z,
                "delta_h": rec.delta_h,
                "triple_norm_h": rec.triple_norm_h,
                "triple_norm_R": rec.triple_norm_R,
            }
        )
    last = result.last
    payload = {
        "converged": result.converged,
        "iterations": log,
        "fixed_point_residual": fixed_point_check(last) if result.converged else None,
    }
    write_json(out / "picard.json", payload)
    write_order_csv(out / "order.csv", last.z_series)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for i, field in enumerate(last.h_trajectory):
        write_field_bin(snap_dir / f"snap_{i:04d}.bin", field)
    write_json(out / "config.json", config.canonical_dict())
    if not result.converged:
        print(
            f"picard: NOT converged after {len(result.records)} iterations "
            f"(delta_z = {last.delta_z:.3e}); see {out / 'picard.json'}",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    print(f"picard: converged in {len(result.records)} iterations, wrote {out}")
    return EXIT_OK


def cmd_particles(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out = _resolve_out(args, config)
    dt = config.particles_dt or config.dt
    t_max = config.particles_t_max or config.t_max
    series = particle_run(config.initial, config.particles_n, config.mu, dt, t_max, config.seed)
    write_order_csv(out / "order_particle.csv", series)
    write_json(out / "config.json", config.canonical_dict())
    print(f"particles: wrote {out} (n = {config.particles_n}, seed = {config.seed})")
    return EXIT_OK


def _load_run_dir(run_dir: Path):
    config_path = run_dir / "config.json"
    order_path = run_dir / "order.csv"
    manifest_path = run_dir / "manifest.json"
    missing = [str(p.name) for p in (config_path, order_path) if not p.exists()]
    if missing:
        raise ConfigError(f"run directory {run_dir} is missing {missing}")
    config = config_from_dict(read_json(config_path))
    series = read_order_csv(order_path)
    snap_dir = run_dir / "snapshots"
    found = sorted(snap_dir.glob("snap_*.bin")) if snap_dir.exists() else []
    if manifest_path.exists():
        manifest = read_json(manifest_path)
        expected = sorted(
            e["path"] for e in manifest["outputs"] if e["path"].endswith(".bin")
        )
        got = sorted(str(p.relative_to(run_dir)) for p in found)
        if expected != got:
            missing_files = sorted(set(expected) - set(got))
            extra = sorted(set(got) - set(expected))
            raise ConfigError(
                f"snapshot inventory mismatch in {run_dir}: "
                f"missing {missing_files}, unexpected {extra}"
            )
    if not found:
        raise ConfigError(f"run directory {run_dir} has no snapshots")
    snapshots = [read_field_bin(p) for p in found]
    return config, series, snapshots


def _estimates_payload(config: RunConfig, series, snapshots) -> dict:
    import math

    from .estimates import check_apriori_R
    from .norms import build_norm_report, norm_lambda_p

    lam = config.estimates_lam
    p = config.estimates_p
    params = config.weight_params
    window = config.fit_window
    fit = fit_decay(series, window)
    track = check_L_continuity(snapshots, series, config.eta_grid, lam, p)
    hinf = extract_h_infinity(snapshots, config.eta_grid, params.gamma)
    spectral = [mixed_to_spectral(f, config.eta_grid) for f in snapshots]
    lam0 = params.lambda0
    pairs = [(0.25 * lam0, 0.75 * lam0), (0.1 * lam0, 0.5 * lam0)]
    nesting = check_nesting(spectral, pairs, p=1.0)
    ratios = mode_decay_ratios(snapshots[-1])
    f0_norm, _ = norm_lambda_p(spectral[0], lam, params.gamma)
    apriori = check_apriori_R(
        series, snapshots, config.eta_grid, f0_norm, params, mu=config.mu, lam=lam
    )
    budget_limit = lam0 - params.a * math.pi / 2.0
    return {
        "decay_fit": {
            "name": "decay_fit",
            "window": list(window),
            "slope": fit.slope,
            "rate": fit.rate,
            "r2": fit.r_squared,
            "n_used": fit.n_used,
            "flagged": fit.flagged,
            "budget_limit_rate": budget_limit,
        },
        "L_continuity": {
            "name": "L_continuity",
            "max_ratio": track.running_max,
            "argmax_t": track.argmax_t,
            "lam": lam,
            "p": p,
        },
        "apriori_R": {
            "name": "apriori_R",
            "max_ratio": apriori.running_max,
            "argmax_t": apriori.argmax_t,
            "lam": lam,
        },
        "h_infinity": hinf.as_dict(),
        "nesting": {
            "name": "nesting",
            "max_ratio": nesting.running_max,
            "violations": 0,
        },
        "mode_decay": {
            "name": "mode_decay",
            "max_consecutive_ratio": float(np.max(ratios)) if ratios.size else 0.0,
        },
        "final_norms": build_norm_report(spectral[-1], params, p_values=(1.0, params.gamma)).as_dict(),
    }


def cmd_estimates(args) -> int:
    run_dir = Path(args.run_dir)
    config, series, snapshots = _load_run_dir(run_dir)
    payload = _estimates_payload(config, series, snapshots)
    if args.refined:
        ref_config, ref_series, ref_snapshots = _load_run_dir(Path(args.refined))
        refined = _estimates_payload(ref_config, ref_series, ref_snapshots)
        base_max = payload["L_continuity"]["max_ratio"]
        ref_max = refined["L_continuity"]["max_ratio"]
        payload["refinement_stability"] = {
            "base_max_ratio": base_max,
            "refined_max_ratio": ref_max,
            "relative_change": abs(ref_max - base_max) / max(base_max, 1e-300),
            "rate_change": abs(
                payload["decay_fit"]["rate"] - refined["decay_fit"]["rate"]
            ),
        }
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "estimates_report.json", payload)
    print(f"estimates: wrote {out / 'estimates_report.json'}")
    return EXIT_OK


_SWEEPABLE = ("mu", "epsilon", "dt", "k_max")


def _sweep_variant(config: RunConfig, param: str, value: float) -> RunConfig:
    if param == "mu":
        return config.replace(mu=float(value))
    if param == "dt":
        return config.replace(dt=float(value))
    if param == "k_max":
        return config.replace(k_max=int(value))
    if param == "epsilon":
        perts = list(config.initial.perturbations)
        if not perts:
            raise ConfigError("epsilon sweep needs at least one perturbation mode")
        k0, eps0 = perts[0]
        phase = eps0 / abs(eps0) if abs(eps0) > 0 else 1.0
        perts[0] = (k0, phase * float(value))
        initial = dataclasses.replace(config.initial, perturbations=tuple(perts))
        return config.replace(initial=initial)
    raise ConfigError(f"sweep parameter must be one of {_SWEEPABLE}, got {param!r}")


def _sweep_row(payload) -> dict:
    config, param, value, out_dir = payload
    row = {"param": param, "value": value, "status": "ok", "rate": None, "r2": None,
           "max_ratio": None, "error": ""}
    try:
        variant = _sweep_variant(config, param, value)
        variant.validate()
        result = run(variant)
        t0 = time.monotonic()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_run_outputs(out, variant, result, f"sweep:{param}={value}", t0)
        window = variant.fit_window
        fit = fit_decay(result.series, window)
        track = check_L_continuity(
            result.snapshots, result.series, variant.eta_grid,
            variant.estimates_lam, variant.estimates_p,
        )
        row.update(rate=fit.rate, r2=fit.r_squared, max_ratio=track.running_max)
    except (ConfigError, NumericalError) as exc:
        row.update(status="failed", error=str(exc))
    return row


def cmd_sweep(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out = _resolve_out(args, config)
    values = [v for v in (args.values or "").split(",") if v != ""]
    if not values:
        raise ConfigError("sweep needs a non-empty --values list")
    if args.param not in _SWEEPABLE:
        raise ConfigError(f"sweep parameter must be one of {_SWEEPABLE}, got {args.param!r}")
    values = [float(v) for v in values]
    threads = int(args.threads or _env_default("THREADS") or 1)

    jobs = [
        (config, args.param, v, str(out / f"{args.param}_{i:02d}"))
        for i, v in enumerate(values)
    ]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]

    lines = ["param,value,status,rate,r2,max_ratio,error"]
    for r in rows:
        def _cell(x):
            return "" if x is None else format(x, ".17g") if isinstance(x, float) else str(x)
        lines.append(
            ",".join(
                [r["param"], _cell(r["value"]), r["status"], _cell(r["rate"]),
                 _cell(r["r2"]), _cell(r["max_ratio"]),
                 r["error"].replace(",", ";").replace("\n", " ")]
            )
        )
    (out / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    rates = [r["rate"] for r in rows if r["rate"] is not None]
    trend = None
    if len(rates) >= 2:
        diffs = np.diff(rates)
        trend = "increasing" if np.all(diffs > 0) else (
            "decreasing" if np.all(diffs < 0) else "mixed")
    write_json(out / "sweep_summary.json", {"rows": rows, "rate_trend": trend})
    print(f"sweep: {len(rows)} rows -> {out / 'sweep_summary.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dephase",
        description="Spectral simulator and verification suite for mean-field "
        "oscillator dephasing",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--out", help="output directory (or DEPHASE_OUT)")
        p.add_argument("--seed", type=int, help="RNG seed override (or DEPHASE_SEED)")
        p.add_argument("--threads", type=int, help="worker count (or DEPHASE_THREADS)")

    p_sim = sub.add_parser("simulate", help="run the nonlinear solver")
    _common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_pic = sub.add_parser("picard", help="run the alternating linear-solve construction")
    _common(p_pic)
    p_pic.set_defaults(func=cmd_picard)

    p_par = sub.add_parser("particles", help="run the finite-N oscillator oracle")
    _common(p_par)
    p_par.set_defaults(func=cmd_particles)

    p_est = sub.add_parser("estimates", help="post-process a run directory")
    p_est.add_argument("run_dir", help="directory written by `dephase simulate`")
    p_est.add_argument("--refined", help="refined run directory for stability ratios")
    p_est.add_argument("--out", help="report directory (default: run_dir)")
    p_est.set_defaults(func=cmd_estimates)

    p_sw = sub.add_parser("sweep", help="independent runs over one parameter")
    _common(p_sw)
    p_sw.add_argument("--param", required=True, help=f"one of {', '.join(_SWEEPABLE)}")
    p_sw.add_argument("--values", required=True, help="comma-separated values")
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; remap to the config/usage code
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())

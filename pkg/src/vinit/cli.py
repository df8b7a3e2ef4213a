"""Command line front end.

Exit codes: 0 success, 1 numerical failure (rank deficiency, divergence,
ill-conditioned filter), 2 bad input (missing files, malformed data or
configuration). Log verbosity comes from the ``VINIT_LOG`` environment
variable (DEBUG, INFO, WARNING, ...).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import DatasetBundle, KeyframeTruth
from .dataio import (ALIASES, RunConfig, coerce_value, load_config, load_dataset, load_groundtruth,
                     load_trajectory, parse_config, parse_seeds, serialize_config, tomllib,
                     with_value, write_dataset, write_trajectory)
from .eskf import estimate_gyro_bias, initial_covariance
from .errors import ConfigError, NumericalError
from .metrics import (EvalReport, Estimate, evaluate, median_row, metric_body_positions, rotation_rmse,
                      rows_to_csv, scale_error)
from .pipeline import PipelineResult, run_bundle
from .simulate import NoiseConfig, simulate_dataset

log = logging.getLogger("vinit")

MEMS_IMU_NOISE = dict(gyro_noise_std=1.7e-4, gyro_walk_std=2e-5, accel_noise_std=2e-3, accel_walk_std=3e-3)
BIAS_TRUE = dict(bg_true=(0.01, -0.02, 0.015), ba_true=(0.05, -0.03, 0.02))
SEEDS_20 = tuple(range(1, 21))


def _preset_table3() -> RunConfig:
    return RunConfig(noise=NoiseConfig(**MEMS_IMU_NOISE, **BIAS_TRUE), s_true=2.0, seeds=SEEDS_20)


def _preset_table5() -> RunConfig:
    cfg = RunConfig(noise=NoiseConfig(**MEMS_IMU_NOISE, rot_obs_noise_std=0.1), s_true=2.0, seeds=SEEDS_20,
                    sweep={"rot_obs_noise_std": (0.1,)})
    return replace(cfg, pipeline=replace(cfg.pipeline, obs_noise_std=0.1, p0_theta_var=0.01))


def _preset_exact() -> RunConfig:
    return RunConfig(seeds=(1,), sweep={"s_true": (0.5, 1.0, 2.0, 5.0)})


PRESETS = {
    "table3": (_preset_table3, "IMU noise at typical MEMS levels with constant biases, 20 seeds"),
    "table5": (_preset_table5, "0.1 rad rotation noise injected into observations, 20 seeds"),
    "exact": (_preset_exact, "noise-free data, s_true in {0.5, 1, 2, 5}"),
}


def setup_logging() -> None:
    level = os.environ.get("VINIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def resolve_config(args, dataset_dir=None) -> RunConfig:
    """Preset, then config file (dataset snapshot when none is given), then
    command line overrides."""
    cfg = RunConfig()
    if getattr(args, "preset", None):
        cfg = PRESETS[args.preset][0]()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    elif dataset_dir is not None and (Path(dataset_dir) / "config.toml").is_file():
        cfg = load_config(Path(dataset_dir) / "config.toml", base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, inputs: dict, outputs: dict,
                   seeds=(), timings_us: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": serialize_config(cfg),
        "inputs": {k: {"path": str(p), "sha256": sha256(p)} for k, p in inputs.items()},
        "seeds": list(seeds),
        "timings_us": timings_us or {},
        "outputs": {k: str(p) for k, p in outputs.items()},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------- simulate

def simulate_bundle(cfg: RunConfig) -> DatasetBundle:
    traj = cfg.trajectory
    need = cfg.pipeline.window_size / traj.keyframe_rate
    if traj.duration < need:
        traj = replace(traj, duration=need)
    return simulate_dataset(traj, cfg.noise, cfg.s_true, cfg.extrinsics)


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    bundle = simulate_bundle(cfg)
    paths = write_dataset(out, bundle, cfg)
    write_manifest(out, "simulate", cfg, {}, paths, seeds=[cfg.trajectory.seed])
    print(f"wrote {len(bundle.imu)} IMU samples and {len(bundle.track)} keyframes to {out}")
    return 0


# ---------------------------------------------------------------- init

def solution_dict(result: PipelineResult, t0_ns: int = 0) -> dict:
    ref, lin = result.refined, result.linear
    return {
        "t0_ns": int(t0_ns),
        "times": result.track.times.tolist(),
        "s": ref.s,
        "g_w": ref.g_w.tolist(),
        "w1": ref.w1,
        "w2": ref.w2,
        "bg": np.asarray(result.bg).tolist(),
        "ba": ref.ba.tolist(),
        "v": ref.v.tolist(),
        "linear": {"s": lin.s, "g_w": lin.g_w.tolist(), "v": lin.v.tolist()},
    }


def estimate_from_result(result: PipelineResult, extrinsics) -> Estimate:
    ref = result.refined
    track = result.track
    return Estimate(
        times=track.times, R_wb=track.R_wb,
        p_wb=metric_body_positions(ref.s, track.p_wc_bar, track.R_wb, extrinsics),
        v_wb=ref.v, g_w=ref.g_w, s=ref.s, bg=np.asarray(result.bg), ba=ref.ba,
    )


def cmd_init(args) -> int:
    cfg = resolve_config(args, args.dataset)
    bundle = load_dataset(args.dataset, imu_path=args.imu, keyframes_path=args.keyframes,
                          extrinsics=cfg.extrinsics)
    result = run_bundle(bundle, cfg.pipeline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = estimate_from_result(result, bundle.extrinsics)
    outputs = {"solution": out / "solution.json", "timings": out / "timings.json",
               "rotations": out / "rotations.txt"}
    _dump(outputs["solution"], solution_dict(result, bundle.imu.t0_ns))
    _dump(outputs["timings"], result.timings_us)
    write_trajectory(outputs["rotations"], est.times, est.p_wb, est.R_wb, bundle.imu.t0_ns)
    root = Path(args.dataset) if args.dataset else None
    inputs = {
        "imu": Path(args.imu) if args.imu else root / "imu.csv",
        "keyframes": Path(args.keyframes) if args.keyframes else root / "keyframes.txt",
    }
    write_manifest(out, "init", cfg, inputs, outputs, timings_us=result.timings_us)
    print(f"s = {result.refined.s:.6f}  (linear {result.linear.s:.6f}); "
          f"steps 1-3 took {result.timings_us['total']:.0f} us")
    return 0


# ---------------------------------------------------------------- eval

def load_estimate(solution_dir) -> tuple[Estimate, int]:
    d = Path(solution_dir)
    sol_path = d / "solution.json"
    if not sol_path.is_file():
        raise FileNotFoundError(f"missing solution file: {sol_path}")
    sol = json.loads(sol_path.read_text())
    t0_ns = int(sol.get("t0_ns", 0))
    traj = load_trajectory(d / "rotations.txt", t0_ns)
    try:
        est = Estimate(
            times=traj.t, R_wb=traj.R, p_wb=traj.p, v_wb=np.asarray(sol["v"], dtype=float),
            g_w=np.asarray(sol["g_w"], dtype=float), s=float(sol["s"]),
            bg=np.asarray(sol["bg"], dtype=float), ba=np.asarray(sol["ba"], dtype=float),
        )
    except KeyError as exc:
        raise ValueError(f"{sol_path}: missing field {exc}") from None
    if len(est.v_wb) != len(est.times):
        raise ValueError(f"{sol_path}: {len(est.v_wb)} velocities for {len(est.times)} keyframes")
    return est, t0_ns


def _groundtruth_for(solution_dir, explicit, t0_ns) -> KeyframeTruth:
    if explicit:
        p = Path(explicit)
    else:
        mf = Path(solution_dir) / "manifest.json"
        if not mf.is_file():
            raise ValueError(f"no --groundtruth given and {mf} does not name the dataset")
        kf = json.loads(mf.read_text())["inputs"]["keyframes"]["path"]
        p = Path(kf).parent
    if p.is_dir():
        p = p / "groundtruth.txt"
    if not p.is_file():
        raise FileNotFoundError(f"missing ground-truth file: {p}")
    return load_groundtruth(p, t0_ns, p.parent / "truth.json")


def cmd_eval(args) -> int:
    rows = []
    reports = []
    # label runs by directory name so reports do not depend on where they live
    names = [Path(d).resolve().name for d in args.solutions]
    labels = names if len(set(names)) == len(names) else [str(d) for d in args.solutions]
    for sol_dir, label in zip(args.solutions, labels):
        est, t0_ns = load_estimate(sol_dir)
        truth = _groundtruth_for(sol_dir, args.groundtruth, t0_ns)
        rep = evaluate(est, truth, remove_rotation_offset=not args.no_offset)
        reports.append(rep)
        rows.append({"run": label, **rep.to_dict()})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    body = reports[0].to_dict() if len(reports) == 1 else {"runs": rows}
    (out / "report.json").write_text(json.dumps(body, indent=2) + "\n")
    cols = ["run"] + EvalReport.columns()
    (out / "report.csv").write_text(rows_to_csv(rows, cols, with_median=len(rows) > 1, label_column="run"))
    for r in rows:
        print(f"{r['run']}: scale error {r['scale_error_pct']:.4f}%  rot rmse {r['rot_rmse']:.4g} rad  "
              f"ATE {r['ate']:.4g} m")
    return 0


# ---------------------------------------------------------------- sweep

CELL_METRICS = ["status", "scale_error_pct", "scale_error_direct_pct", "linear_scale_error_pct",
                "grav_angle_err", "rot_rmse", "obs_rot_rmse", "ate", "v_rmse", "bg_err", "ba_err"]


def run_cell(cfg: RunConfig) -> dict:
    """Simulate, estimate and score one configuration. Numerical failures
    are reported in ``status``; rotation metrics still come from the
    filter."""
    bundle = simulate_bundle(cfg)
    truth = bundle.truth.head(cfg.pipeline.window_size)
    track = bundle.track.head(cfg.pipeline.window_size)
    row = {k: None for k in CELL_METRICS}
    row["obs_rot_rmse"] = rotation_rmse(track.R_wb, truth.R_wb)
    try:
        result = run_bundle(bundle, cfg.pipeline)
    except NumericalError as exc:
        row["status"] = f"{type(exc).__name__}@{getattr(exc, 'stage', '?')}"
        try:
            p = cfg.pipeline
            _, rots = estimate_gyro_bias(track, bundle.imu, p.eskf_noise(),
                                         initial_covariance(p.p0_theta_var, p.p0_bg_var))
            row["rot_rmse"] = rotation_rmse(rots, truth.R_wb)
        except NumericalError:
            pass
        return row
    rep = evaluate(estimate_from_result(result, bundle.extrinsics), truth)
    row.update({k: v for k, v in rep.to_dict().items() if k in row})
    row["status"] = "ok"
    row["linear_scale_error_pct"] = scale_error(result.linear.s / cfg.s_true)
    row["_timing_total_us"] = result.timings_us["total"]
    return row


def _cell_worker(cfg_text: str) -> dict:
    return run_cell(parse_config(cfg_text))


def expand_cells(cfg: RunConfig, seeds) -> list[tuple[dict, RunConfig]]:
    """Cross product of sweep axes (in key order) and seeds, seeds fastest."""
    keys = list(cfg.sweep)
    cells = []
    for combo in product(*(cfg.sweep[k] for k in keys)):
        base = cfg
        for k, v in zip(keys, combo):
            base = with_value(base, k, v)
        for seed in seeds:
            cells.append(({**dict(zip(keys, combo)), "seed": seed}, base.with_seed(seed)))
    return cells


def run_sweep(cfg: RunConfig, seeds, workers: int = 1):
    cells = expand_cells(cfg, seeds)
    texts = [serialize_config(replace(c, sweep={}, seeds=())) for _, c in cells]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_worker, texts, chunksize=max(1, len(cells) // (4 * workers))))
    else:
        results = [_cell_worker(t) for t in texts]
    rows = []
    timings = []
    for i, ((axes, _), res) in enumerate(zip(cells, results)):
        t = res.pop("_timing_total_us", None)
        if t is not None:
            timings.append(t)
        rows.append({"cell": i, **axes, **res})
    return rows, timings


def summarize(rows: list[dict], axis_keys: list[str]) -> list[dict]:
    """One row per axis combination with medians over its seeds."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in axis_keys), []).append(r)
    metric_cols = [c for c in CELL_METRICS if c != "status"]
    out = []
    for key, members in groups.items():
        ok = [m for m in members if m["status"] == "ok"]
        med = median_row(members, metric_cols)
        # failed cells only contribute filter metrics
        for c in metric_cols:
            if c not in ("rot_rmse", "obs_rot_rmse"):
                med[c] = median_row(ok, [c])[c] if ok else None
        improved = [m for m in members if m["rot_rmse"] is not None and m["rot_rmse"] < m["obs_rot_rmse"]]
        out.append({**dict(zip(axis_keys, key)), "n": len(members), "n_ok": len(ok),
                    "frac_rot_improved": len(improved) / len(members), **med})
    return out


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    sweep = dict(cfg.sweep)
    for spec in args.axis or []:
        key, sep, vals = spec.partition("=")
        if not sep or not vals:
            raise ConfigError(f"bad --axis {spec!r}; expected key=v1,v2,...")
        try:
            raw = tomllib.loads(f"x = [{vals}]")["x"]
        except tomllib.TOMLDecodeError:
            raise ConfigError(f"bad --axis values {vals!r}") from None
        if not raw:
            raise ConfigError(f"axis {key!r} has no values")
        sweep[key.strip()] = tuple(coerce_value(key.strip(), v) for v in raw)
    sweep = {ALIASES.get(k, k): v for k, v in sweep.items()}
    for k in sweep:
        with_value(cfg, k, sweep[k][0])  # validates the key
    seeds = parse_seeds(args.seeds) if args.seeds else (cfg.seeds or (cfg.trajectory.seed,))
    cfg = replace(cfg, sweep=sweep, seeds=tuple(seeds))
    workers = args.workers if args.workers is not None else min(4, os.cpu_count() or 1)
    rows, timings = run_sweep(cfg, seeds, workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    axis_keys = list(sweep)
    cell_cols = ["cell"] + axis_keys + ["seed"] + CELL_METRICS
    outputs = {"cells": out / "cells.csv", "summary": out / "summary.csv"}
    outputs["cells"].write_text(rows_to_csv(rows, cell_cols))
    summary = summarize(rows, axis_keys)
    sum_cols = axis_keys + ["n", "n_ok", "frac_rot_improved"] + [c for c in CELL_METRICS if c != "status"]
    outputs["summary"].write_text(rows_to_csv(summary, sum_cols))
    med_t = float(np.median(timings)) if timings else None
    write_manifest(out, "sweep", cfg, {}, outputs, seeds=seeds, timings_us={"median_total": med_t})
    n_ok = sum(r["status"] == "ok" for r in rows)
    print(f"{len(rows)} cells ({n_ok} ok) -> {outputs['cells']}")
    return 0


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    presets = "; ".join(f"{k}: {v[1]}" for k, v in PRESETS.items())
    p = argparse.ArgumentParser(
        prog="vinit",
        description="Inertial initialization for monocular visual-inertial systems: "
                    "gyro bias, velocities, gravity, scale and accelerometer bias.",
        epilog="Exit codes: 0 ok, 1 numerical failure, 2 input error. "
               "Set VINIT_LOG=INFO or DEBUG for more logging.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", metavar="PATH", help="TOML configuration file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help=presets)
        if seed:
            sp.add_argument("--seed", type=int, metavar="N", help="override the simulation seed")
        sp.add_argument("--out", metavar="DIR", required=True, help="output directory")

    sp = sub.add_parser("simulate", help="write a synthetic dataset")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("init", help="run the estimator on a dataset")
    sp.add_argument("dataset", nargs="?", help="dataset directory (imu.csv, keyframes.txt)")
    sp.add_argument("--imu", metavar="PATH", help="IMU CSV (overrides the dataset directory)")
    sp.add_argument("--keyframes", metavar="PATH", help="TUM keyframe file (overrides the dataset directory)")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_init)

    sp = sub.add_parser("eval", help="score solutions against ground truth")
    sp.add_argument("solutions", nargs="+", metavar="SOLUTION_DIR")
    sp.add_argument("--groundtruth", metavar="PATH",
                    help="groundtruth.txt or a dataset directory; defaults to the dataset recorded in each manifest")
    sp.add_argument("--no-offset", action="store_true",
                    help="do not remove the global rotation offset before the rotation RMSE")
    sp.add_argument("--out", metavar="DIR", required=True, help="output directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="simulate and evaluate a grid of configurations")
    common(sp, seed=False)
    sp.add_argument("--axis", action="append", metavar="KEY=V1,V2",
                    help="sweep axis over a config key (repeatable), e.g. rot_noise=0,0.1")
    sp.add_argument("--seeds", metavar="SPEC", help="seed list: 1..20 or 3")
    sp.add_argument("--workers", type=int, metavar="K", help="worker processes (default: min(4, cpus))")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "init" and not args.dataset and not (args.imu and args.keyframes):
        print("error: init needs a dataset directory or both --imu and --keyframes", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2

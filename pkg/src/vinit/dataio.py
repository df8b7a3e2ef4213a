"""Readers and writers for IMU CSV files, TUM trajectories, run
configuration and dataset directories.

Dataset directory layout::

    imu.csv          timestamp_ns,wx,wy,wz,ax,ay,az
    keyframes.txt    TUM camera poses, up to scale
    groundtruth.txt  TUM body poses in metres (optional)
    truth.json       scalar ground truth: s_true, g_w, biases, velocities (optional)
    config.toml      configuration snapshot (optional)

Timestamps in the TUM files use the IMU clock, in seconds.
"""
from __future__ import annotations

import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .bundle import DatasetBundle, Extrinsics, KeyframeTrack, KeyframeTruth
from .errors import ConfigError
from .geometry import check_rotation, matrix_to_quat, quat_to_matrix
from .pipeline import PipelineSettings
from .preintegration import ImuStream
from .simulate import NoiseConfig, TrajectoryConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

QUAT_NORM_TOL = 1e-3
IMU_HEADER = "#timestamp_ns,wx,wy,wz,ax,ay,az"
TUM_HEADER = "# t tx ty tz qx qy qz qw"


# ---------------------------------------------------------------- IMU CSV

def load_imu_csv(path) -> ImuStream:
    """Parse ``timestamp_ns,wx,wy,wz,ax,ay,az`` lines.

    Blank lines and lines starting with ``#`` are skipped. Times become
    ``(ns - first_ns) * 1e-9`` seconds.
    """
    path = Path(path)
    ns, vals = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 comma-separated fields, got {len(parts)}")
            try:
                stamp = int(parts[0])
                row = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(x) for x in row):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if ns and stamp <= ns[-1]:
                raise ValueError(f"{path}:{lineno}: timestamp {stamp} is not after {ns[-1]}")
            ns.append(stamp)
            vals.append(row)
    if not ns:
        raise ValueError(f"{path}: no IMU samples")
    stamps = np.array(ns, dtype=np.int64)
    data = np.array(vals, dtype=float)
    t = (stamps - stamps[0]) * 1e-9
    return ImuStream(t, data[:, :3].copy(), data[:, 3:].copy(), int(stamps[0]))


def imu_timestamps_ns(imu: ImuStream) -> np.ndarray:
    return imu.t0_ns + np.round(imu.t * 1e9).astype(np.int64)


def write_imu_csv(path, imu: ImuStream) -> None:
    stamps = imu_timestamps_ns(imu)
    lines = [IMU_HEADER]
    for k, g, a in zip(stamps, imu.gyro, imu.accel):
        lines.append(",".join([str(int(k))] + [repr(float(x)) for x in (*g, *a)]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- TUM

@dataclass(frozen=True)
class Trajectory:
    """Poses read from a TUM file; ``t`` in seconds, ``R`` world-from-frame."""

    t: np.ndarray
    p: np.ndarray
    R: np.ndarray


def _parse_seconds(token: str, offset_ns: int) -> float:
    # Decimal keeps absolute clock values exact before the offset is removed
    try:
        return float(Decimal(token) - Decimal(offset_ns) / Decimal(10**9))
    except InvalidOperation:
        raise ValueError(f"bad timestamp {token!r}") from None


def load_trajectory(path, t_offset_ns: int = 0) -> Trajectory:
    """Parse TUM lines ``t tx ty tz qx qy qz qw``.

    Quaternions are normalised; a norm further than 1e-3 from one is an
    error. ``t_offset_ns`` is subtracted from every timestamp.
    """
    path = Path(path)
    ts, ps, Rs = [], [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                t = _parse_seconds(parts[0], t_offset_ns)
                nums = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(x) for x in nums) or not math.isfinite(t):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            q = np.array(nums[3:])
            norm = np.linalg.norm(q)
            if abs(norm - 1.0) > QUAT_NORM_TOL:
                raise ValueError(f"{path}:{lineno}: quaternion norm {norm:.6g} is not unit")
            if ts and t <= ts[-1]:
                raise ValueError(f"{path}:{lineno}: timestamps must be strictly increasing")
            ts.append(t)
            ps.append(nums[:3])
            Rs.append(quat_to_matrix(q / norm))
    if not ts:
        raise ValueError(f"{path}: no poses")
    return Trajectory(np.array(ts), np.array(ps, dtype=float), np.array(Rs))


def _format_seconds(t: float, offset_ns: int) -> str:
    if offset_ns == 0:
        return repr(float(t))
    return str(Decimal(repr(float(t))) + Decimal(offset_ns) / Decimal(10**9))


def write_trajectory(path, t, p, R, t_offset_ns: int = 0) -> None:
    lines = [TUM_HEADER]
    for ti, pi, Ri in zip(t, p, R):
        q = matrix_to_quat(Ri)
        lines.append(" ".join([_format_seconds(ti, t_offset_ns)] + [repr(float(x)) for x in (*pi, *q)]))
    Path(path).write_text("\n".join(lines) + "\n")


def camera_to_body(R_wc: np.ndarray, extrinsics: Extrinsics) -> np.ndarray:
    """World-from-body rotations from world-from-camera ones."""
    return np.asarray(R_wc) @ np.asarray(extrinsics.R_bc).T


def body_to_camera(R_wb: np.ndarray, extrinsics: Extrinsics) -> np.ndarray:
    return np.asarray(R_wb) @ np.asarray(extrinsics.R_bc)


def load_keyframes(path, extrinsics: Extrinsics = Extrinsics(), t_offset_ns: int = 0) -> KeyframeTrack:
    traj = load_trajectory(path, t_offset_ns)
    return KeyframeTrack(traj.t, camera_to_body(traj.R, extrinsics), traj.p)


def write_keyframes(path, track: KeyframeTrack, extrinsics: Extrinsics = Extrinsics(),
                    t_offset_ns: int = 0) -> None:
    write_trajectory(path, track.times, track.p_wc_bar, body_to_camera(track.R_wb, extrinsics), t_offset_ns)


# ---------------------------------------------------------------- EuRoC

@dataclass(frozen=True)
class EurocGroundTruth:
    t: np.ndarray          # seconds relative to t0_ns
    p: np.ndarray
    R: np.ndarray          # world-from-body
    v: np.ndarray
    bg: np.ndarray
    ba: np.ndarray
    t0_ns: int


def load_euroc_groundtruth(path, t0_ns: int | None = None) -> EurocGroundTruth:
    """Read ``state_groundtruth_estimate0/data.csv`` (17 columns:
    timestamp, p, q_wxyz, v, bg, ba)."""
    path = Path(path)
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 17:
                raise ValueError(f"{path}:{lineno}: expected 17 fields, got {len(parts)}")
            try:
                rows.append((int(parts[0]), [float(x) for x in parts[1:17]]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no ground-truth rows")
    stamps = np.array([r[0] for r in rows], dtype=np.int64)
    data = np.array([r[1] for r in rows])
    if np.any(np.diff(stamps) <= 0):
        raise ValueError(f"{path}: timestamps must be strictly increasing")
    t0 = int(stamps[0]) if t0_ns is None else int(t0_ns)
    q_wxyz = data[:, 3:7]
    q_wxyz = q_wxyz / np.linalg.norm(q_wxyz, axis=1, keepdims=True)
    R = np.array([quat_to_matrix(np.r_[q[1:], q[0]]) for q in q_wxyz])
    return EurocGroundTruth((stamps - t0) * 1e-9, data[:, :3], R, data[:, 7:10], data[:, 10:13], data[:, 13:16], t0)


def euroc_surrogate_bundle(sequence_dir, scale: float, start: float = 0.0, n_keyframes: int = 10,
                           keyframe_rate: float = 10.0) -> DatasetBundle:
    """IMU stream of a EuRoC sequence with keyframes taken from its ground
    truth, positions divided by ``scale``.

    ``start`` is seconds after the first IMU sample. Body and camera frames
    coincide (identity extrinsics).
    """
    root = Path(sequence_dir)
    if (root / "mav0").is_dir():
        root = root / "mav0"
    imu = load_imu_csv(root / "imu0" / "data.csv")
    gt = load_euroc_groundtruth(root / "state_groundtruth_estimate0" / "data.csv", imu.t0_ns)
    t_lo = max(start, gt.t[0], imu.t[0])
    wanted = t_lo + np.arange(n_keyframes) / keyframe_rate
    if wanted[-1] > min(gt.t[-1], imu.t[-1]):
        raise ValueError("sequence too short for the requested keyframe window")
    idx = np.unique(np.searchsorted(gt.t, wanted))
    if len(idx) != n_keyframes:
        raise ValueError("ground truth too sparse for the requested keyframe rate")
    first, last = idx[0], idx[-1]
    truth = KeyframeTruth(
        times=gt.t[idx], R_wb=gt.R[idx], p_wb=gt.p[idx], v_wb=gt.v[idx],
        g_w=np.array([0.0, 0.0, -9.81]), s_true=float(scale),
        bg=gt.bg[last].copy(), ba=gt.ba[first:last + 1].mean(axis=0),
    )
    track = KeyframeTrack(gt.t[idx].copy(), gt.R[idx].copy(), gt.p[idx] / scale)
    return DatasetBundle(imu, track, Extrinsics(), truth)


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs: estimator settings, extrinsics and the
    simulation recipe."""

    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    extrinsics: Extrinsics = field(default_factory=Extrinsics)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    s_true: float = 1.0
    seeds: tuple = ()
    sweep: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, trajectory=replace(self.trajectory, seed=int(seed)))


_SECTIONS = {
    "pipeline": PipelineSettings,
    "trajectory": TrajectoryConfig,
    "noise": NoiseConfig,
}


def _kind(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    if isinstance(value, (tuple, list, np.ndarray)):
        return "vec"
    raise TypeError(type(value))


ALIASES = {"rot_noise": "rot_obs_noise_std", "N": "window_size"}


def config_schema() -> dict:
    """Map of every accepted key to ``(section, kind, default)``."""
    schema = {}
    for section, cls in _SECTIONS.items():
        default = cls()
        for f in fields(cls):
            schema[f.name] = (section, _kind(getattr(default, f.name)), getattr(default, f.name))
    schema["R_bc"] = ("extrinsics", "mat", np.eye(3))
    schema["p_bc"] = ("extrinsics", "vec", np.zeros(3))
    schema["s_true"] = ("run", "float", 1.0)
    schema["seeds"] = ("run", "seeds", ())
    return schema


def parse_seeds(value) -> tuple:
    """``[1, 2, 3]``, ``"1..20"`` (inclusive) or a single integer."""
    if isinstance(value, bool):
        raise ConfigError("seeds must be integers")
    if isinstance(value, int):
        return (value,)
    if isinstance(value, str):
        lo, sep, hi = value.partition("..")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ConfigError(f"empty seed range {value!r}")
                return tuple(range(a, b + 1))
            return (int(value),)
        except ValueError:
            raise ConfigError(f"bad seed specification {value!r}") from None
    if isinstance(value, (list, tuple)) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return tuple(value)
    raise ConfigError(f"bad seed specification {value!r}")


def _coerce(key: str, kind: str, value):
    def bad(expected):
        return ConfigError(f"{key}: expected {expected}, got {type(value).__name__} {value!r}")

    if kind == "bool":
        if not isinstance(value, bool):
            raise bad("a boolean")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind == "vec":
        if not isinstance(value, list) or len(value) != 3 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise bad("a list of 3 numbers")
        return tuple(float(v) for v in value)
    if kind == "mat":
        try:
            M = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise bad("a 3x3 nested list") from None
        if M.shape != (3, 3):
            raise bad("a 3x3 nested list")
        try:
            return check_rotation(M)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if kind == "seeds":
        return parse_seeds(value)
    raise AssertionError(kind)


def _flatten(doc: dict, where: str = "") -> dict:
    flat = {}
    for k, v in doc.items():
        if isinstance(v, dict) and k != "sweep":
            flat.update(_flatten(v, f"{where}{k}."))
        else:
            flat[k] = v
    return flat


def config_from_mapping(doc: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from a parsed TOML document.

    Tables are optional; keys are matched by their bare names. Unknown keys
    are logged and ignored, badly typed values raise :class:`ConfigError`.
    """
    base = RunConfig() if base is None else base
    schema = config_schema()
    sweep_doc = doc.get("sweep", {})
    if not isinstance(sweep_doc, dict):
        raise ConfigError("sweep must be a table")
    per_section: dict = {name: {} for name in _SECTIONS}
    extr = {"R_bc": base.extrinsics.R_bc, "p_bc": base.extrinsics.p_bc}
    run = {"s_true": base.s_true, "seeds": base.seeds}
    for key, value in _flatten({k: v for k, v in doc.items() if k != "sweep"}).items():
        key = ALIASES.get(key, key)
        if key not in schema:
            log.warning("ignoring unknown config key %r", key)
            continue
        section, kind, _ = schema[key]
        value = _coerce(key, kind, value)
        if section in per_section:
            per_section[section][key] = value
        elif section == "extrinsics":
            extr[key] = np.asarray(value, dtype=float)
        else:
            run[key] = value

    sweep = dict(base.sweep)
    for key, values in sweep_doc.items():
        key = ALIASES.get(key, key)
        if key == "seeds":
            run["seeds"] = parse_seeds(values)
            continue
        if key not in schema or schema[key][0] == "extrinsics":
            raise ConfigError(f"sweep axis {key!r} is not a sweepable config key")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep axis {key!r} needs a non-empty list of values")
        sweep[key] = tuple(_coerce(key, schema[key][1], v) for v in values)

    try:
        cfg = RunConfig(
            pipeline=replace(base.pipeline, **per_section["pipeline"]),
            extrinsics=Extrinsics(extr["R_bc"], extr["p_bc"]),
            trajectory=replace(base.trajectory, **per_section["trajectory"]),
            noise=replace(base.noise, **per_section["noise"]),
            s_true=run["s_true"],
            seeds=tuple(run["seeds"]),
            sweep=sweep,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    validate_config(cfg)
    return cfg


def with_value(cfg: RunConfig, key: str, value) -> RunConfig:
    """Copy of ``cfg`` with one (already coerced) key replaced."""
    key = ALIASES.get(key, key)
    schema = config_schema()
    if key not in schema:
        raise ConfigError(f"unknown config key {key!r}")
    section = schema[key][0]
    if section in _SECTIONS:
        try:
            return replace(cfg, **{section: replace(getattr(cfg, section), **{key: value})})
        except ValueError as exc:
            raise ConfigError(f"{key}={value!r}: {exc}") from None
    if section == "run":
        return replace(cfg, **{key: value})
    raise ConfigError(f"{key} cannot be overridden here")


def coerce_value(key: str, value):
    """Type-check ``value`` for ``key`` as the config loader would."""
    key = ALIASES.get(key, key)
    schema = config_schema()
    if key not in schema:
        raise ConfigError(f"unknown config key {key!r}")
    return _coerce(key, schema[key][1], value)


def validate_config(cfg: RunConfig) -> None:
    p = cfg.pipeline
    if p.pcg_iterations < 1 or p.irls_passes < 1:
        raise ConfigError("pcg_iterations and irls_passes must be at least 1")
    if p.window_size < 4:
        raise ConfigError("window_size must be at least 4")
    if min(p.sigma_wn, p.sigma_ww, p.ba_damping) < 0:
        raise ConfigError("noise parameters and ba_damping must be non-negative")
    if min(p.obs_noise_std, p.p0_theta_var, p.p0_bg_var, p.gravity_magnitude) <= 0:
        raise ConfigError("obs_noise_std, p0 variances and gravity_magnitude must be positive")
    if p.preconditioner not in ("normal", "jacobi"):
        raise ConfigError(f"preconditioner must be 'normal' or 'jacobi', got {p.preconditioner!r}")
    if not cfg.s_true > 0:
        raise ConfigError("s_true must be positive")


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_mapping(doc, base)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return parse_config(text, base)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        r = repr(float(v))
        return r if ("." in r or "e" in r or "inf" in r or "nan" in r) else r + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    arr = np.asarray(v)
    if arr.ndim == 2:
        return "[" + ", ".join(_toml_value(row) for row in arr) + "]"
    return "[" + ", ".join(_toml_value(x) for x in v) + "]"


def serialize_config(cfg: RunConfig) -> str:
    """TOML text that :func:`parse_config` maps back to ``cfg``."""
    out = [f"s_true = {_toml_value(cfg.s_true)}"]
    if cfg.seeds:
        out.append(f"seeds = {_toml_value(list(cfg.seeds))}")
    for section, obj in (("pipeline", cfg.pipeline), ("trajectory", cfg.trajectory), ("noise", cfg.noise)):
        out.append(f"\n[{section}]")
        for f in fields(obj):
            out.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
    out.append("\n[extrinsics]")
    out.append(f"R_bc = {_toml_value(np.asarray(cfg.extrinsics.R_bc, dtype=float))}")
    out.append(f"p_bc = {_toml_value(np.asarray(cfg.extrinsics.p_bc, dtype=float))}")
    if cfg.sweep:
        out.append("\n[sweep]")
        for key, values in cfg.sweep.items():
            out.append(f"{key} = [{', '.join(_toml_value(v) for v in values)}]")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- bundles

def _truth_to_json(truth: KeyframeTruth) -> dict:
    def arr(x):
        return None if x is None else np.asarray(x, dtype=float).tolist()

    return {
        "s_true": truth.s_true,
        "g_w": arr(truth.g_w),
        "bg": arr(truth.bg),
        "ba": arr(truth.ba),
        "v_wb": arr(truth.v_wb),
    }


def write_dataset(out_dir, bundle: DatasetBundle, cfg: RunConfig | None = None) -> dict:
    """Write a bundle in the directory layout above; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = bundle.imu.t0_ns
    paths = {"imu": out / "imu.csv", "keyframes": out / "keyframes.txt"}
    write_imu_csv(paths["imu"], bundle.imu)
    write_keyframes(paths["keyframes"], bundle.track, bundle.extrinsics, t0)
    if bundle.truth is not None:
        paths["groundtruth"] = out / "groundtruth.txt"
        paths["truth"] = out / "truth.json"
        tr = bundle.truth
        write_trajectory(paths["groundtruth"], tr.times, tr.p_wb, tr.R_wb, t0)
        paths["truth"].write_text(json.dumps(_truth_to_json(tr), indent=2) + "\n")
    if cfg is not None:
        paths["config"] = out / "config.toml"
        paths["config"].write_text(serialize_config(cfg))
    return paths


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def load_groundtruth(path, t_offset_ns: int = 0, truth_json=None) -> KeyframeTruth:
    traj = load_trajectory(path, t_offset_ns)
    extra = {}
    if truth_json is not None and Path(truth_json).is_file():
        extra = json.loads(Path(truth_json).read_text())

    def arr(key):
        v = extra.get(key)
        return None if v is None else np.asarray(v, dtype=float)

    g = arr("g_w")
    v = arr("v_wb")
    if v is not None and v.shape != traj.p.shape:
        raise ValueError(f"{truth_json}: v_wb has {len(v)} rows, ground truth has {len(traj.p)}")
    return KeyframeTruth(
        times=traj.t, R_wb=traj.R, p_wb=traj.p, v_wb=v,
        g_w=np.array([0.0, 0.0, -9.81]) if g is None else g,
        s_true=extra.get("s_true"), bg=arr("bg"), ba=arr("ba"),
    )


def load_dataset(dataset_dir=None, *, imu_path=None, keyframes_path=None, groundtruth_path=None,
                 extrinsics: Extrinsics | None = None) -> DatasetBundle:
    """Load a dataset directory; explicit paths override the defaults.

    Without ``extrinsics`` the directory's ``config.toml`` snapshot is used
    when present, identity otherwise.
    """
    root = Path(dataset_dir) if dataset_dir is not None else None
    imu_path = Path(imu_path) if imu_path else (root / "imu.csv" if root else None)
    kf_path = Path(keyframes_path) if keyframes_path else (root / "keyframes.txt" if root else None)
    if imu_path is None or kf_path is None:
        raise ValueError("need a dataset directory or explicit IMU and keyframe paths")
    if extrinsics is None:
        snap = root / "config.toml" if root else None
        extrinsics = load_config(snap).extrinsics if snap is not None and snap.is_file() else Extrinsics()
    imu = load_imu_csv(_require(imu_path, "IMU file"))
    track = load_keyframes(_require(kf_path, "keyframe file"), extrinsics, imu.t0_ns)
    gt_path = Path(groundtruth_path) if groundtruth_path else (root / "groundtruth.txt" if root else None)
    truth = None
    if gt_path is not None and gt_path.is_file():
        truth = load_groundtruth(gt_path, imu.t0_ns, gt_path.parent / "truth.json")
    if track.times[0] < imu.t[0] - 1e-9 or track.times[-1] > imu.t[-1] + 1e-9:
        raise ValueError(
            f"keyframes span [{track.times[0]:.6f}, {track.times[-1]:.6f}] s outside IMU data "
            f"[{imu.t[0]:.6f}, {imu.t[-1]:.6f}] s"
        )
    return DatasetBundle(imu, track, extrinsics, truth)

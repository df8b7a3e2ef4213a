"""Synthetic trajectories, IMU measurements and up-to-scale keyframes.

The reference state at IMU sample times is obtained by integrating the
clean body rate and specific force with the same midpoint rule used by
:mod:`vinit.preintegration`, so noise-free preintegrated deltas agree with
the reported ground truth up to rounding. The analytic curves that drive
the simulation stay available through :class:`SinusoidTrajectory`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import DatasetBundle, Extrinsics, KeyframeTrack, KeyframeTruth, OrientationObservation
from .geometry import exp_so3
from .preintegration import ImuStream

GRAVITY = np.array([0.0, 0.0, -9.81])
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float = 1.0
    imu_rate: float = 200.0
    keyframe_rate: float = 10.0
    position_amplitudes: tuple = (0.6, 0.5, 0.3)
    position_frequencies: tuple = (0.8, 0.6, 1.0)
    angular_rate_amplitudes: tuple = (0.8, 0.6, 1.0)
    angular_rate_frequencies: tuple = (0.5, 0.7, 0.4)
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.imu_rate <= 0 or self.keyframe_rate <= 0:
            raise ValueError("duration and rates must be positive")
        if self.imu_rate < 10 * self.keyframe_rate:
            raise ValueError("imu_rate must be at least 10x keyframe_rate")


@dataclass(frozen=True)
class NoiseConfig:
    """Per-sample standard deviations; walk terms are per sqrt(second)."""

    gyro_noise_std: float = 0.0
    gyro_walk_std: float = 0.0
    accel_noise_std: float = 0.0
    accel_walk_std: float = 0.0
    bg_true: tuple = (0.0, 0.0, 0.0)
    ba_true: tuple = (0.0, 0.0, 0.0)
    rot_obs_noise_std: float = 0.0

    def __post_init__(self):
        stds = (self.gyro_noise_std, self.gyro_walk_std, self.accel_noise_std,
                self.accel_walk_std, self.rot_obs_noise_std)
        if min(stds) < 0:
            raise ValueError("noise standard deviations must be non-negative")


class SinusoidTrajectory:
    """Per-axis sinusoidal position and body angular rate."""

    def __init__(self, cfg: TrajectoryConfig):
        rng = np.random.default_rng([cfg.seed, 0])
        self.pos_amp = np.asarray(cfg.position_amplitudes, dtype=float)
        self.pos_w = TWO_PI * np.asarray(cfg.position_frequencies, dtype=float)
        self.pos_phase = rng.uniform(0.0, TWO_PI, 3)
        self.rate_amp = np.asarray(cfg.angular_rate_amplitudes, dtype=float)
        self.rate_w = TWO_PI * np.asarray(cfg.angular_rate_frequencies, dtype=float)
        self.rate_phase = rng.uniform(0.0, TWO_PI, 3)

    def _arg(self, t):
        return np.multiply.outer(np.atleast_1d(t), self.pos_w) + self.pos_phase

    def position(self, t):
        return self.pos_amp * np.sin(self._arg(t))

    def velocity(self, t):
        return self.pos_amp * self.pos_w * np.cos(self._arg(t))

    def acceleration(self, t):
        return -self.pos_amp * self.pos_w**2 * np.sin(self._arg(t))

    def body_rate(self, t):
        arg = np.multiply.outer(np.atleast_1d(t), self.rate_w) + self.rate_phase
        return self.rate_amp * np.sin(arg)


@dataclass(frozen=True)
class GroundTruth:
    """Reference state at every IMU sample plus keyframe sample indices."""

    cfg: TrajectoryConfig
    curve: SinusoidTrajectory
    t_ns: np.ndarray
    t: np.ndarray
    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    specific_force: np.ndarray
    kf_idx: np.ndarray
    g_w: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    @property
    def kf_times(self) -> np.ndarray:
        return self.t[self.kf_idx]


def gen_trajectory(cfg: TrajectoryConfig) -> GroundTruth:
    period_ns = int(round(1e9 / cfg.imu_rate))
    n = int(round(cfg.duration * cfg.imu_rate)) + 1
    t_ns = np.arange(n, dtype=np.int64) * period_ns
    t = t_ns * 1e-9
    h = np.diff(t)

    curve = SinusoidTrajectory(cfg)
    omega = curve.body_rate(t)
    acc_w = curve.acceleration(t)

    steps = exp_so3(0.5 * (omega[1:] + omega[:-1]) * h[:, None])
    R = np.empty((n, 3, 3))
    R[0] = np.eye(3)
    for i in range(n - 1):
        R[i + 1] = R[i] @ steps[i]
    f = np.einsum("nji,nj->ni", R, acc_w - GRAVITY)

    # discrete integration, identical to the preintegration rule
    a_w = np.einsum("nij,nj->ni", R[:-1], 0.5 * (f[1:] + f[:-1])) + GRAVITY
    v = np.empty((n, 3))
    p = np.empty((n, 3))
    v[0] = curve.velocity(0.0)[0]
    p[0] = curve.position(0.0)[0]
    for i in range(n - 1):
        v[i + 1] = v[i] + a_w[i] * h[i]
        p[i + 1] = p[i] + v[i] * h[i] + 0.5 * a_w[i] * h[i] ** 2

    n_kf = int(np.floor(cfg.duration * cfg.keyframe_rate + 1e-9))
    stride = cfg.imu_rate / cfg.keyframe_rate
    kf_idx = np.round(np.arange(n_kf) * stride).astype(int)
    return GroundTruth(cfg, curve, t_ns, t, R, p, v, omega, f, kf_idx)


def _bias_path(rng, start, walk_std, h):
    steps = rng.standard_normal((len(h), 3)) * walk_std * np.sqrt(h)[:, None]
    return np.asarray(start, dtype=float) + np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])


def gen_imu(gt: GroundTruth, noise: NoiseConfig, return_biases: bool = False):
    """Gyro and accelerometer readings: clean signal + bias path + white noise."""
    rng = np.random.default_rng([gt.cfg.seed, 1])
    h = np.diff(gt.t)
    n = len(gt.t)
    bg = _bias_path(rng, noise.bg_true, noise.gyro_walk_std, h)
    ba = _bias_path(rng, noise.ba_true, noise.accel_walk_std, h)
    gyro = gt.omega + bg + noise.gyro_noise_std * rng.standard_normal((n, 3))
    accel = gt.specific_force + ba + noise.accel_noise_std * rng.standard_normal((n, 3))
    stream = ImuStream(gt.t.copy(), gyro, accel, int(gt.t_ns[0]))
    if return_biases:
        return stream, bg, ba
    return stream


def gen_keyframes(gt: GroundTruth, s_true: float, noise: NoiseConfig,
                  extrinsics: Extrinsics = Extrinsics()):
    """Up-to-scale camera positions and (optionally noisy) body orientations."""
    if s_true <= 0:
        raise ValueError("s_true must be positive")
    rng = np.random.default_rng([gt.cfg.seed, 2])
    idx = gt.kf_idx
    R_wb = gt.R[idx]
    p_wc = gt.p[idx] + np.einsum("nij,j->ni", R_wb, extrinsics.p_bc)
    if noise.rot_obs_noise_std > 0:
        perturb = exp_so3(rng.standard_normal((len(idx), 3)) * noise.rot_obs_noise_std)
        R_obs = R_wb @ perturb
    else:
        R_obs = R_wb.copy()
    track = KeyframeTrack(gt.t[idx].copy(), R_obs, p_wc / s_true)
    obs = [OrientationObservation(float(t), R) for t, R in zip(track.times, R_obs)]
    return track, obs


def simulate_dataset(traj: TrajectoryConfig = TrajectoryConfig(), noise: NoiseConfig = NoiseConfig(),
                     s_true: float = 1.0, extrinsics: Extrinsics = Extrinsics()) -> DatasetBundle:
    gt = gen_trajectory(traj)
    imu, bg_path, ba_path = gen_imu(gt, noise, return_biases=True)
    track, _ = gen_keyframes(gt, s_true, noise, extrinsics)
    idx = gt.kf_idx
    truth = KeyframeTruth(
        times=gt.t[idx].copy(),
        R_wb=gt.R[idx].copy(),
        p_wb=gt.p[idx].copy(),
        v_wb=gt.v[idx].copy(),
        g_w=gt.g_w.copy(),
        s_true=float(s_true),
        bg=bg_path[idx[-1]].copy(),
        ba=ba_path[idx[0]:idx[-1] + 1].mean(axis=0),
    )
    return DatasetBundle(imu, track, extrinsics, truth)

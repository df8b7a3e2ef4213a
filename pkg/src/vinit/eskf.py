"""Error-state Kalman filter over rotation and gyroscope bias.

The IMU drives the nominal rotation; external orientation observations
(e.g. from a monocular SLAM front end, already expressed in the body frame)
correct it. Error state ordering is ``[dtheta, dbg]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import KeyframeTrack, OrientationObservation
from .errors import NumericalError
from ._kernels import eskf_correct, eskf_propagate
from .geometry import check_rotation
from .preintegration import ImuStream, as_stream, check_gaps

SIGMA_WN = 1.7e-4
SIGMA_WW = 2e-5
MAX_INNOVATION_COND = 1e12


@dataclass(frozen=True)
class EskfNoise:
    sigma_wn: float = SIGMA_WN
    sigma_ww: float = SIGMA_WW
    V: np.ndarray = field(default_factory=lambda: (1e-3) ** 2 * np.eye(3))

    def __post_init__(self):
        if self.sigma_wn < 0 or self.sigma_ww < 0:
            raise ValueError("gyro noise parameters must be non-negative")
        V = np.asarray(self.V, dtype=float)
        if V.shape != (3, 3) or not np.allclose(V, V.T) or np.min(np.linalg.eigvalsh(V)) <= 0:
            raise ValueError("observation covariance V must be 3x3 symmetric positive definite")


@dataclass(frozen=True)
class EskfNominal:
    R: np.ndarray
    bg: np.ndarray


@dataclass(frozen=True)
class EskfError:
    dtheta: np.ndarray
    dbg: np.ndarray
    P: np.ndarray

    @classmethod
    def reset(cls, P: np.ndarray) -> "EskfError":
        return cls(np.zeros(3), np.zeros(3), P)


def initial_covariance(theta_var: float = 1e-4, bg_var: float = 1e-2) -> np.ndarray:
    return np.diag([theta_var] * 3 + [bg_var] * 3)


def predict(state: EskfNominal, err: EskfError, noise: EskfNoise, gyro, dt: float | None = None):
    """Propagate through every gyro sub-interval of ``gyro``.

    Each sub-step composes ``F = [[Exp(-(w - bg) h), -I h], [0, I]]`` and adds
    ``Q = diag(sigma_wn^2 h^2 I, sigma_ww^2 h I)``.
    """
    s = as_stream(gyro)
    if len(s) < 2:
        raise ValueError("empty gyro segment")
    h_all = np.diff(s.t)
    span = float(s.t[-1] - s.t[0])
    if (dt is not None and dt <= 0.0) or span <= 0.0 or np.any(h_all <= 0.0):
        raise ValueError("prediction interval must be positive")
    if dt is not None and abs(dt - span) > 1e-9:
        raise ValueError(f"dt={dt} does not match gyro segment span {span}")

    R, P = eskf_propagate(np.asarray(state.R, dtype=float), np.asarray(err.P, dtype=float),
                          s.t, s.gyro, np.asarray(state.bg, dtype=float),
                          noise.sigma_wn**2, noise.sigma_ww**2)
    return EskfNominal(R, state.bg.copy()), EskfError.reset(P)


def update(state: EskfNominal, err: EskfError, noise: EskfNoise, obs: OrientationObservation):
    """Fuse one orientation observation, inject the error state and reset it.

    The reset keeps the posterior covariance unchanged (identity reset
    Jacobian).
    """
    r = check_rotation(obs.r)
    R, bg, P, cond = eskf_correct(np.asarray(state.R, dtype=float), np.asarray(state.bg, dtype=float),
                                  np.asarray(err.P, dtype=float), r, np.asarray(noise.V, dtype=float))
    if not cond <= MAX_INNOVATION_COND:
        raise NumericalError("innovation covariance is not invertible; check V and P")
    return EskfNominal(R, bg), EskfError.reset(P)


def estimate_gyro_bias(track: KeyframeTrack, imu: ImuStream, noise: EskfNoise = EskfNoise(),
                       P0: np.ndarray | None = None, bg0=np.zeros(3), segments=None):
    """Run the filter over a keyframe window.

    The nominal rotation starts at the first observation with the given
    initial bias (zero by default). Returns the bias after the last update
    and the corrected world-from-body rotation at every keyframe.
    ``segments`` may supply the per-pair IMU slices when the caller already
    has them.
    """
    n = len(track)
    if n < 2:
        raise ValueError("need at least 2 keyframes")
    check_gaps(imu, track.times[0], track.times[-1])
    if segments is None:
        segments = [imu.between(a, b) for a, b in zip(track.times[:-1], track.times[1:])]
    elif len(segments) != n - 1:
        raise ValueError(f"expected {n - 1} IMU segments, got {len(segments)}")
    P = initial_covariance() if P0 is None else np.asarray(P0, dtype=float)
    obs = track.observations()

    state = EskfNominal(obs[0].r.copy(), np.asarray(bg0, dtype=float).copy())
    err = EskfError.reset(P)
    state, err = update(state, err, noise, obs[0])
    rotations = [state.R]
    for k in range(1, n):
        state, err = predict(state, err, noise, segments[k - 1])
        state, err = update(state, err, noise, obs[k])
        rotations.append(state.R)
    return state.bg, np.array(rotations)

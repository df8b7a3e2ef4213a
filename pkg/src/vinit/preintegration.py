"""IMU samples and preintegration of relative motion between keyframes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import integrate_segment


@dataclass(frozen=True)
class ImuSample:
    t: float
    omega_m: np.ndarray
    accel_m: np.ndarray


@dataclass(frozen=True)
class ImuStream:
    """Column-wise IMU data: ``t`` (n,), ``gyro`` (n, 3), ``accel`` (n, 3).

    ``t`` is in seconds relative to ``t0_ns``, the raw clock value of the
    first sample when loaded from disk.
    """

    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    t0_ns: int = 0

    def __post_init__(self):
        n = len(self.t)
        if self.gyro.shape != (n, 3) or self.accel.shape != (n, 3):
            raise ValueError("gyro/accel must have shape (n, 3) matching t")

    @classmethod
    def from_samples(cls, samples: Sequence[ImuSample]) -> "ImuStream":
        return cls(
            t=np.array([s.t for s in samples], dtype=float),
            gyro=np.array([s.omega_m for s in samples], dtype=float).reshape(-1, 3),
            accel=np.array([s.accel_m for s in samples], dtype=float).reshape(-1, 3),
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.gyro[i].copy(), self.accel[i].copy())

    def interpolate(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Linearly interpolated (gyro, accel) at time ``t``."""
        j = int(np.searchsorted(self.t, t, side="right"))
        j = min(max(j, 1), len(self.t) - 1)
        t0, t1 = self.t[j - 1], self.t[j]
        a = (t - t0) / (t1 - t0)
        return (
            (1.0 - a) * self.gyro[j - 1] + a * self.gyro[j],
            (1.0 - a) * self.accel[j - 1] + a * self.accel[j],
        )

    def between(self, t0: float, t1: float, tol: float = 1e-9) -> "ImuStream":
        """Samples covering [t0, t1]; boundary samples are interpolated when
        no measurement falls on the keyframe time."""
        if not (self.t[0] - tol <= t0 < t1 <= self.t[-1] + tol):
            raise ValueError(
                f"interval [{t0}, {t1}] not covered by IMU data [{self.t[0]}, {self.t[-1]}]"
            )
        t = self.t
        lo = int(np.searchsorted(t, t0 - tol, side="left"))
        hi = int(np.searchsorted(t, t1 + tol, side="right"))
        snap0 = lo < len(t) and abs(t[lo] - t0) <= tol
        snap1 = hi > 0 and abs(t[hi - 1] - t1) <= tol
        i0 = lo + 1 if snap0 else lo
        i1 = hi - 1 if snap1 else hi
        g0, a0 = (self.gyro[lo], self.accel[lo]) if snap0 else self.interpolate(t0)
        g1, a1 = (self.gyro[hi - 1], self.accel[hi - 1]) if snap1 else self.interpolate(t1)
        m = i1 - i0
        out_t = np.empty(m + 2)
        gyro = np.empty((m + 2, 3))
        accel = np.empty((m + 2, 3))
        out_t[0], out_t[-1] = t0, t1
        out_t[1:-1] = t[i0:i1]
        gyro[0], gyro[-1], gyro[1:-1] = g0, g1, self.gyro[i0:i1]
        accel[0], accel[-1], accel[1:-1] = a0, a1, self.accel[i0:i1]
        return ImuStream(out_t, gyro, accel)


def as_stream(samples) -> ImuStream:
    if isinstance(samples, ImuStream):
        return samples
    return ImuStream.from_samples(list(samples))


def check_gaps(stream: ImuStream, t0: float, t1: float, factor: float = 2.0) -> None:
    """Raise if consecutive samples inside [t0, t1] are further apart than
    ``factor`` times the median sample period."""
    dt = np.diff(stream.t)
    nominal = float(np.median(dt))
    mask = (stream.t[1:] > t0) & (stream.t[:-1] < t1)
    if np.any(dt[mask] > factor * nominal):
        i = int(np.flatnonzero(mask & (dt > factor * nominal))[0])
        raise ValueError(
            f"IMU gap of {dt[i]:.4g} s at t={stream.t[i]:.6f} exceeds {factor}x nominal period {nominal:.4g} s"
        )


@dataclass(frozen=True)
class PreintegratedDelta:
    dp: np.ndarray
    dv: np.ndarray
    dR: np.ndarray
    dt: float
    J_dp_dba: np.ndarray
    J_dv_dba: np.ndarray
    bg_used: np.ndarray
    ba_used: np.ndarray


def preintegrate(samples, bg=np.zeros(3), ba=np.zeros(3)) -> PreintegratedDelta:
    """Midpoint integration of gyro and accelerometer samples.

    Each sub-interval uses the average of its two end samples; the
    rotation at the start of the sub-interval maps the averaged specific
    force into the frame of the first sample. Bias Jacobians are
    accumulated alongside:
    ``J_dv -= dR h`` and ``J_dp += J_dv h - dR h^2 / 2``.
    """
    s = as_stream(samples)
    if len(s) < 2:
        raise ValueError("preintegration needs at least 2 IMU samples")
    h = np.diff(s.t)
    if np.any(h <= 0.0):
        raise ValueError("IMU timestamps must be strictly increasing")
    bg = np.asarray(bg, dtype=float)
    ba = np.asarray(ba, dtype=float)

    dp, dv, dR, J_dp, J_dv = integrate_segment(s.t, s.gyro, s.accel, bg, ba)
    return PreintegratedDelta(
        dp=dp,
        dv=dv,
        dR=dR,
        dt=float(s.t[-1] - s.t[0]),
        J_dp_dba=J_dp,
        J_dv_dba=J_dv,
        bg_used=bg.copy(),
        ba_used=ba.copy(),
    )


def repreintegrate(delta: PreintegratedDelta, samples, bg_new) -> PreintegratedDelta:
    """Exact re-integration at a new gyro bias, keeping the accel bias."""
    bg_new = np.asarray(bg_new, dtype=float)
    if np.array_equal(bg_new, delta.bg_used):
        return delta
    return preintegrate(samples, bg_new, delta.ba_used)


def compose(first: PreintegratedDelta, second: PreintegratedDelta) -> PreintegratedDelta:
    """Chain two consecutive deltas computed at the same biases."""
    if not (np.array_equal(first.bg_used, second.bg_used) and np.array_equal(first.ba_used, second.ba_used)):
        raise ValueError("deltas were integrated at different biases")
    R1 = first.dR
    return PreintegratedDelta(
        dp=first.dp + first.dv * second.dt + R1 @ second.dp,
        dv=first.dv + R1 @ second.dv,
        dR=R1 @ second.dR,
        dt=first.dt + second.dt,
        J_dp_dba=first.J_dp_dba + first.J_dv_dba * second.dt + R1 @ second.J_dp_dba,
        J_dv_dba=first.J_dv_dba + R1 @ second.J_dv_dba,
        bg_used=first.bg_used,
        ba_used=first.ba_used,
    )


def preintegrate_track(imu: ImuStream, times, bg=np.zeros(3), ba=np.zeros(3)) -> list[PreintegratedDelta]:
    """One delta per consecutive keyframe pair."""
    return [preintegrate(imu.between(t0, t1), bg, ba) for t0, t1 in zip(times[:-1], times[1:])]

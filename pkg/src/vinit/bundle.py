"""Containers shared by the loaders, the simulator and the evaluation code."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .preintegration import ImuStream


@dataclass(frozen=True)
class Extrinsics:
    """Camera-to-body transform: ``p_b = R_bc @ p_c + p_bc``."""

    R_bc: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_bc: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class OrientationObservation:
    t: float
    r: np.ndarray  # world-from-body rotation


@dataclass(frozen=True)
class KeyframeTrack:
    """Keyframe times, world-from-body rotations and up-to-scale camera
    positions."""

    times: np.ndarray
    R_wb: np.ndarray
    p_wc_bar: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if self.R_wb.shape != (n, 3, 3) or self.p_wc_bar.shape != (n, 3):
            raise ValueError("track arrays have inconsistent lengths")
        if n > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("keyframe times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def head(self, n: int) -> "KeyframeTrack":
        return KeyframeTrack(self.times[:n], self.R_wb[:n], self.p_wc_bar[:n])

    def observations(self) -> list[OrientationObservation]:
        return [OrientationObservation(float(t), R) for t, R in zip(self.times, self.R_wb)]


@dataclass(frozen=True)
class KeyframeTruth:
    """Metric ground truth at keyframes. Scalar fields may be missing for
    real data."""

    times: np.ndarray
    R_wb: np.ndarray
    p_wb: np.ndarray
    v_wb: Optional[np.ndarray] = None
    g_w: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    s_true: Optional[float] = None
    bg: Optional[np.ndarray] = None
    ba: Optional[np.ndarray] = None

    def head(self, n: int) -> "KeyframeTruth":
        return KeyframeTruth(
            self.times[:n], self.R_wb[:n], self.p_wb[:n],
            None if self.v_wb is None else self.v_wb[:n],
            self.g_w, self.s_true, self.bg, self.ba,
        )


@dataclass(frozen=True)
class DatasetBundle:
    imu: ImuStream
    track: KeyframeTrack
    extrinsics: Extrinsics
    truth: Optional[KeyframeTruth] = None

    @property
    def observations(self) -> list[OrientationObservation]:
        return self.track.observations()

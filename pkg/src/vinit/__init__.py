"""Inertial initialization for monocular visual-inertial odometry.

Stages: an error-state Kalman filter estimates the gyroscope bias from
orientation observations, a linear least-squares step aligns preintegrated
IMU deltas with the up-to-scale keyframe track, and a reweighted refinement
recovers velocities, scale, gravity and accelerometer bias.
"""
__version__ = "0.1.0"

from .bundle import DatasetBundle, Extrinsics, KeyframeTrack, KeyframeTruth, OrientationObservation
from .errors import ConfigError, DivergenceError, NumericalError, RankDeficiencyError
from .pipeline import PipelineResult, PipelineSettings, run, run_bundle

__all__ = [
    "DatasetBundle", "Extrinsics", "KeyframeTrack", "KeyframeTruth", "OrientationObservation",
    "ConfigError", "DivergenceError", "NumericalError", "RankDeficiencyError",
    "PipelineResult", "PipelineSettings", "run", "run_bundle",
]

"""Gyro-bias filtering, linear alignment and refinement chained together."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .bundle import DatasetBundle, Extrinsics, KeyframeTrack
from .eskf import EskfNoise, estimate_gyro_bias, initial_covariance
from .linear_align import LinearSolution, solve_initial
from .preintegration import ImuStream, PreintegratedDelta, preintegrate
from .refine import RefinedSolution, refine


@dataclass(frozen=True)
class PipelineSettings:
    sigma_wn: float = 1.7e-4
    sigma_ww: float = 2e-5
    obs_noise_std: float = 1e-3
    p0_theta_var: float = 1e-4
    p0_bg_var: float = 1e-2
    gravity_magnitude: float = 9.81
    pcg_iterations: int = 4
    irls_passes: int = 2
    window_size: int = 10
    ba_damping: float = 0.0
    preconditioner: str = "normal"

    def eskf_noise(self) -> EskfNoise:
        return EskfNoise(self.sigma_wn, self.sigma_ww, self.obs_noise_std ** 2 * np.eye(3))


@dataclass
class PipelineResult:
    bg: np.ndarray
    rotations: np.ndarray
    track: KeyframeTrack
    deltas: list
    linear: LinearSolution
    refined: RefinedSolution
    timings_us: dict = field(default_factory=dict)

    @property
    def stage_total_us(self) -> float:
        return float(sum(v for k, v in self.timings_us.items() if k != "total"))


_WARM = False


def _ensure_warm():
    # JIT loading happens once per process and is not part of any stage
    global _WARM
    if not _WARM:
        _kernels.warmup()
        _WARM = True


@contextmanager
def _stage(name: str):
    """Prefix errors raised inside a stage with the stage name."""
    try:
        yield
    except (ValueError, RuntimeError) as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
            exc.args = (f"{name}: {exc}",) + exc.args[1:]
        raise


def run(imu: ImuStream, track: KeyframeTrack, extrinsics: Extrinsics,
        settings: PipelineSettings = PipelineSettings()) -> PipelineResult:
    """Run all three estimation stages on the first ``window_size`` keyframes.

    Timings cover the pure computation of each stage (no I/O).
    """
    if settings.window_size and len(track) > settings.window_size:
        track = track.head(settings.window_size)
    timings = {}

    P0 = initial_covariance(settings.p0_theta_var, settings.p0_bg_var)
    noise = settings.eskf_noise()
    _ensure_warm()
    t0 = time.perf_counter_ns()
    with _stage("eskf"):
        segments = [imu.between(a, b) for a, b in zip(track.times[:-1], track.times[1:])]
        bg, rotations = estimate_gyro_bias(track, imu, noise, P0, segments=segments)
    t1 = time.perf_counter_ns()
    corrected = replace(track, R_wb=rotations)
    with _stage("preintegration"):
        deltas: list[PreintegratedDelta] = [preintegrate(seg, bg) for seg in segments]
    t2 = time.perf_counter_ns()
    with _stage("linear"):
        linear = solve_initial(corrected, extrinsics, deltas)
    t3 = time.perf_counter_ns()
    with _stage("refine"):
        refined = refine(linear, corrected, extrinsics, deltas, settings.gravity_magnitude,
                         settings.pcg_iterations, settings.irls_passes, settings.ba_damping,
                         settings.preconditioner)
    t4 = time.perf_counter_ns()

    timings["eskf"] = (t1 - t0) / 1e3
    timings["preintegration"] = (t2 - t1) / 1e3
    timings["linear"] = (t3 - t2) / 1e3
    timings["refine"] = (t4 - t3) / 1e3
    timings["total"] = (t4 - t0) / 1e3
    return PipelineResult(bg, rotations, corrected, deltas, linear, refined, timings)


def run_bundle(bundle: DatasetBundle, settings: PipelineSettings = PipelineSettings()) -> PipelineResult:
    return run(bundle.imu, bundle.track, bundle.extrinsics, settings)

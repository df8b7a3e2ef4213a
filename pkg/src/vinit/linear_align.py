"""Closed-form alignment of up-to-scale keyframes with preintegrated IMU
deltas. Unknowns: keyframe velocities, world gravity and the metric scale,
stacked as ``x = [v_0, ..., v_{N-1}, g_w, s]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .bundle import Extrinsics, KeyframeTrack
from .errors import NumericalError, RankDeficiencyError
from .preintegration import PreintegratedDelta

MIN_KEYFRAMES = 4
MIN_SCALE = 1e-3
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class LinearSolution:
    v: np.ndarray      # (N, 3)
    g_w: np.ndarray
    s: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v.ravel(), self.g_w, [self.s]])


def _lever_arm_terms(k, track, extrinsics, delta):
    Rk_T = track.R_wb[k].T
    dt = delta.dt
    dp_bar = track.p_wc_bar[k + 1] - track.p_wc_bar[k]
    p_bc = np.asarray(extrinsics.p_bc, dtype=float)
    b_pos = delta.dp - p_bc + Rk_T @ track.R_wb[k + 1] @ p_bc
    return Rk_T, dt, dp_bar, b_pos


def build_block(k: int, track: KeyframeTrack, extrinsics: Extrinsics, delta: PreintegratedDelta):
    """Rows for the keyframe pair (k, k+1): a 6 x (3N+4) block and its
    right-hand side."""
    n = len(track)
    if not 0 <= k <= n - 2:
        raise IndexError(f"pair index {k} out of range for {n} keyframes")
    Rk_T, dt, dp_bar, b_pos = _lever_arm_terms(k, track, extrinsics, delta)
    A = np.zeros((6, 3 * n + 4))
    c = 3 * k
    g = 3 * n
    A[:3, c:c + 3] = -Rk_T * dt
    A[:3, g:g + 3] = -0.5 * Rk_T * dt * dt
    A[:3, g + 3] = Rk_T @ dp_bar
    A[3:, c:c + 3] = -Rk_T
    A[3:, c + 3:c + 6] = Rk_T
    A[3:, g:g + 3] = -Rk_T * dt
    B = np.concatenate([b_pos, delta.dv])
    return A, B


def stack_system(track, extrinsics, deltas):
    n = len(track)
    if len(deltas) != n - 1:
        raise ValueError(f"expected {n - 1} deltas for {n} keyframes, got {len(deltas)}")
    blocks = [build_block(k, track, extrinsics, d) for k, d in enumerate(deltas)]
    return np.vstack([a for a, _ in blocks]), np.concatenate([b for _, b in blocks])


def lstsq_qr(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least squares via column-pivoted QR; refuses rank-deficient systems."""
    Q, R, piv = qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > RANK_RTOL * d[0])) if d.size else 0
    if rank < A.shape[1]:
        raise RankDeficiencyError(
            f"alignment system has numerical rank {rank} < {A.shape[1]}; "
            "motion does not excite all unknowns"
        )
    z = solve_triangular(R, Q.T @ b)
    x = np.empty_like(z)
    x[piv] = z
    return x


def solve_initial(track: KeyframeTrack, extrinsics: Extrinsics,
                  deltas: Sequence[PreintegratedDelta]) -> LinearSolution:
    n = len(track)
    if n < MIN_KEYFRAMES:
        raise ValueError(f"linear alignment needs at least {MIN_KEYFRAMES} keyframes, got {n}")
    A, B = stack_system(track, extrinsics, deltas)
    x = lstsq_qr(A, B)
    s = float(x[-1])
    if not np.isfinite(s) or s < MIN_SCALE:
        raise NumericalError(f"degenerate scale estimate s={s:.3g}")
    return LinearSolution(v=x[:3 * n].reshape(n, 3), g_w=x[3 * n:3 * n + 3].copy(), s=s)

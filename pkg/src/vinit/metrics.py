"""Accuracy metrics: scale error, rotation RMSE, ATE, gravity direction and
bias errors, plus the report container written by the command line tool.

Scale is judged by aligning the metric keyframe positions implied by an
estimate to the ground-truth positions with a similarity transform. If the
alignment needs scale ``s_align`` then the estimate's relative scale is
``s_hat = 1 / s_align`` and the error is ``|1 - s_hat| * 100`` percent.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bundle import Extrinsics, KeyframeTruth
from .geometry import log_so3, project_to_so3

DEGENERACY_RTOL = 1e-9


def align_umeyama(est, gt, with_scale: bool = True):
    """Closed-form ``(s, R, t)`` minimising ``sum ||gt - (s R est + t)||^2``.

    With ``with_scale=False`` the scale is fixed to one (rigid alignment).
    """
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape or est.ndim != 2 or est.shape[1] != 3:
        raise ValueError(f"point sets must both be (n, 3); got {est.shape} and {gt.shape}")
    if len(est) < 3:
        raise ValueError("alignment needs at least 3 correspondences")
    mu_e, mu_g = est.mean(axis=0), gt.mean(axis=0)
    E, G = est - mu_e, gt - mu_g
    sv_e = np.linalg.svd(E, compute_uv=False)
    sv_g = np.linalg.svd(G, compute_uv=False)
    if sv_e[0] == 0.0 or sv_e[1] <= DEGENERACY_RTOL * sv_e[0] or sv_g[1] <= DEGENERACY_RTOL * sv_g[0]:
        raise ValueError("point set is collinear or degenerate; alignment is not unique")
    C = G.T @ E / len(est)
    U, D, Vt = np.linalg.svd(C)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_e = np.sum(E * E) / len(est)
        s = float(np.trace(np.diag(D) @ S) / var_e)
    else:
        s = 1.0
    t = mu_g - s * R @ mu_e
    return s, R, t


def scale_error(s_hat: float) -> float:
    """Percent error of a relative scale estimate (true value 1)."""
    if not math.isfinite(s_hat):
        raise ValueError("scale estimate must be finite")
    return abs(1.0 - s_hat) * 100.0


def rotation_rmse(est, gt, remove_offset: bool = True) -> float:
    """RMS geodesic angle between paired rotations.

    With ``remove_offset`` the single global rotation ``R_off`` that best
    maps ``gt_i`` onto ``est_i`` (``est_i ~ R_off gt_i``, chordal sense) is
    taken out first.
    """
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape:
        raise ValueError(f"rotation sequences differ in length: {len(est)} vs {len(gt)}")
    if len(est) == 0:
        raise ValueError("empty rotation sequence")
    if remove_offset:
        R_off = project_to_so3(np.einsum("nij,nkj->ik", est, gt))
        est = R_off.T @ est
    theta2 = [float(np.sum(log_so3(g.T @ e) ** 2)) for e, g in zip(est, gt)]
    return float(np.sqrt(np.mean(theta2)))


def ate(est, gt) -> float:
    """Position RMSE after rigid (no scale) alignment."""
    s, R, t = align_umeyama(est, gt, with_scale=False)
    res = np.asarray(gt) - (np.asarray(est) @ R.T + t)
    return float(np.sqrt(np.mean(np.sum(res * res, axis=1))))


def gravity_angle_deg(g_est, g_true) -> float:
    a = np.asarray(g_est, dtype=float)
    b = np.asarray(g_true, dtype=float)
    # atan2 form stays accurate for tiny angles, unlike arccos
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b)))


def metric_body_positions(s: float, p_wc_bar, R_wb, extrinsics: Extrinsics) -> np.ndarray:
    """Body positions implied by scale ``s``: ``s p_c - R_wb p_bc``."""
    return s * np.asarray(p_wc_bar) - np.einsum("nij,j->ni", np.asarray(R_wb), np.asarray(extrinsics.p_bc))


@dataclass(frozen=True)
class Estimate:
    """What an initialization run produced, in the track's world frame."""

    times: np.ndarray
    R_wb: np.ndarray
    p_wb: np.ndarray     # metric body positions
    v_wb: np.ndarray
    g_w: np.ndarray
    s: float
    bg: np.ndarray
    ba: np.ndarray


@dataclass(frozen=True)
class EvalReport:
    scale_error_pct: float
    scale_error_direct_pct: float | None
    s_est: float
    s_hat: float
    s_align: float
    grav_angle_err: float
    rot_rmse: float
    ate: float
    v_rmse: float | None
    bg_err: float | None
    ba_err: float | None
    n_keyframes: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def match_times(est_times, gt_times, tol: float = 1e-6) -> np.ndarray:
    """Index into ``gt_times`` for every estimate time; raises on mismatch."""
    gt_times = np.asarray(gt_times, dtype=float)
    idx = np.clip(np.searchsorted(gt_times, est_times), 1, max(len(gt_times) - 1, 1))
    idx = np.where(np.abs(gt_times[idx - 1] - est_times) <= np.abs(gt_times[idx] - est_times), idx - 1, idx)
    if len(gt_times) == 1:
        idx = np.zeros(len(est_times), dtype=int)
    bad = np.abs(gt_times[idx] - est_times) > tol
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"no ground-truth pose within {tol} s of estimate time {est_times[k]:.9f}")
    return idx


def evaluate(est: Estimate, truth: KeyframeTruth, remove_rotation_offset: bool = True) -> EvalReport:
    idx = match_times(est.times, truth.times)
    p_gt = truth.p_wb[idx]
    R_gt = truth.R_wb[idx]
    s_align, R_align, _ = align_umeyama(est.p_wb, p_gt, with_scale=True)
    s_hat = 1.0 / s_align
    direct = None
    if truth.s_true is not None:
        direct = scale_error(est.s / truth.s_true)
    v_rmse = None
    if truth.v_wb is not None and est.v_wb is not None:
        dv = truth.v_wb[idx] - est.v_wb @ R_align.T
        v_rmse = float(np.sqrt(np.mean(np.sum(dv * dv, axis=1))))

    def norm_err(a, b):
        return None if a is None or b is None else float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    return EvalReport(
        scale_error_pct=scale_error(s_hat),
        scale_error_direct_pct=direct,
        s_est=float(est.s),
        s_hat=float(s_hat),
        s_align=float(s_align),
        grav_angle_err=gravity_angle_deg(R_align @ est.g_w, truth.g_w),
        rot_rmse=rotation_rmse(est.R_wb, R_gt, remove_rotation_offset),
        ate=ate(est.p_wb, p_gt),
        v_rmse=v_rmse,
        bg_err=norm_err(est.bg, truth.bg),
        ba_err=norm_err(est.ba, truth.ba),
        n_keyframes=len(idx),
    )


def _median(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.median(vals)) if vals else None


def median_row(rows: list[dict], columns: list[str]) -> dict:
    """Column-wise median over numeric fields, skipping missing values."""
    out = {}
    for c in columns:
        vals = [r.get(c) for r in rows]
        if all(v is None or isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            out[c] = _median(vals)
        else:
            out[c] = None
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict], columns: list[str], with_median: bool = False,
                label_column: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    if with_median and rows:
        med = median_row(rows, [c for c in columns if c != label_column])
        if label_column is not None:
            med[label_column] = "median"
        w.writerow([_cell(med.get(c)) for c in columns])
    return buf.getvalue()

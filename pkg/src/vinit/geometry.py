"""SO(3) primitives: skew, Exp/Log, right Jacobian and its inverse.

Rotations are plain 3x3 numpy arrays. Perturbations are applied on the
right, ``R_true = R @ exp_so3(dtheta)``, everywhere in the package.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

EXP_TAYLOR_EPS = 1e-8
JAC_TAYLOR_EPS = 1e-6
ORTHO_TOL = 1e-6

_I3 = np.eye(3)


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def _skew_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def exp_so3(phi) -> np.ndarray:
    """Rodrigues' formula. Accepts a 3-vector or a stack of shape (..., 3)."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim > 1:
        return _exp_so3_batch(phi)
    theta = np.sqrt(phi @ phi)
    K = skew(phi)
    if theta < EXP_TAYLOR_EPS:
        return _I3 + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return _I3 + a * K + b * (K @ K)


def _exp_so3_batch(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < EXP_TAYLOR_EPS
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    K = _skew_batch(phi)
    return _I3 + a[..., None, None] * K + b[..., None, None] * (K @ K)


def check_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError(f"expected a finite 3x3 rotation matrix, got shape {R.shape}")
    resid = np.max(np.abs(R.T @ R - _I3))
    if resid > tol or np.linalg.det(R) <= 0.0:
        raise ValueError(f"matrix is not a proper rotation (orthonormality residual {resid:.3g})")
    return R


def log_so3(R) -> np.ndarray:
    """Inverse of :func:`exp_so3`; the result has norm in [0, pi].

    At an angle of exactly pi the axis is read from the column with the
    largest diagonal of ``R + R^T``, and its sign is chosen so that this
    component is positive.
    """
    R = check_rotation(R)
    w = 0.5 * vee(R - R.T)          # sin(theta) * axis
    s = np.sqrt(w @ w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta < 1e-12:
        return w.copy()
    if c > -0.7:
        return w * (theta / s)
    # Near pi, axis from the symmetric part: u u^T = (R + R^T - 2c I) / (2(1 - c))
    B = (R + R.T - 2.0 * c * _I3) / (2.0 * (1.0 - c))
    i = int(np.argmax(np.diag(B)))
    u = B[:, i] / np.sqrt(B[i, i])
    if s > 1e-12 and u @ w < 0.0:
        u = -u
    return theta * u / np.linalg.norm(u)


def right_jacobian(phi) -> np.ndarray:
    """J_r such that Exp(phi + d) ~= Exp(phi) Exp(J_r(phi) d)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.sqrt(phi @ phi)
    K = skew(phi)
    if theta < JAC_TAYLOR_EPS:
        return _I3 - 0.5 * K + (K @ K) / 6.0
    t2 = theta * theta
    return _I3 - (1.0 - np.cos(theta)) / t2 * K + (theta - np.sin(theta)) / (t2 * theta) * (K @ K)


def right_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.sqrt(phi @ phi)
    K = skew(phi)
    if theta < JAC_TAYLOR_EPS:
        return _I3 + 0.5 * K + (K @ K) / 12.0
    coef = 1.0 / (theta * theta) - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return _I3 + 0.5 * K + coef * (K @ K)


def project_to_so3(M: np.ndarray) -> np.ndarray:
    """Closest rotation in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_angle(R1: np.ndarray, R2: np.ndarray) -> float:
    """Geodesic distance between two rotations, in radians."""
    return float(np.linalg.norm(log_so3(R1.T @ R2)))


def quat_to_matrix(q_xyzw) -> np.ndarray:
    return Rotation.from_quat(np.asarray(q_xyzw, dtype=float)).as_matrix()


def matrix_to_quat(R) -> np.ndarray:
    """Hamilton quaternion in (x, y, z, w) order with w >= 0."""
    q = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    return -q if q[3] < 0 else q

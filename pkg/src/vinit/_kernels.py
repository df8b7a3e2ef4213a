"""Compiled inner loops for per-sample integration and filter steps.

Inputs are validated by the public wrappers; nothing here checks shapes.
"""
import numba
import numpy as np

_JIT = dict(cache=True, nogil=True)


@numba.njit(**_JIT)
def mat3(A, B):
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return C


@numba.njit(**_JIT)
def exp3(x, y, z):
    t2 = x * x + y * y + z * z
    theta = np.sqrt(t2)
    if theta < 1e-8:
        a = 1.0
        b = 0.5
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / t2
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - b * (y * y + z * z)
    R[1, 1] = 1.0 - b * (x * x + z * z)
    R[2, 2] = 1.0 - b * (x * x + y * y)
    R[0, 1] = -a * z + b * x * y
    R[1, 0] = a * z + b * x * y
    R[0, 2] = a * y + b * x * z
    R[2, 0] = -a * y + b * x * z
    R[1, 2] = -a * x + b * y * z
    R[2, 1] = a * x + b * y * z
    return R


@numba.njit(**_JIT)
def integrate_segment(t, gyro, accel, bg, ba):
    """Midpoint preintegration; returns dp, dv, dR, J_dp_dba, J_dv_dba."""
    dR = np.eye(3)
    dv = np.zeros(3)
    dp = np.zeros(3)
    Jv = np.zeros((3, 3))
    Jp = np.zeros((3, 3))
    a = np.empty(3)
    for i in range(t.shape[0] - 1):
        h = t[i + 1] - t[i]
        for j in range(3):
            a[j] = 0.5 * (accel[i, j] + accel[i + 1, j]) - ba[j]
        for r in range(3):
            acc = dR[r, 0] * a[0] + dR[r, 1] * a[1] + dR[r, 2] * a[2]
            dp[r] += dv[r] * h + 0.5 * acc * h * h
            dv[r] += acc * h
            for c in range(3):
                Jp[r, c] += Jv[r, c] * h - 0.5 * dR[r, c] * h * h
                Jv[r, c] -= dR[r, c] * h
        wx = (0.5 * (gyro[i, 0] + gyro[i + 1, 0]) - bg[0]) * h
        wy = (0.5 * (gyro[i, 1] + gyro[i + 1, 1]) - bg[1]) * h
        wz = (0.5 * (gyro[i, 2] + gyro[i + 1, 2]) - bg[2]) * h
        dR = mat3(dR, exp3(wx, wy, wz))
    return dp, dv, dR, Jp, Jv


@numba.njit(**_JIT)
def eskf_propagate(R, P, t, gyro, bg, qn, qw):
    """Per-sample nominal integration and ``P <- F P F^T + Q``."""
    R = R.copy()
    P = P.copy()
    F = np.eye(6)
    for i in range(t.shape[0] - 1):
        h = t[i + 1] - t[i]
        wx = (0.5 * (gyro[i, 0] + gyro[i + 1, 0]) - bg[0]) * h
        wy = (0.5 * (gyro[i, 1] + gyro[i + 1, 1]) - bg[1]) * h
        wz = (0.5 * (gyro[i, 2] + gyro[i + 1, 2]) - bg[2]) * h
        A = exp3(wx, wy, wz)
        R = mat3(R, A)
        for r in range(3):
            for c in range(3):
                F[r, c] = A[c, r]          # Exp(-w h) = Exp(w h)^T
                F[r, 3 + c] = -h if r == c else 0.0
        P = F @ P @ F.T
        for j in range(3):
            P[j, j] += qn * h * h
            P[3 + j, 3 + j] += qw * h
    return R, 0.5 * (P + P.T)


@numba.njit(**_JIT)
def log3(R):
    wx = 0.5 * (R[2, 1] - R[1, 2])
    wy = 0.5 * (R[0, 2] - R[2, 0])
    wz = 0.5 * (R[1, 0] - R[0, 1])
    s = np.sqrt(wx * wx + wy * wy + wz * wz)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = np.arctan2(s, c)
    out = np.empty(3)
    if theta < 1e-12:
        out[0], out[1], out[2] = wx, wy, wz
        return out
    if c > -0.7:
        k = theta / s
        out[0], out[1], out[2] = k * wx, k * wy, k * wz
        return out
    B = (R + R.T - 2.0 * c * np.eye(3)) / (2.0 * (1.0 - c))
    i = 0
    for j in range(1, 3):
        if B[j, j] > B[i, i]:
            i = j
    u = B[:, i] / np.sqrt(B[i, i])
    if s > 1e-12 and u[0] * wx + u[1] * wy + u[2] * wz < 0.0:
        u = -u
    return theta * u / np.sqrt(u @ u)


@numba.njit(**_JIT)
def jr_inv3(x, y, z):
    t2 = x * x + y * y + z * z
    theta = np.sqrt(t2)
    if theta < 1e-6:
        coef = 1.0 / 12.0
    else:
        coef = 1.0 / t2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    K = np.zeros((3, 3))
    K[0, 1], K[0, 2], K[1, 2] = -z, y, -x
    K[1, 0], K[2, 0], K[2, 1] = z, -y, x
    return np.eye(3) + 0.5 * K + coef * (K @ K)


@numba.njit(**_JIT)
def eskf_correct(R, bg, P, r_obs, V):
    """Kalman update with an orientation observation, then injection.

    Returns the new rotation, bias, covariance and the condition number of
    the innovation covariance.
    """
    e = log3(R.T @ r_obs)
    Jinv = jr_inv3(e[0], e[1], e[2])
    H = np.zeros((3, 6))
    H[:, :3] = Jinv
    HP = H @ P
    S = HP @ H.T + V
    ev = np.linalg.eigvalsh(0.5 * (S + S.T))
    cond = np.inf if ev[0] <= 0.0 else ev[2] / ev[0]
    K = np.linalg.solve(S, HP).T
    dx = K @ e
    P_post = (np.eye(6) - K @ H) @ P
    R_new = mat3(R, exp3(dx[0], dx[1], dx[2]))
    return R_new, bg + dx[3:], 0.5 * (P_post + P_post.T), cond


def warmup() -> None:
    """Load or compile every kernel so later calls measure only compute."""
    t = np.array([0.0, 0.005, 0.01])
    w = np.zeros((3, 3))
    z = np.zeros(3)
    integrate_segment(t, w, w, z, z)
    R, P = eskf_propagate(np.eye(3), np.eye(6), t, w, z, 1e-8, 1e-8)
    eskf_correct(R, z, P, np.eye(3), np.eye(3))

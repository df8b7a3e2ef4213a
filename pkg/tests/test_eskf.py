import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vinit.bundle import OrientationObservation
from vinit.errors import NumericalError
from vinit.eskf import (EskfError, EskfNoise, EskfNominal, estimate_gyro_bias, initial_covariance, predict,
                        update)
from vinit.geometry import exp_so3, log_so3, right_jacobian_inv
from vinit.metrics import rotation_rmse
from vinit.preintegration import ImuStream
from vinit.simulate import NoiseConfig, TrajectoryConfig, simulate_dataset


def stream(t, gyro):
    return ImuStream(np.asarray(t, float), np.asarray(gyro, float), np.zeros((len(t), 3)))


def reference_predict(R, P, t, gyro, bg, qn, qw):
    """Literal per-sample F P F^T + Q in numpy."""
    for i in range(len(t) - 1):
        h = t[i + 1] - t[i]
        A = exp_so3((0.5 * (gyro[i] + gyro[i + 1]) - bg) * h)
        R = R @ A
        F = np.eye(6)
        F[:3, :3] = A.T
        F[:3, 3:] = -h * np.eye(3)
        P = F @ P @ F.T + np.diag([qn * h * h] * 3 + [qw * h] * 3)
    return R, P


def propagate_nominal(R, t, gyro, bg):
    for i in range(len(t) - 1):
        h = t[i + 1] - t[i]
        R = R @ exp_so3((0.5 * (gyro[i] + gyro[i + 1]) - bg) * h)
    return R


def test_zero_rate_single_step_adds_exactly_q():
    noise = EskfNoise()
    P = np.zeros((6, 6))
    P[:3, :3] = np.diag([1e-3, 2e-3, 3e-3])
    h = 0.005
    st_, err = predict(EskfNominal(np.eye(3), np.zeros(3)), EskfError.reset(P), noise,
                       stream([0, h], np.zeros((2, 3))), dt=h)
    Q = np.diag([noise.sigma_wn ** 2 * h * h] * 3 + [noise.sigma_ww ** 2 * h] * 3)
    assert np.array_equal(st_.R, np.eye(3))
    assert np.allclose(err.P - P, Q, rtol=0, atol=1e-18)  # ulp of the 3e-3 entry is ~4e-19


def test_zero_rate_keeps_rotation():
    t = np.linspace(0, 0.1, 21)
    st_, _ = predict(EskfNominal(np.eye(3), np.zeros(3)), EskfError.reset(initial_covariance()), EskfNoise(),
                     stream(t, np.zeros((21, 3))))
    assert np.array_equal(st_.R, np.eye(3))


def test_constant_rate_rotation():
    t = np.linspace(0, 0.1, 21)
    st_, _ = predict(EskfNominal(np.eye(3), np.zeros(3)), EskfError.reset(initial_covariance()), EskfNoise(),
                     stream(t, np.tile([0, 0, 1.0], (21, 1))), dt=0.1)
    assert np.allclose(st_.R, exp_so3([0, 0, 0.1]), atol=1e-14)


def test_predict_matches_reference_loop(rng):
    t = np.cumsum(np.r_[0, rng.uniform(0.004, 0.006, 30)])
    gyro = rng.normal(size=(31, 3))
    R0, bg = exp_so3(rng.normal(size=3)), rng.normal(scale=0.01, size=3)
    A = rng.normal(size=(6, 6))
    P0 = A @ A.T * 1e-3
    noise = EskfNoise(1e-2, 1e-3)
    st_, err = predict(EskfNominal(R0, bg), EskfError.reset(P0), noise, stream(t, gyro))
    R_ref, P_ref = reference_predict(R0, P0, t, gyro, bg, 1e-4, 1e-6)
    assert np.allclose(st_.R, R_ref, atol=1e-13)
    assert np.allclose(err.P, P_ref, rtol=1e-12, atol=1e-18)


def test_composed_f_matches_finite_difference(rng):
    t = np.cumsum(np.r_[0, np.full(20, 0.005)])
    gyro = rng.normal(size=(21, 3))
    R0, bg = exp_so3(rng.normal(size=3)), np.array([0.01, -0.02, 0.03])
    R1 = propagate_nominal(R0, t, gyro, bg)
    eps = 1e-6
    F_fd = np.zeros((6, 6))
    F_fd[3:, 3:] = np.eye(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        Rp = propagate_nominal(R0 @ exp_so3(e), t, gyro, bg)
        Rm = propagate_nominal(R0 @ exp_so3(-e), t, gyro, bg)
        F_fd[:3, j] = (log_so3(R1.T @ Rp) - log_so3(R1.T @ Rm)) / (2 * eps)
        Rp = propagate_nominal(R0, t, gyro, bg + e)
        Rm = propagate_nominal(R0, t, gyro, bg - e)
        F_fd[:3, 3 + j] = (log_so3(R1.T @ Rp) - log_so3(R1.T @ Rm)) / (2 * eps)
    A = rng.normal(size=(6, 6))
    P0 = A @ A.T
    _, err = predict(EskfNominal(R0, bg), EskfError.reset(P0), EskfNoise(0.0, 0.0), stream(t, gyro))
    expected = F_fd @ P0 @ F_fd.T
    assert np.linalg.norm(err.P - expected) / np.linalg.norm(expected) < 1e-4


def test_predict_errors():
    s0, e0 = EskfNominal(np.eye(3), np.zeros(3)), EskfError.reset(initial_covariance())
    with pytest.raises(ValueError):
        predict(s0, e0, EskfNoise(), stream([0.0], np.zeros((1, 3))))
    with pytest.raises(ValueError):
        predict(s0, e0, EskfNoise(), stream([0.0, 0.1], np.zeros((2, 3))), dt=-0.1)
    with pytest.raises(ValueError):
        predict(s0, e0, EskfNoise(), stream([0.0, 0.1], np.zeros((2, 3))), dt=0.2)


def test_update_zero_innovation():
    R = exp_so3([0.1, 0.2, 0.3])
    P = initial_covariance()
    st_, err = update(EskfNominal(R, np.zeros(3)), EskfError.reset(P), EskfNoise(), OrientationObservation(0.0, R))
    assert np.allclose(st_.R, R, atol=1e-15)
    assert np.array_equal(st_.bg, np.zeros(3))
    assert np.trace(err.P) <= np.trace(P)
    H = np.hstack([np.eye(3), np.zeros((3, 3))])
    K = P @ H.T @ np.linalg.inv(H @ P @ H.T + EskfNoise().V)
    assert np.allclose(err.P, (np.eye(6) - K @ H) @ P, atol=1e-15)
    # idempotent: a second zero-innovation update leaves the state alone
    st2, _ = update(st_, err, EskfNoise(), OrientationObservation(0.0, R))
    assert np.allclose(st2.R, st_.R, atol=1e-12) and np.allclose(st2.bg, st_.bg, atol=1e-12)


def test_update_uninformative_observation():
    R = exp_so3([0.1, 0.2, 0.3])
    noise = EskfNoise(V=1e12 * np.eye(3))
    st_, _ = update(EskfNominal(R, np.zeros(3)), EskfError.reset(initial_covariance()), noise,
                    OrientationObservation(0.0, R @ exp_so3([0.05, 0, 0])))
    assert np.allclose(st_.R, R, atol=1e-9)
    assert np.allclose(st_.bg, 0, atol=1e-9)


def test_update_matches_textbook_formula(rng):
    R = exp_so3(rng.normal(size=3))
    r = R @ exp_so3([0.02, -0.01, 0.03])
    A = rng.normal(size=(6, 6))
    P = A @ A.T * 1e-3
    V = np.diag([1e-4, 2e-4, 3e-4])
    st_, err = update(EskfNominal(R, np.zeros(3)), EskfError.reset(P), EskfNoise(V=V), OrientationObservation(0, r))
    e = log_so3(R.T @ r)
    H = np.hstack([right_jacobian_inv(e), np.zeros((3, 3))])
    K = P @ H.T @ np.linalg.inv(H @ P @ H.T + V)
    dx = K @ e
    assert np.allclose(st_.R, R @ exp_so3(dx[:3]), atol=1e-13)
    assert np.allclose(st_.bg, dx[3:], atol=1e-13)
    P_post = (np.eye(6) - K @ H) @ P
    assert np.allclose(err.P, 0.5 * (P_post + P_post.T), atol=1e-15)


def test_update_rejects_singular_innovation():
    P = np.zeros((6, 6))
    with pytest.raises(NumericalError):
        update(EskfNominal(np.eye(3), np.zeros(3)), EskfError.reset(P), EskfNoise(V=np.diag([1.0, 1.0, 1e-14])),
               OrientationObservation(0.0, exp_so3([0.1, 0, 0])))


def test_noise_validation():
    with pytest.raises(ValueError):
        EskfNoise(sigma_wn=-1.0)
    with pytest.raises(ValueError):
        EskfNoise(V=-np.eye(3))
    assert EskfNoise().sigma_wn == 1.7e-4 and EskfNoise().sigma_ww == 2e-5


@given(st.integers(0, 2**31 - 1))
def test_covariance_stays_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    noise = EskfNoise(1e-3, 1e-4, V=(0.05 ** 2) * np.eye(3))
    state, err = EskfNominal(np.eye(3), np.zeros(3)), EskfError.reset(initial_covariance())
    t = np.linspace(0, 0.1, 21)
    for _ in range(15):
        state, err = predict(state, err, noise, stream(t, rng.normal(size=(21, 3))))
        assert np.array_equal(err.P, err.P.T)
        assert np.linalg.eigvalsh(err.P).min() >= -1e-12
        tr_pred = np.trace(err.P)
        state, err = update(state, err, noise, OrientationObservation(0, state.R @ exp_so3(rng.normal(size=3) * 0.05)))
        assert np.array_equal(err.P, err.P.T)
        assert np.linalg.eigvalsh(err.P).min() >= -1e-12
        assert np.trace(err.P) <= tr_pred + 1e-12


def test_estimate_zero_bias_exact():
    b = simulate_dataset(TrajectoryConfig(seed=4), NoiseConfig(), 1.0)
    bg, rots = estimate_gyro_bias(b.track, b.imu)
    assert np.linalg.norm(bg) < 1e-6
    for R, obs in zip(rots, b.track.R_wb):
        assert np.linalg.norm(log_so3(obs.T @ R)) < 1e-6


def test_estimate_recovers_bias():
    truth = np.array([0.01, -0.02, 0.015])
    b = simulate_dataset(TrajectoryConfig(seed=1), NoiseConfig(bg_true=tuple(truth)), 1.0)
    bg, _ = estimate_gyro_bias(b.track, b.imu)
    assert np.abs(bg - truth).max() < 1e-3


def test_bias_error_shrinks_with_window():
    truth = np.array([0.01, -0.02, 0.015])
    b = simulate_dataset(TrajectoryConfig(seed=6, duration=2.0), NoiseConfig(bg_true=tuple(truth)), 1.0)
    errs = [np.linalg.norm(estimate_gyro_bias(b.track.head(n), b.imu)[0] - truth) for n in (5, 10, 20)]
    assert errs[0] > errs[1] > errs[2]


def test_rotation_noise_monte_carlo():
    noise = EskfNoise(V=0.1 ** 2 * np.eye(3))
    P0 = initial_covariance(theta_var=0.01)
    wins = 0
    for seed in range(1, 21):
        b = simulate_dataset(TrajectoryConfig(seed=seed),
                             NoiseConfig(bg_true=(0.02, 0, 0), rot_obs_noise_std=0.1), 1.0)
        _, rots = estimate_gyro_bias(b.track, b.imu, noise, P0)
        wins += rotation_rmse(rots, b.truth.R_wb) < rotation_rmse(b.track.R_wb, b.truth.R_wb)
    assert wins == 20


def test_estimate_errors():
    b = simulate_dataset(TrajectoryConfig(seed=1), NoiseConfig(), 1.0)
    with pytest.raises(ValueError):
        estimate_gyro_bias(b.track.head(1), b.imu)
    keep = np.ones(len(b.imu), bool)
    keep[50:55] = False
    gappy = ImuStream(b.imu.t[keep], b.imu.gyro[keep], b.imu.accel[keep])
    with pytest.raises(ValueError, match="gap"):
        estimate_gyro_bias(b.track, gappy)

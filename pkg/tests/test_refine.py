import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vinit.bundle import Extrinsics
from vinit.errors import DivergenceError, NumericalError
from vinit.linear_align import LinearSolution, solve_initial
from vinit.preintegration import PreintegratedDelta, preintegrate, preintegrate_track
from vinit.refine import (
    PairWeights, build_refined_block, cholesky_preconditioner, compute_weights, pcg,
    recover_gravity, refine, tangent_basis, weighted_normal_equations, weighted_residual,
)
from vinit.simulate import GRAVITY, NoiseConfig, TrajectoryConfig, simulate_dataset
from vinit.metrics import gravity_angle_deg

NOISY = NoiseConfig(gyro_noise_std=1.7e-4, gyro_walk_std=2e-5, accel_noise_std=2e-3,
                    accel_walk_std=3e-3, ba_true=(0.05, -0.03, 0.02))


def solve_chain(bundle, bg=np.zeros(3)):
    deltas = preintegrate_track(bundle.imu, bundle.track.times, bg)
    linear = solve_initial(bundle.track, bundle.extrinsics, deltas)
    return deltas, linear


def true_x2(bundle, basis):
    tr = bundle.truth
    return np.concatenate([tr.v_wb.ravel(), tr.ba, [0.0, 0.0, tr.s_true]])


# tangent basis

def test_basis_down_gravity():
    b = tangent_basis([0.0, 0.0, -1.0])
    assert np.allclose(b.g0, [0, 0, -9.81])
    assert np.allclose(b.b1, [0, -1, 0]) and np.allclose(b.b2, [-1, 0, 0])


def test_basis_near_x_axis():
    b = tangent_basis([1.0, 0.0, 0.0])
    assert np.allclose(b.b1, [0, 0, 1]) and np.allclose(b.b2, [0, -1, 0])


@given(st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_basis_orthonormal(v):
    u = np.asarray(v) / np.linalg.norm(v)
    b = tangent_basis(u)
    Q = np.column_stack([u, b.b1, b.b2])
    assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    assert np.linalg.norm(b.g0) == pytest.approx(9.81)


def test_basis_rejects_bad_direction():
    with pytest.raises(ValueError):
        tangent_basis(np.zeros(3))
    with pytest.raises(ValueError):
        tangent_basis([0, 0, -2.0])


# blocks

def test_block_shape_n2():
    from vinit.bundle import KeyframeTrack
    z = np.zeros(3)
    d = PreintegratedDelta(z, z, np.eye(3), 0.1, np.zeros((3, 3)), np.zeros((3, 3)), z, z)
    track = KeyframeTrack(np.array([0, 0.1]), np.stack([np.eye(3)] * 2), np.zeros((2, 3)))
    H, Z = build_refined_block(0, track, Extrinsics(), d, tangent_basis([0, 0, -1.0]))
    assert H.shape == (6, 12) and Z.shape == (6,)
    with pytest.raises(IndexError):
        build_refined_block(1, track, Extrinsics(), d, tangent_basis([0, 0, -1.0]))


def test_truth_zero_residual():
    b = simulate_dataset(TrajectoryConfig(seed=4), NoiseConfig(ba_true=(0.05, -0.03, 0.02)), 2.0,
                         Extrinsics(p_bc=np.array([0.05, 0.0, -0.02])))
    deltas = preintegrate_track(b.imu, b.track.times)
    basis = tangent_basis(GRAVITY / 9.81)
    x = true_x2(b, basis)
    for k, d in enumerate(deltas):
        H, Z = build_refined_block(k, b.track, b.extrinsics, d, basis)
        assert np.linalg.norm(H @ x - Z) < 1e-8


def test_ba_columns_match_reintegration(clean_bundle):
    seg = clean_bundle.imu.between(clean_bundle.track.times[2], clean_bundle.track.times[3])
    d0 = preintegrate(seg)
    basis = tangent_basis(GRAVITY / 9.81)
    H, Z = build_refined_block(2, clean_bundle.track, clean_bundle.extrinsics, d0, basis)
    j = 3 * len(clean_bundle.track)
    eps = 1e-4
    for i in range(3):
        ba = np.zeros(3)
        ba[i] = eps
        d1 = preintegrate(seg, ba=ba)
        fd = -np.r_[d1.dp - d0.dp, d1.dv - d0.dv] / eps
        assert np.allclose(H[:, j + i], fd, rtol=1e-3, atol=1e-9)


# weights

def test_weights_examples():
    H = np.eye(6)
    w = compute_weights(H, np.zeros(6), np.zeros(6))
    assert w.w_alpha == 1.0 and w.w_beta == 1.0
    w = compute_weights(H, np.zeros(6), np.r_[np.log(2.0), 0, 0, 0, 0, np.log(4.0)])
    assert w.w_alpha == pytest.approx(0.5) and w.w_beta == pytest.approx(0.25)


def test_weights_downweight_outlier(rng):
    H = np.eye(6)
    inlier = [compute_weights(H, np.zeros(6), 0.01 * rng.normal(size=6)).w_alpha for _ in range(200)]
    outlier = [compute_weights(H, np.zeros(6), 5.0 * rng.normal(size=6)).w_alpha for _ in range(200)]
    assert np.median(inlier) > 0.95 and np.median(outlier) < 0.01


# pcg

def random_spd(rng, n, cond=50.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q @ np.diag(np.geomspace(1.0, cond, n)) @ Q.T


def test_pcg_four_steps_close_to_dense(rng):
    worst = 0.0
    for _ in range(20):
        Hs = rng.normal(size=(54, 36))
        M = Hs.T @ Hs
        w = np.exp(-rng.uniform(0, 0.3, 54))
        A = Hs.T @ (w[:, None] ** 2 * Hs)
        b = rng.normal(size=36)
        x_ref = np.linalg.solve(A, b)
        x = pcg(A, b, np.zeros(36), 4, cholesky_preconditioner(M))
        worst = max(worst, abs(x[-1] - x_ref[-1]) / abs(x_ref[-1]))
    assert worst < 0.01


def test_pcg_exact_in_n_steps(rng):
    A = random_spd(rng, 6)
    b = rng.normal(size=6)
    assert np.allclose(pcg(A, b, np.zeros(6), 6), np.linalg.solve(A, b), rtol=1e-8)
    assert np.allclose(pcg(A, b, np.zeros(6), 2, lambda r: np.linalg.solve(A, r)), np.linalg.solve(A, b))


def test_pcg_fixed_point(rng):
    A = random_spd(rng, 5)
    x = rng.normal(size=5)
    assert np.array_equal(pcg(A, A @ x, x, 4), x)


def test_cholesky_preconditioner_rejects_indefinite():
    with pytest.raises(NumericalError):
        cholesky_preconditioner(np.diag([1.0, -1.0]))


# gravity recovery

def test_recover_gravity_examples():
    basis = tangent_basis([0, 0, -1.0])
    sol = type("S", (), {"w1": 0.0, "w2": 0.0})()
    assert np.allclose(recover_gravity(sol, basis), [0, 0, -9.81])
    sol.w1, sol.w2 = 0.0, 9.81
    g = recover_gravity(sol, basis)
    assert np.linalg.norm(g) == pytest.approx(9.81)
    assert np.allclose(g, 9.81 * np.array([-1, 0, -1]) / np.sqrt(2))


# end to end

def test_exact_seed_is_fixed_point(clean_bundle):
    deltas, linear = solve_chain(clean_bundle)
    out = refine(linear, clean_bundle.track, clean_bundle.extrinsics, deltas)
    assert abs(out.s - linear.s) < 1e-9
    assert np.linalg.norm(out.ba) < 1e-6
    assert np.linalg.norm(out.g_w) == pytest.approx(9.81, abs=1e-12)
    assert gravity_angle_deg(out.g_w, GRAVITY) < 1e-6
    assert all(w.w_alpha > 1 - 1e-8 and w.w_beta > 1 - 1e-8 for w in out.weights)


def test_recovers_accel_bias():
    b = simulate_dataset(TrajectoryConfig(seed=5), NoiseConfig(ba_true=(0.05, -0.03, 0.02)), 1.0)
    deltas, linear = solve_chain(b)
    out = refine(linear, b.track, b.extrinsics, deltas)
    assert np.abs(out.ba - b.truth.ba).max() < 5e-3


def test_jacobi_option_runs(clean_bundle):
    deltas, linear = solve_chain(clean_bundle)
    out = refine(linear, clean_bundle.track, clean_bundle.extrinsics, deltas, preconditioner="jacobi")
    assert out.s == pytest.approx(2.0, rel=1e-6)


def test_noise_suite_refine_not_worse():
    lin_err, ref_err, better_g, invariant = [], [], 0, 0
    for seed in range(1, 21):
        b = simulate_dataset(TrajectoryConfig(seed=seed), NOISY, 2.0)
        deltas, linear = solve_chain(b)
        out = refine(linear, b.track, b.extrinsics, deltas)
        lin_err.append(abs(linear.s / 2.0 - 1))
        ref_err.append(abs(out.s / 2.0 - 1))
        better_g += gravity_angle_deg(out.g_w, GRAVITY) <= gravity_angle_deg(linear.g_w, GRAVITY)
        # the weighted residual at the refined iterate is no larger than at the seed
        basis = tangent_basis(linear.g_w / np.linalg.norm(linear.g_w))
        blocks = [build_refined_block(k, b.track, b.extrinsics, d, basis) for k, d in enumerate(deltas)]
        n = len(b.track)
        x_seed = np.concatenate([linear.v.ravel(), np.zeros(5), [linear.s]])
        x_out = np.concatenate([out.v.ravel(), out.ba, [out.w1, out.w2, out.s]])
        invariant += weighted_residual(blocks, out.weights, x_out) <= weighted_residual(blocks, out.weights, x_seed) + 1e-12
    assert np.median(ref_err) <= np.median(lin_err)
    assert better_g >= 14
    assert invariant == 20


def test_argument_errors(clean_bundle):
    deltas, linear = solve_chain(clean_bundle)
    with pytest.raises(ValueError, match="preconditioner"):
        refine(linear, clean_bundle.track, clean_bundle.extrinsics, deltas, preconditioner="ilu")
    with pytest.raises(ValueError):
        refine(linear, clean_bundle.track, clean_bundle.extrinsics, deltas[:-1])
    bad = LinearSolution(linear.v, linear.g_w, -1.0)
    with pytest.raises(ValueError):
        refine(bad, clean_bundle.track, clean_bundle.extrinsics, deltas)


def test_divergence_detected(clean_bundle):
    deltas, linear = solve_chain(clean_bundle)
    # gravity seeded upside down cannot be reached inside its tangent plane
    wrong = LinearSolution(linear.v, -linear.g_w, linear.s)
    with pytest.raises(DivergenceError):
        refine(wrong, clean_bundle.track, clean_bundle.extrinsics, deltas)
    with pytest.raises(ValueError, match="non-finite"):
        refine(LinearSolution(np.full_like(linear.v, np.nan), linear.g_w, linear.s),
               clean_bundle.track, clean_bundle.extrinsics, deltas)


def test_deterministic(clean_bundle):
    deltas, linear = solve_chain(clean_bundle)
    a = refine(linear, clean_bundle.track, clean_bundle.extrinsics, deltas).as_vector()
    b = refine(linear, clean_bundle.track, clean_bundle.extrinsics, deltas).as_vector()
    assert np.array_equal(a, b)


def test_outlier_pair_gets_smallest_weight():
    from dataclasses import replace
    for seed in range(20):
        b = simulate_dataset(TrajectoryConfig(seed=seed), NoiseConfig(accel_noise_std=2e-3, gyro_noise_std=1.7e-4), 1.0)
        deltas = preintegrate_track(b.imu, b.track.times)
        k = seed % len(deltas)
        deltas[k] = replace(deltas[k], dp=deltas[k].dp + np.array([1.0, 0.0, 0.0]))
        linear = solve_initial(b.track, b.extrinsics, deltas)
        basis = tangent_basis(linear.g_w / np.linalg.norm(linear.g_w))
        x = np.concatenate([linear.v.ravel(), np.zeros(5), [linear.s]])
        w = [compute_weights(*build_refined_block(j, b.track, b.extrinsics, d, basis), x).w_alpha
             for j, d in enumerate(deltas)]
        assert all(w[k] < w[j] for j in range(len(w)) if j != k)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_weights_monotone(a, c):
    H = np.eye(6)
    wa = compute_weights(H, np.zeros(6), np.r_[a, 0, 0, 0, 0, 0]).w_alpha
    wc = compute_weights(H, np.zeros(6), np.r_[c, 0, 0, 0, 0, 0]).w_alpha
    assert 0 < wa <= 1 and 0 < wc <= 1
    if a < c:
        assert wa >= wc


def test_jacobi_rejects_zero_diagonal():
    from vinit.refine import jacobi_preconditioner
    with pytest.raises(NumericalError):
        jacobi_preconditioner(np.diag([1.0, 0.0, 2.0]))

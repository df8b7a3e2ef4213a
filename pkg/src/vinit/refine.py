"""Weighted refinement of velocities, scale, accelerometer bias and gravity.

Gravity keeps its known magnitude and is perturbed in the plane tangent to
the direction found by the linear step. Unknowns are ordered
``x = [v_0, ..., v_{N-1}, ba, w1, w2, s]``. Each keyframe pair contributes
six rows whose position and velocity halves are weighted by
``exp(-||residual||)``; the weighted normal equations are solved with a
fixed number of preconditioned conjugate-gradient iterations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .bundle import Extrinsics, KeyframeTrack
from .errors import DivergenceError, NumericalError
from .linear_align import LinearSolution, _lever_arm_terms
from .preintegration import PreintegratedDelta

GRAVITY_MAGNITUDE = 9.81
PCG_ITERATIONS = 4
IRLS_PASSES = 2
PRECONDITIONERS = ("normal", "jacobi")


@dataclass(frozen=True)
class TangentBasis:
    g0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        """3x2 matrix with columns b1, b2."""
        return np.column_stack([self.b1, self.b2])


@dataclass(frozen=True)
class PairWeights:
    w_alpha: float
    w_beta: float
    e_alpha: np.ndarray
    e_beta: np.ndarray


@dataclass(frozen=True)
class RefinedSolution:
    v: np.ndarray
    ba: np.ndarray
    w1: float
    w2: float
    s: float
    g_w: np.ndarray
    weights: tuple = ()

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v.ravel(), self.ba, [self.w1, self.w2, self.s]])


def tangent_basis(g_unit, magnitude: float = GRAVITY_MAGNITUDE) -> TangentBasis:
    g_unit = np.asarray(g_unit, dtype=float)
    norm = np.linalg.norm(g_unit)
    if norm == 0.0:
        raise ValueError("gravity direction must be non-zero")
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"gravity direction must be a unit vector (norm {norm:.6g})")
    g_unit = g_unit / norm
    a = np.array([0.0, 1.0, 0.0]) if abs(g_unit[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    b1 = np.cross(g_unit, a)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(g_unit, b1)
    return TangentBasis(magnitude * g_unit, b1, b2)


def build_refined_block(k: int, track: KeyframeTrack, extrinsics: Extrinsics,
                        delta: PreintegratedDelta, basis: TangentBasis):
    n = len(track)
    if not 0 <= k <= n - 2:
        raise IndexError(f"pair index {k} out of range for {n} keyframes")
    Rk_T, dt, dp_bar, b_pos = _lever_arm_terms(k, track, extrinsics, delta)
    b = basis.matrix
    H = np.zeros((6, 3 * n + 6))
    c = 3 * k
    j = 3 * n
    H[:3, c:c + 3] = -Rk_T * dt
    H[:3, j:j + 3] = -delta.J_dp_dba
    H[:3, j + 3:j + 5] = -0.5 * dt * dt * (Rk_T @ b)
    H[:3, j + 5] = Rk_T @ dp_bar
    H[3:, c:c + 3] = -Rk_T
    H[3:, c + 3:c + 6] = Rk_T
    H[3:, j:j + 3] = -delta.J_dv_dba
    H[3:, j + 3:j + 5] = -dt * (Rk_T @ b)
    Z = np.concatenate([
        b_pos + 0.5 * dt * dt * (Rk_T @ basis.g0),
        delta.dv + dt * (Rk_T @ basis.g0),
    ])
    return H, Z


def compute_weights(H_k: np.ndarray, Z_k: np.ndarray, x: np.ndarray) -> PairWeights:
    e = H_k @ x - Z_k
    e_a, e_b = e[:3], e[3:]
    return PairWeights(float(np.exp(-np.linalg.norm(e_a))), float(np.exp(-np.linalg.norm(e_b))), e_a, e_b)


def jacobi_preconditioner(A: np.ndarray):
    d = np.diag(A)
    if np.any(d <= 0.0):
        raise NumericalError("normal equations have a non-positive diagonal entry")
    inv_d = 1.0 / d
    return lambda r: inv_d * r


def cholesky_preconditioner(M: np.ndarray):
    """Apply ``M^{-1}`` through a Cholesky factorisation of SPD ``M``."""
    try:
        factor = cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("preconditioner matrix is not positive definite") from exc
    return lambda r: cho_solve(factor, r)


def pcg(A: np.ndarray, b: np.ndarray, x0: np.ndarray, iterations: int, precond=None) -> np.ndarray:
    """Preconditioned conjugate gradient on SPD ``A`` for a fixed number of
    iterations (stops early only on an exact hit).

    ``precond`` maps a residual to ``M^{-1} r``; Jacobi when omitted.
    """
    apply = jacobi_preconditioner(A) if precond is None else precond
    x = x0.copy()
    r = b - A @ x
    z = apply(r)
    p = z.copy()
    rz = r @ z
    for _ in range(iterations):
        if rz == 0.0:
            break
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = apply(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def _row_weights(weights) -> np.ndarray:
    return np.repeat([[w.w_alpha, w.w_beta] for w in weights], 3)


def _normal_equations(H: np.ndarray, Z: np.ndarray, row_w: np.ndarray, n: int, ba_damping: float):
    HW = H.T * (row_w * row_w)
    M = HW @ H
    if ba_damping > 0.0:
        M[3 * n:3 * n + 3, 3 * n:3 * n + 3] += ba_damping * np.eye(3)
    return M, HW @ Z


def _stacked_weights(H: np.ndarray, Z: np.ndarray, x: np.ndarray) -> list[PairWeights]:
    e = (H @ x - Z).reshape(-1, 2, 3)
    w = np.exp(-np.sqrt(np.einsum("kij,kij->ki", e, e)))
    return [PairWeights(float(a), float(b), ek[0], ek[1]) for (a, b), ek in zip(w, e)]


def weighted_normal_equations(blocks, weights, n: int, ba_damping: float = 0.0):
    H = np.vstack([b[0] for b in blocks])
    Z = np.concatenate([b[1] for b in blocks])
    return _normal_equations(H, Z, _row_weights(weights), n, ba_damping)


def weighted_residual(blocks, weights, x) -> float:
    total = 0.0
    for (H, Z), w in zip(blocks, weights):
        e = H @ x - Z
        total += w.w_alpha ** 2 * (e[:3] @ e[:3]) + w.w_beta ** 2 * (e[3:] @ e[3:])
    return float(np.sqrt(total))


def recover_gravity(sol, basis: TangentBasis) -> np.ndarray:
    g = basis.g0 + sol.w1 * basis.b1 + sol.w2 * basis.b2
    return np.linalg.norm(basis.g0) * g / np.linalg.norm(g)


def refine(seed: LinearSolution, track: KeyframeTrack, extrinsics: Extrinsics,
           deltas: Sequence[PreintegratedDelta], gravity_magnitude: float = GRAVITY_MAGNITUDE,
           pcg_iterations: int = PCG_ITERATIONS, irls_passes: int = IRLS_PASSES,
           ba_damping: float = 0.0, preconditioner: str = "normal") -> RefinedSolution:
    """Reweight-and-solve starting from the linear solution.

    Every pass recomputes the pair weights at the current iterate, then
    runs ``pcg_iterations`` PCG steps on the weighted normal equations
    starting from that iterate.

    ``preconditioner="normal"`` uses the unweighted normal matrix ``H^T H``
    (factored once); since every weight lies in (0, 1] the preconditioned
    spectrum stays inside ``[min w^2, max w^2]`` and four steps are enough
    to move the accelerometer bias. ``"jacobi"`` uses the diagonal of the
    weighted matrix instead.
    """
    if preconditioner not in PRECONDITIONERS:
        raise ValueError(f"unknown preconditioner {preconditioner!r}; expected one of {PRECONDITIONERS}")
    if not seed.s > 0:
        raise ValueError("seed scale must be positive")
    if not (np.all(np.isfinite(seed.v)) and np.all(np.isfinite(seed.g_w))):
        raise ValueError("seed solution contains non-finite values")
    n = len(track)
    if len(deltas) != n - 1:
        raise ValueError(f"expected {n - 1} deltas for {n} keyframes, got {len(deltas)}")
    basis = tangent_basis(seed.g_w / np.linalg.norm(seed.g_w), gravity_magnitude)
    blocks = [build_refined_block(k, track, extrinsics, d, basis) for k, d in enumerate(deltas)]

    H_all = np.vstack([b[0] for b in blocks])
    Z_all = np.concatenate([b[1] for b in blocks])

    x = np.concatenate([seed.v.ravel(), np.zeros(5), [seed.s]])
    precond = None
    if preconditioner == "normal":
        unit = np.ones(len(Z_all))
        precond = cholesky_preconditioner(_normal_equations(H_all, Z_all, unit, n, ba_damping)[0])
    weights = []
    for _ in range(irls_passes):
        weights = _stacked_weights(H_all, Z_all, x)
        M, rhs = _normal_equations(H_all, Z_all, _row_weights(weights), n, ba_damping)
        x = pcg(M, rhs, x, pcg_iterations, precond)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("refinement produced a non-finite iterate")

    j = 3 * n
    w1, w2, s = float(x[j + 3]), float(x[j + 4]), float(x[j + 5])
    if max(abs(w1), abs(w2)) > 0.5 * gravity_magnitude:
        raise DivergenceError(f"gravity tangent update too large (w1={w1:.3g}, w2={w2:.3g})")
    if s <= 0.0:
        raise DivergenceError(f"refined scale is not positive (s={s:.3g})")
    ba = x[j:j + 3] + deltas[0].ba_used
    sol = RefinedSolution(x[:j].reshape(n, 3).copy(), ba, w1, w2, s, np.zeros(3), tuple(weights))
    return RefinedSolution(sol.v, sol.ba, w1, w2, s, recover_gravity(sol, basis), sol.weights)

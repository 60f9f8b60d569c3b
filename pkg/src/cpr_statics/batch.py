"""Vectorized SE(3) and element kernels over stacks of elements.

Every function here mirrors a scalar reference in :mod:`lie` or
:mod:`element` and operates on arrays with a leading stack axis.  The
assembly uses these to avoid per-element Python overhead; the scalar
versions remain the documented API and serve as test oracles.
"""

from __future__ import annotations

import math

import numpy as np

from .element import MAX_A_CONDITION, MAX_ELEMENT_ROTATION
from .errors import ElementRotationTooLarge, RotationNearPi, SingularAMatrix
from .lie import PI_MARGIN, SMALL_ANGLE


class BatchError(Exception):
    """Wraps an element-level error together with the offending stack index."""

    def __init__(self, index: int, error: Exception):
        super().__init__(str(error))
        self.index = index
        self.error = error


def skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", v, v))


def _split(theta: np.ndarray):
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    return small, safe, theta * theta


def _coefficients(theta: np.ndarray):
    """``sin t / t, (1 - cos t)/t^2, (t - sin t)/t^3`` with Taylor branches."""
    small, t, t2 = _split(theta)
    s, c = np.sin(t), np.cos(t)
    sinc = np.where(small, 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)), s / t)
    a1 = np.where(small, 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0)), (1.0 - c) / (t * t))
    a2 = np.where(small, 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)), (t - s) / (t * t * t))
    return sinc, a1, a2


def _inv_coefficient(theta: np.ndarray) -> np.ndarray:
    small, t, t2 = _split(theta)
    big = 1.0 / (t * t) - (1.0 + np.cos(t)) / (2.0 * t * np.sin(np.where(small, 1.0, t)))
    return np.where(small, 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0, big)


def _q_coefficients(theta: np.ndarray):
    small, t, t2s = _split(theta)
    s, c = np.sin(t), np.cos(t)
    tt = t * t
    c2 = np.where(small, 1.0 / 6.0 - t2s / 120.0 + t2s * t2s / 5040.0, (t - s) / (tt * t))
    c3 = np.where(small, 1.0 / 24.0 - t2s / 720.0 + t2s * t2s / 40320.0, (tt + 2.0 * c - 2.0) / (2.0 * tt * tt))
    c4 = np.where(
        small,
        1.0 / 120.0 - t2s / 2520.0 + t2s * t2s / 120960.0,
        (2.0 * t - 3.0 * s + t * c) / (2.0 * tt * tt * t),
    )
    return c2, c3, c4


def exp_se3(v: np.ndarray) -> np.ndarray:
    kappa, eps = v[..., :3], v[..., 3:]
    sinc, a1, a2 = _coefficients(_norm(kappa))
    K = skew(kappa)
    K2 = K @ K
    eye = np.eye(3)
    g = np.zeros(v.shape[:-1] + (4, 4))
    g[..., :3, :3] = eye + sinc[..., None, None] * K + a1[..., None, None] * K2
    V = eye + a1[..., None, None] * K + a2[..., None, None] * K2
    g[..., :3, 3] = np.einsum("...ij,...j->...i", V, eps)
    g[..., 3, 3] = 1.0
    return g


def so3_jacobian_inv(kappa: np.ndarray) -> np.ndarray:
    K = skew(kappa)
    return np.eye(3) - 0.5 * K + _inv_coefficient(_norm(kappa))[..., None, None] * (K @ K)


def log_se3(g: np.ndarray):
    """Returns ``(twists, angles)``; raises :class:`BatchError` near pi."""
    R = g[..., :3, :3]
    w = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    s = _norm(w)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    bad = np.flatnonzero(theta.reshape(-1) > math.pi - PI_MARGIN)
    if bad.size:
        i = int(bad[0])
        raise BatchError(i, RotationNearPi(f"rotation angle {theta.reshape(-1)[i]:.12g} is within {PI_MARGIN:g} of pi"))
    small, _, t2 = _split(theta)
    factor = np.where(small, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0, theta / np.where(small, 1.0, s))
    kappa = factor[..., None] * w
    eps = np.einsum("...ij,...j->...i", so3_jacobian_inv(kappa), g[..., :3, 3])
    return np.concatenate([kappa, eps], axis=-1), theta


def q_block(kappa: np.ndarray, eps: np.ndarray) -> np.ndarray:
    c2, c3, c4 = (x[..., None, None] for x in _q_coefficients(_norm(kappa)))
    P = skew(kappa)
    E = skew(eps)
    PE = P @ E
    EP = E @ P
    PEP = PE @ P
    return 0.5 * E + c2 * (PE + EP + PEP) + c3 * (P @ PE + EP @ P - 3.0 * PEP) + c4 * (PEP @ P + P @ PEP)


def dexp_inv(omega: np.ndarray) -> np.ndarray:
    kappa, eps = omega[..., :3], omega[..., 3:]
    Ti = so3_jacobian_inv(kappa)
    out = np.zeros(omega.shape[:-1] + (6, 6))
    out[..., :3, :3] = Ti
    out[..., 3:, 3:] = Ti
    out[..., 3:, :3] = -Ti @ q_block(kappa, eps) @ Ti
    return out


def adjoint_group(g: np.ndarray) -> np.ndarray:
    R = g[..., :3, :3]
    out = np.zeros(g.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., 3:, :3] = skew(g[..., :3, 3]) @ R
    return out


def adjoint_algebra(v: np.ndarray) -> np.ndarray:
    K = skew(v[..., :3])
    out = np.zeros(v.shape[:-1] + (6, 6))
    out[..., :3, :3] = K
    out[..., 3:, 3:] = K
    out[..., 3:, :3] = skew(v[..., 3:])
    return out


def coadjoint_matrix(lam: np.ndarray) -> np.ndarray:
    m, f = skew(lam[..., :3]), skew(lam[..., 3:])
    out = np.zeros(lam.shape[:-1] + (6, 6))
    out[..., :3, :3] = m
    out[..., :3, 3:] = f
    out[..., 3:, :3] = f
    return out


def inv_pose(g: np.ndarray) -> np.ndarray:
    Rt = np.swapaxes(g[..., :3, :3], -1, -2)
    out = np.zeros_like(g)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, g[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def magnus_matrix(slope: np.ndarray, h: np.ndarray) -> np.ndarray:
    h = h[..., None, None]
    return h * np.eye(6) - (h ** 3 / 12.0) * adjoint_algebra(slope)


def magnus_matrix_inv(slope: np.ndarray, h: np.ndarray) -> np.ndarray:
    a = (h * h / 12.0)[..., None, None]
    B = skew(slope[..., :3])
    denom = 1.0 + a * a * np.einsum("...i,...i->...", slope[..., :3], slope[..., :3])[..., None, None]
    Xi = (np.eye(3) + (a * B + a * a * (B @ B)) / denom) / h[..., None, None]
    Y = -(h ** 3 / 12.0)[..., None, None] * skew(slope[..., 3:])
    out = np.zeros(slope.shape[:-1] + (6, 6))
    out[..., :3, :3] = Xi
    out[..., 3:, 3:] = Xi
    out[..., 3:, :3] = -Xi @ Y @ Xi
    return out


class ElementStack:
    """Kinematics, energy and derivatives of a stack of ``N`` elements.

    ``pose_a``/``pose_b`` are ``(N, 4, 4)``, ``slope`` is ``(N, 6)``,
    ``length`` is ``(N,)``, ``stiffness`` is ``(N, 6, 6)`` and
    ``natural_strain`` is ``(N, 6)``.
    """

    def __init__(self, pose_a, pose_b, slope, length, stiffness, natural_strain):
        self.slope = slope
        self.length = length
        self.stiffness = stiffness
        self.natural_strain = natural_strain
        self.rel = inv_pose(pose_a) @ pose_b
        self.omega, angle = log_se3(self.rel)
        too_big = np.flatnonzero(angle >= MAX_ELEMENT_ROTATION)
        if too_big.size:
            i = int(too_big[0])
            raise BatchError(i, ElementRotationTooLarge(
                f"relative rotation {angle[i]:.4f} rad across the element is not below pi/2"
            ))
        A = magnus_matrix(slope, length)
        self.A_inv = magnus_matrix_inv(slope, length)
        cond = np.abs(A).sum(axis=-2).max(axis=-1) * np.abs(self.A_inv).sum(axis=-2).max(axis=-1)
        bad = np.flatnonzero(~(cond < MAX_A_CONDITION))
        if bad.size:
            i = int(bad[0])
            raise BatchError(i, SingularAMatrix(
                f"A = h I - h^3/12 ad(slope) has condition {cond[i]:.3g}; slope is implausibly large"
            ))
        self.mean = np.einsum("nij,nj->ni", self.A_inv, self.omega)
        self.c = length ** 3 / 12.0
        D = dexp_inv(self.omega)
        self.D = D
        self.J1 = -self.A_inv @ D
        self.J2 = self.A_inv @ D @ adjoint_group(self.rel)
        self.J3 = -self.c[:, None, None] * self.A_inv @ adjoint_algebra(self.mean)
        self.delta = self.mean - natural_strain
        self.force = np.einsum("nij,nj->ni", stiffness, self.delta)  # K (mean - xi0)

    def energies(self) -> np.ndarray:
        h = self.length
        slope_k = np.einsum("ni,nij,nj->n", self.slope, self.stiffness, self.slope)
        return 0.5 * h * np.einsum("ni,ni->n", self.delta, self.force) + h ** 3 / 24.0 * slope_k

    def residuals(self) -> np.ndarray:
        h = self.length[:, None]
        stress = h * self.force
        out = np.empty((len(h), 18))
        out[:, :6] = np.einsum("nji,nj->ni", self.J1, stress)
        out[:, 6:12] = np.einsum("nji,nj->ni", self.J2, stress)
        out[:, 12:] = np.einsum("nji,nj->ni", self.J3, stress) + (
            self.c[:, None] * np.einsum("nij,nj->ni", self.stiffness, self.slope)
        )
        return out

    def tangents(self) -> np.ndarray:
        B = np.concatenate([self.J1, self.J2, self.J3], axis=-1)
        H = self.length[:, None, None] * (np.swapaxes(B, -1, -2) @ self.stiffness @ B)
        H[:, 12:, 12:] += self.c[:, None, None] * self.stiffness
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def geometric_tangents(self, step: float = 1e-6) -> np.ndarray:
        """Batched counterpart of :func:`element.element_geometric_tangent`."""
        n = len(self.length)
        c = self.c[:, None, None]
        lam = np.einsum("nji,nj->ni", self.A_inv, self.force)  # A^-T K (mean - xi0)
        C = coadjoint_matrix(lam)
        omega = self.omega
        signs = np.array([1.0, -1.0])

        # Angular directions: central differences at +Omega and -Omega.
        eye3 = np.eye(3) * step
        pert = np.zeros((n, 2, 3, 2, 6))
        base = signs[None, :, None] * omega[:, None, :]  # (n, 2, 6)
        pert[...] = base[:, :, None, None, :]
        pert[:, :, :, 0, :3] += eye3
        pert[:, :, :, 1, :3] -= eye3
        Dp = dexp_inv(pert)  # (n, 2, 3, 2, 6, 6)
        vals = np.einsum("nsipjk,nj->nsipk", Dp, lam)
        ang = (vals[:, :, :, 0] - vals[:, :, :, 1]) / (2.0 * step)  # (n, 2, 3[dir], 6)

        # Linear directions: dexp_inv is affine in the linear part.
        lin_pts = np.zeros((n, 2, 4, 6))
        lin_pts[:, :, :, :3] = base[:, :, None, :3]
        lin_pts[:, :, 1, 3] = 1.0
        lin_pts[:, :, 2, 4] = 1.0
        lin_pts[:, :, 3, 5] = 1.0
        Dl = dexp_inv(lin_pts)
        lv = np.einsum("nsqjk,nj->nsqk", Dl, lam)
        lin = lv[:, :, 1:] - lv[:, :, :1]  # (n, 2, 3[dir], 6)

        # deriv[n, s] has columns d/dx_i of dexp_inv(x)^T lam at x = s Omega.
        deriv = np.swapaxes(np.concatenate([ang, lin], axis=2), -1, -2)  # (n, 2, 6, 6)

        D_pos = self.D
        D_neg = dexp_inv(-omega)
        db_domega = np.empty((n, 18, 6))
        db_domega[:, :6] = -deriv[:, 0]
        db_domega[:, 6:12] = -deriv[:, 1]
        db_domega[:, 12:] = -c * C @ self.A_inv

        dlam = c * np.swapaxes(self.A_inv, -1, -2) @ C
        ad_mean_t = np.swapaxes(adjoint_algebra(self.mean), -1, -2)
        db_dbeta = np.empty((n, 18, 6))
        db_dbeta[:, :6] = -np.swapaxes(D_pos, -1, -2) @ dlam
        db_dbeta[:, 6:12] = np.swapaxes(D_neg, -1, -2) @ dlam
        db_dbeta[:, 12:] = -c * (ad_mean_t @ dlam + C @ self.J3)

        dOmega = np.concatenate([-D_pos, D_neg], axis=-1)  # (n, 6, 12)
        G = np.empty((n, 18, 18))
        G[:, :, :12] = db_domega @ dOmega
        G[:, :, 12:] = db_dbeta
        return self.length[:, None, None] * G

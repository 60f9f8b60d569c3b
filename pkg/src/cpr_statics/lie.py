"""SE(3) kernel: hat/vee, exp/log, adjoints and the tangent map of exp.

Twists are 6-vectors ordered ``[angular; linear]``.  Poses are 4x4
homogeneous matrices.  Wrenches use the matching ``[moment; force]`` order.

``dexp`` follows the series convention ``dexp_x = sum_j ad_x^j / (j+1)!`` so
that ``d/dt exp(x(t)) = hat(dexp_x x') exp(x)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import bernoulli, factorial

from .errors import RotationNearPi

# Below this rotation angle the trigonometric coefficients switch to their
# Taylor expansions (truncation error ~angle^8).
SMALL_ANGLE = 5.0e-2
# Minimum distance of the rotation angle from pi for the principal logarithm.
PI_MARGIN = 1.0e-6

_I3 = np.eye(3)
_I6 = np.eye(6)


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix of ``v``."""
    return np.array(
        [[0.0, -v[2], v[1]],
         [v[2], 0.0, -v[0]],
         [-v[1], v[0], 0.0]]
    )


def unskew(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def hat(v: np.ndarray) -> np.ndarray:
    """4x4 se(3) matrix of a twist."""
    M = np.zeros((4, 4))
    M[:3, :3] = skew(v[:3])
    M[:3, 3] = v[3:]
    return M


def vee(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {M.shape}")
    W = M[:3, :3]
    if np.max(np.abs(W + W.T)) > tol or np.max(np.abs(np.diag(W))) > tol or np.max(np.abs(M[3])) > tol:
        raise ValueError("matrix is not in se(3): rotation block not skew or last row non-zero")
    return np.concatenate([unskew(W), M[:3, 3]])


def make_pose(rotation=None, position=None) -> np.ndarray:
    g = np.eye(4)
    if rotation is not None:
        g[:3, :3] = rotation
    if position is not None:
        g[:3, 3] = position
    return g


def inv_pose(g: np.ndarray) -> np.ndarray:
    R = g[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ g[:3, 3]
    return out


def _coefficients(theta: float):
    """Return ``sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3``."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        sinc = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0))
        a1 = 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0))
        a2 = 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0))
        return sinc, a1, a2
    s, c = math.sin(theta), math.cos(theta)
    t2 = theta * theta
    return s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta)


def _inv_coefficient(theta: float) -> float:
    """``1/t^2 - (1 + cos t) / (2 t sin t)``, the kappa^2 weight of the inverse SO(3) Jacobian."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    return 1.0 / theta**2 - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))


def exp_so3(kappa: np.ndarray) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    theta = math.sqrt(kappa @ kappa)
    sinc, a1, _ = _coefficients(theta)
    K = skew(kappa)
    return _I3 + sinc * K + a1 * (K @ K)


def so3_jacobian(kappa: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3), ``sum_j skew(kappa)^j / (j+1)!``."""
    theta = math.sqrt(kappa @ kappa)
    _, a1, a2 = _coefficients(theta)
    K = skew(kappa)
    return _I3 + a1 * K + a2 * (K @ K)


def so3_jacobian_inv(kappa: np.ndarray) -> np.ndarray:
    theta = math.sqrt(kappa @ kappa)
    K = skew(kappa)
    return _I3 - 0.5 * K + _inv_coefficient(theta) * (K @ K)


def exp_se3(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    kappa, eps = v[:3], v[3:]
    theta = math.sqrt(kappa @ kappa)
    sinc, a1, a2 = _coefficients(theta)
    K = skew(kappa)
    K2 = K @ K
    g = np.eye(4)
    g[:3, :3] = _I3 + sinc * K + a1 * K2
    g[:3, 3] = (_I3 + a1 * K + a2 * K2) @ eps
    return g


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle in ``[0, pi]`` via atan2 (stable near zero)."""
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    return math.atan2(math.sqrt(w @ w), c)


def log_so3(R: np.ndarray) -> np.ndarray:
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = math.sqrt(w @ w)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = math.atan2(s, c)
    if theta > math.pi - PI_MARGIN:
        raise RotationNearPi(f"rotation angle {theta:.12g} is within {PI_MARGIN:g} of pi")
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        factor = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    else:
        factor = theta / s
    return factor * w


def log_se3(g: np.ndarray) -> np.ndarray:
    kappa = log_so3(g[:3, :3])
    eps = so3_jacobian_inv(kappa) @ g[:3, 3]
    return np.concatenate([kappa, eps])


def adjoint_group(g: np.ndarray) -> np.ndarray:
    """``Ad_g = [[R, 0], [skew(p) R, R]]``, mapping body twists to spatial twists."""
    R = g[:3, :3]
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[3:, 3:] = R
    Ad[3:, :3] = skew(g[:3, 3]) @ R
    return Ad


def adjoint_algebra(v: np.ndarray) -> np.ndarray:
    """``ad_v = [[skew(k), 0], [skew(e), skew(k)]]``; ``ad_v w`` is the Lie bracket ``[v, w]``."""
    K = skew(v[:3])
    ad = np.zeros((6, 6))
    ad[:3, :3] = K
    ad[3:, 3:] = K
    ad[3:, :3] = skew(v[3:])
    return ad


def _q_block(kappa: np.ndarray, eps: np.ndarray) -> np.ndarray:
    # Coupling block of the SE(3) left Jacobian (Barfoot's Q, reordered
    # for angular-first twists).
    theta = math.sqrt(kappa @ kappa)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c2 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c3 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c4 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        t2 = theta * theta
        c2 = (theta - s) / (t2 * theta)
        c3 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2)
        c4 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta)
    P = skew(kappa)
    E = skew(eps)
    PE = P @ E
    EP = E @ P
    PEP = PE @ P
    P2 = P @ P
    return (
        0.5 * E
        + c2 * (PE + EP + PEP)
        + c3 * (P2 @ E + EP @ P - 3.0 * PEP)
        + c4 * (PEP @ P + P @ PEP)
    )


def dexp(omega: np.ndarray) -> np.ndarray:
    """Tangent operator of exp, ``sum_j ad^j / (j+1)!``, in closed form."""
    kappa, eps = omega[:3], omega[3:]
    T = so3_jacobian(kappa)
    out = np.zeros((6, 6))
    out[:3, :3] = T
    out[3:, 3:] = T
    out[3:, :3] = _q_block(kappa, eps)
    return out


def dexp_inv(omega: np.ndarray) -> np.ndarray:
    """Inverse tangent operator of exp, ``sum_j B_j ad^j / j!``, in closed form."""
    kappa, eps = omega[:3], omega[3:]
    if math.sqrt(kappa @ kappa) > math.pi - PI_MARGIN:
        raise RotationNearPi("dexp_inv is only defined for rotation angles below pi")
    Ti = so3_jacobian_inv(kappa)
    out = np.zeros((6, 6))
    out[:3, :3] = Ti
    out[3:, 3:] = Ti
    out[3:, :3] = -Ti @ _q_block(kappa, eps) @ Ti
    return out


def dexp_series(omega: np.ndarray, terms: int = 9) -> np.ndarray:
    """Truncated power series of ``dexp``; reference implementation for testing."""
    ad = adjoint_algebra(omega)
    out = np.zeros((6, 6))
    power = np.eye(6)
    for j in range(terms):
        out += power / factorial(j + 1, exact=True)
        power = power @ ad
    return out


def dexp_inv_series(omega: np.ndarray, terms: int = 9) -> np.ndarray:
    """Truncated Bernoulli series of ``dexp_inv`` (``B_1 = -1/2``)."""
    B = bernoulli(terms)
    ad = adjoint_algebra(omega)
    out = np.zeros((6, 6))
    power = np.eye(6)
    for j in range(terms):
        out += B[j] / factorial(j, exact=True) * power
        power = power @ ad
    return out


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar projection)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, -1] *= -1.0
        Q = U @ Vt
    return Q


def is_pose(g: np.ndarray, tol: float = 1e-10) -> bool:
    g = np.asarray(g)
    if g.shape != (4, 4) or not np.all(np.isfinite(g)):
        return False
    R = g[:3, :3]
    return (
        np.max(np.abs(R.T @ R - _I3)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
        and np.max(np.abs(g[3] - [0.0, 0.0, 0.0, 1.0])) == 0.0
    )

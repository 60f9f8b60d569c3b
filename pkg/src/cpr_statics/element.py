"""Linear strain element (LSE).

The strain inside an element of length ``h`` is affine in arc length,
``xi(s) = mean + (s - h/2) * slope``.  Its fourth-order Magnus integral is
``Omega = (h I - h^3/12 ad(slope)) mean``, which is inverted exactly to get
the mean strain from the two end poses.  Strains are body (left-trivialized)
twists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errors import ElementRotationTooLarge, OutOfElement, SingularAMatrix

DEFAULT_NATURAL_STRAIN = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
MAX_ELEMENT_ROTATION = 0.5 * math.pi
MAX_A_CONDITION = 1.0e8


@dataclass(frozen=True)
class ElementMaterial:
    """Sectional stiffness ``K`` (6x6, SPD) and natural strain ``xi0``."""

    stiffness: np.ndarray
    natural_strain: np.ndarray = field(default_factory=lambda: DEFAULT_NATURAL_STRAIN.copy())

    def __post_init__(self):
        K = np.asarray(self.stiffness, dtype=float)
        xi0 = np.asarray(self.natural_strain, dtype=float)
        if K.shape != (6, 6):
            raise ValueError(f"stiffness must be 6x6, got {K.shape}")
        if xi0.shape != (6,):
            raise ValueError(f"natural strain must be a 6-vector, got {xi0.shape}")
        if np.max(np.abs(K - K.T)) > 1e-12 * max(1.0, np.max(np.abs(K))):
            raise ValueError("stiffness matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(K)) <= 0.0:
            raise ValueError("stiffness matrix is not positive definite")
        object.__setattr__(self, "stiffness", K)
        object.__setattr__(self, "natural_strain", xi0)


@dataclass
class ElementState:
    pose_a: np.ndarray
    pose_b: np.ndarray
    slope: np.ndarray
    length: float

    def __post_init__(self):
        if not self.length > 0.0:
            raise ValueError(f"element length must be positive, got {self.length}")


@dataclass
class ElementKinematics:
    mean_strain: np.ndarray
    integrated_twist: np.ndarray
    A_matrix: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    A_inv: np.ndarray | None = None

    @property
    def B(self) -> np.ndarray:
        """``[J1 J2 J3]``, mapping ``[dzeta_a; dzeta_b; dbeta]`` to ``d mean_strain``."""
        return np.hstack([self.J1, self.J2, self.J3])


def magnus_matrix(slope: np.ndarray, h: float) -> np.ndarray:
    return h * np.eye(6) - (h**3 / 12.0) * lie.adjoint_algebra(slope)


def magnus_forward(mean_strain: np.ndarray, slope: np.ndarray, h: float) -> np.ndarray:
    """Integrated twist of the linear strain field over one element."""
    if not h > 0.0:
        raise ValueError(f"element length must be positive, got {h}")
    return magnus_matrix(slope, h) @ mean_strain


def strain_at(e: ElementState, kin: ElementKinematics, s: float) -> np.ndarray:
    _check_station(s, e.length)
    return kin.mean_strain + (s - 0.5 * e.length) * e.slope


def _check_station(s: float, h: float) -> None:
    if s < -1e-12 or s > h + 1e-12:
        raise OutOfElement(f"arc length {s} outside [0, {h}]")


def magnus_matrix_inv(slope: np.ndarray, h: float) -> np.ndarray:
    """Closed-form inverse of :func:`magnus_matrix`.

    ``A = [[X, 0], [Y, X]]`` with ``X = h (I - a skew(b))``, ``a = h^2/12``;
    ``(I - a B)^-1 = I + (a B + a^2 B^2) / (1 + a^2 |b|^2)`` for skew ``B``.
    """
    a = h * h / 12.0
    B = lie.skew(slope[:3])
    Xi = (np.eye(3) + (a * B + a * a * (B @ B)) / (1.0 + a * a * (slope[:3] @ slope[:3]))) / h
    Y = -(h**3 / 12.0) * lie.skew(slope[3:])
    out = np.zeros((6, 6))
    out[:3, :3] = Xi
    out[3:, 3:] = Xi
    out[3:, :3] = -Xi @ Y @ Xi
    return out


def recover_kinematics(e: ElementState) -> ElementKinematics:
    """Mean strain and kinematic Jacobians from the end poses and slope.

    The Jacobians are taken with respect to right perturbations
    ``g -> g exp(dzeta)`` of both end poses:
    ``d mean = J1 dzeta_a + J2 dzeta_b + J3 dslope``.
    """
    h = e.length
    rel = lie.inv_pose(e.pose_a) @ e.pose_b
    omega = lie.log_se3(rel)
    angle = math.sqrt(omega[:3] @ omega[:3])
    if angle >= MAX_ELEMENT_ROTATION:
        raise ElementRotationTooLarge(
            f"relative rotation {angle:.4f} rad across the element is not below pi/2"
        )
    A = magnus_matrix(e.slope, h)
    A_inv = magnus_matrix_inv(e.slope, h)
    cond = np.abs(A).sum(axis=0).max() * np.abs(A_inv).sum(axis=0).max()
    if not cond < MAX_A_CONDITION:
        raise SingularAMatrix(f"A = h I - h^3/12 ad(slope) has condition {cond:.3g}; slope is implausibly large")
    mean = A_inv @ omega
    # dOmega = dexp_inv(-Omega) dzeta_b - dexp_inv(Omega) dzeta_a, and
    # dexp_inv(-Omega) = dexp_inv(Omega) Ad(exp(Omega)).
    D = lie.dexp_inv(omega)
    J1 = -A_inv @ D
    J2 = A_inv @ D @ lie.adjoint_group(rel)
    J3 = -(h**3 / 12.0) * A_inv @ lie.adjoint_algebra(mean)
    return ElementKinematics(mean, omega, A, J1, J2, J3, A_inv)


def element_energy(e: ElementState, m: ElementMaterial, kin: ElementKinematics) -> float:
    h = e.length
    d = kin.mean_strain - m.natural_strain
    K = m.stiffness
    return 0.5 * h * d @ K @ d + h**3 / 24.0 * e.slope @ K @ e.slope


def element_residual(e: ElementState, m: ElementMaterial, kin: ElementKinematics) -> np.ndarray:
    """Gradient of the element energy w.r.t. ``[dzeta_a; dzeta_b; dslope]``."""
    h = e.length
    K = m.stiffness
    stress = h * (K @ (kin.mean_strain - m.natural_strain))
    gamma = np.empty(18)
    gamma[:6] = kin.J1.T @ stress
    gamma[6:12] = kin.J2.T @ stress
    gamma[12:] = kin.J3.T @ stress + (h**3 / 12.0) * (K @ e.slope)
    return gamma


def element_tangent(e: ElementState, m: ElementMaterial, kin: ElementKinematics) -> np.ndarray:
    """18x18 frozen-Jacobian tangent ``h B^T K B + diag(0, 0, h^3/12 K)``."""
    h = e.length
    K = m.stiffness
    B = kin.B
    H = h * (B.T @ K @ B)
    H[12:, 12:] += (h**3 / 12.0) * K
    return 0.5 * (H + H.T)


def coadjoint_matrix(lam: np.ndarray) -> np.ndarray:
    """Matrix ``C`` with ``C v = ad(v)^T lam`` for every twist ``v``."""
    m, f = lie.skew(lam[:3]), lie.skew(lam[3:])
    C = np.zeros((6, 6))
    C[:3, :3] = m
    C[:3, 3:] = f
    C[3:, :3] = f
    return C


def _dexp_inv_transpose_derivative(omega: np.ndarray, lam: np.ndarray, step: float) -> np.ndarray:
    """Columns ``d/dOmega_i [dexp_inv(Omega)^T lam]`` (6x6).

    Angular directions by central differences; dexp_inv is affine in the
    linear part of Omega, so those directions are exact differences.
    """
    out = np.empty((6, 6))
    for i in range(3):
        d = np.zeros(6)
        d[i] = step
        out[:, i] = (lie.dexp_inv(omega + d).T @ lam - lie.dexp_inv(omega - d).T @ lam) / (2.0 * step)
    base = omega.copy()
    base[3:] = 0.0
    f0 = lie.dexp_inv(base).T @ lam
    for i in range(3, 6):
        d = base.copy()
        d[i] = 1.0
        out[:, i] = lie.dexp_inv(d).T @ lam - f0
    return out


def element_geometric_tangent(e: ElementState, m: ElementMaterial, kin: ElementKinematics, step: float = 1e-6) -> np.ndarray:
    """Second-order part of the exact element tangent dropped by freezing ``J1..J3``.

    Derivative of ``h B^T s`` w.r.t. ``[dzeta_a; dzeta_b; dbeta]`` with the
    sectional force ``s = K (mean - xi0)`` held fixed.  Not symmetric away
    from equilibrium.
    """
    h = e.length
    c = h**3 / 12.0
    A_inv = kin.A_inv if kin.A_inv is not None else np.linalg.inv(kin.A_matrix)
    omega = kin.integrated_twist
    lam = A_inv.T @ (m.stiffness @ (kin.mean_strain - m.natural_strain))
    C = coadjoint_matrix(lam)
    D_pos = lie.dexp_inv(omega)
    D_neg = lie.dexp_inv(-omega)
    ad_mean = lie.adjoint_algebra(kin.mean_strain)

    # b(Omega, beta) = [-D(Omega)^T lam; D(-Omega)^T lam; -c ad(mean)^T lam]
    db_domega = np.empty((18, 6))
    db_domega[:6] = -_dexp_inv_transpose_derivative(omega, lam, step)
    db_domega[6:12] = -_dexp_inv_transpose_derivative(-omega, lam, step)
    db_domega[12:] = -c * C @ A_inv

    dlam = c * A_inv.T @ C
    db_dbeta = np.empty((18, 6))
    db_dbeta[:6] = -D_pos.T @ dlam
    db_dbeta[6:12] = D_neg.T @ dlam
    db_dbeta[12:] = -c * (ad_mean.T @ dlam + C @ kin.J3)

    dOmega = np.hstack([-D_pos, D_neg])
    G = np.empty((18, 18))
    G[:, :12] = db_domega @ dOmega
    G[:, 12:] = db_dbeta
    return h * G


def element_consistent_tangent(e: ElementState, m: ElementMaterial, kin: ElementKinematics) -> np.ndarray:
    """Frozen tangent plus the geometric part: the chart Jacobian of the element residual."""
    return element_tangent(e, m, kin) + element_geometric_tangent(e, m, kin)


def interpolate_pose(e: ElementState, kin: ElementKinematics, s: float) -> np.ndarray:
    """Pose at arc length ``s`` from the Magnus twist of the strain over ``[0, s]``."""
    _check_station(s, e.length)
    s = min(max(s, 0.0), e.length)
    if s == 0.0:
        return e.pose_a.copy()
    # Over [0, s] the field is affine with the same slope and mean at s/2.
    sub_mean = kin.mean_strain + 0.5 * (s - e.length) * e.slope
    return e.pose_a @ lie.exp_se3(magnus_forward(sub_mean, e.slope, s))

"""Riemannian Newton solver for the robot equilibrium.

Poses are updated by ``g <- g exp(dzeta)``, slopes and motor angles
additively.  Newton steps use the exact chart Jacobian of the residual
(quadratic convergence near a solution).  When that step cannot be
globalized, the symmetric frozen-Jacobian tangent supplies a fallback
step that descends the total potential.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import lie
from .assembly import GeneralizedState, LoadSet, Robot, assemble, base_embedding
from .element import DEFAULT_NATURAL_STRAIN
from .errors import CPRError, NoConvergence, SingularTangent

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    residual_tolerance: float = 1e-9
    max_iterations: int = 50
    backtrack_factor: float = 0.5
    max_halvings: int = 20
    initial_shift: float = 1e-8
    shift_growth: float = 10.0
    max_shift: float = 1e4
    armijo: float = 1e-4
    prescribed_theta: bool = True
    tangent: str = "consistent"
    consistent_halvings: int = 0

    def __post_init__(self):
        if not self.residual_tolerance > 0.0:
            raise ValueError("residual_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tangent not in ("consistent", "frozen"):
            raise ValueError(f"tangent must be 'consistent' or 'frozen', got {self.tangent!r}")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list
    final_state: GeneralizedState
    diagnostics: list = field(default_factory=list)
    min_tangent_eigenvalue: float | None = None

    @property
    def residual(self) -> float:
        return self.residual_history[-1]


def newton_step(K: np.ndarray, r: np.ndarray, config: SolverConfig | None = None, symmetric: bool = True):
    """Solve ``K dq = -r``; returns ``(dq, shift)``.

    Uses a symmetric indefinite (Bunch-Kaufman) factorization, or LU when
    ``symmetric`` is false.  If it fails, ``K + mu I`` is tried with ``mu``
    growing geometrically from ``initial_shift``.
    """
    config = config or SolverConfig()
    if not np.any(r):
        return np.zeros_like(r), 0.0
    shift = 0.0
    eye = np.eye(K.shape[0])
    while True:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                dq = scipy.linalg.solve(K + shift * eye, -r, assume_a="sym" if symmetric else "gen")
            if np.all(np.isfinite(dq)):
                return dq, shift
        except (np.linalg.LinAlgError, ValueError):
            pass
        shift = config.initial_shift if shift == 0.0 else shift * config.shift_growth
        if shift > config.max_shift:
            raise SingularTangent(f"tangent stiffness not factorizable with shifts up to {config.max_shift:g}")
        log.debug("factorization failed, retrying with shift %g", shift)


def retract(robot: Robot, q: GeneralizedState, dq: np.ndarray, prescribed_theta: bool = False) -> GeneralizedState:
    """Move ``q`` along the tangent vector ``dq``.

    ``dq`` is either the full tangent vector or the reduced one without the
    motor-angle block.  Motor angles are left alone when prescribed.
    """
    idx = robot.index
    M = len(robot.motors)
    if dq.shape == (idx.size - M,):
        dq = np.concatenate([np.zeros(M), dq])
        prescribed_theta = True
    if dq.shape != (idx.size,):
        raise ValueError(f"increment has shape {dq.shape}, expected ({idx.size},)")
    out = q.copy()
    if not prescribed_theta:
        out.motor_angles = q.motor_angles + dq[idx.theta]
    out.ee_pose = _update_pose(q.ee_pose, dq[idx.ee])
    for k, rod in enumerate(robot.rods):
        for j in range(1, rod.element_count):
            out.interior_poses[k][j - 1] = _update_pose(q.interior_poses[k][j - 1], dq[idx.node(k, j)])
        for e in range(rod.element_count):
            out.slopes[k][e] = q.slopes[k][e] + dq[idx.slope(k, e)]
    return out


def _update_pose(g: np.ndarray, dzeta: np.ndarray) -> np.ndarray:
    if not np.any(dzeta):
        return g.copy()
    g = g @ lie.exp_se3(dzeta)
    R = g[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-12:
        g[:3, :3] = lie.orthonormalize(R)
    return g


def nominal_ee_pose(robot: Robot, theta: np.ndarray) -> np.ndarray:
    """End-effector pose implied by straight rods hanging off the base.

    Each rod is extended straight along its natural strain and mapped back
    through its platform attachment; positions are averaged and rotations
    projected to their chordal mean.
    """
    positions, rotations = [], []
    for rod in robot.rods:
        g0, _ = base_embedding(rod, robot.motors[rod.motor], theta[rod.motor])
        xi0 = rod.material.natural_strain if rod.material is not None else DEFAULT_NATURAL_STRAIN
        tip = g0 @ lie.exp_se3(rod.length * xi0)
        g = tip @ lie.inv_pose(rod.platform_attachment)
        positions.append(g[:3, 3])
        rotations.append(g[:3, :3])
    return lie.make_pose(lie.orthonormalize(np.sum(rotations, axis=0)), np.mean(positions, axis=0))


def initial_guess(robot: Robot, theta, ee_pose: np.ndarray | None = None) -> GeneralizedState:
    """Boundary nodes from the embeddings, interior nodes on the SE(3) geodesic, zero slopes."""
    theta = np.asarray(theta, dtype=float).reshape(len(robot.motors))
    if ee_pose is None:
        ee_pose = nominal_ee_pose(robot, theta)
    interior, slopes = [], []
    for rod in robot.rods:
        n = rod.element_count
        g0, _ = base_embedding(rod, robot.motors[rod.motor], theta[rod.motor])
        gn = ee_pose @ rod.platform_attachment
        span = lie.log_se3(lie.inv_pose(g0) @ gn)
        nodes = np.array([g0 @ lie.exp_se3(span * j / n) for j in range(1, n)]).reshape(n - 1, 4, 4)
        interior.append(nodes)
        slopes.append(np.zeros((n, 6)))
    return GeneralizedState(theta.copy(), ee_pose.copy(), interior, slopes)


def predict(robot: Robot, q: GeneralizedState, theta, loads: LoadSet | None = None) -> GeneralizedState:
    """First-order continuation predictor from the equilibrium ``q`` to motor angles ``theta``.

    Solves ``K_ff dq = -K_ftheta dtheta`` with the exact chart Jacobian at
    ``q`` and retracts, so the free coordinates follow the equilibrium path
    instead of only the base nodes moving.  Falls back to ``q`` with the new
    angles when the step cannot be taken.
    """
    theta = np.asarray(theta, dtype=float).reshape(len(robot.motors))
    M = len(robot.motors)
    dtheta = theta - q.motor_angles
    out = q.copy()
    out.motor_angles = theta.copy()
    if not np.any(dtheta):
        return out
    try:
        J = assemble(robot, q, loads, consistent=True).consistent_tangent
        dfree = scipy.linalg.solve(J[M:, M:], -J[M:, :M] @ dtheta)
        moved = retract(robot, q, np.concatenate([dtheta, dfree]))
    except (CPRError, np.linalg.LinAlgError, ValueError) as exc:
        log.debug("predictor rejected (%s)", exc)
        return out
    moved.motor_angles = theta.copy()
    return moved


def _reduce(robot: Robot, r: np.ndarray, K: np.ndarray | None, prescribed: bool):
    if not prescribed:
        return r, K
    M = len(robot.motors)
    return r[M:], (None if K is None else K[M:, M:])


def residual_norm(robot: Robot, q: GeneralizedState, loads: LoadSet | None = None, prescribed_theta: bool = True) -> float:
    r = assemble(robot, q, loads, tangent=False).residual
    return float(np.linalg.norm(_reduce(robot, r, None, prescribed_theta)[0]))


def _line_search(robot, q, loads, dq, current, norm, halvings_allowed, config, it):
    """Backtrack along ``dq``; returns ``(trial, assembly, rule, step, halvings)``.

    ``trial`` is None when no step length was accepted.
    """
    prescribed = config.prescribed_theta
    r = _reduce(robot, current.residual, None, prescribed)[0]
    slope = float(r @ dq)
    step = 1.0
    for halvings in range(halvings_allowed + 1):
        try:
            trial = retract(robot, q, step * dq, prescribed_theta=prescribed)
            result = assemble(robot, trial, loads, tangent=False)
        except CPRError as exc:
            log.debug("iteration %d: trial step %g rejected (%s)", it, step, exc)
        else:
            nt = float(np.linalg.norm(_reduce(robot, result.residual, None, prescribed)[0]))
            if nt < norm:
                return trial, result, "residual", step, halvings
            if (
                current.potential is not None
                and slope < 0.0
                and result.potential <= current.potential + config.armijo * step * slope
            ):
                return trial, result, "energy", step, halvings
        step *= config.backtrack_factor
    return None, None, None, step, halvings


def solve(robot: Robot, q0: GeneralizedState, loads: LoadSet | None = None, config: SolverConfig | None = None) -> SolveReport:
    """Newton iteration from ``q0`` until the (reduced) residual norm is below tolerance.

    Each iteration first tries the exact Newton step (``tangent="consistent"``)
    with a short backtracking search.  If that fails, the frozen-Jacobian
    step is tried with the full search.  A trial is accepted when it lowers
    the residual norm or, for loads with a potential, when it satisfies the
    Armijo condition on the total potential energy.  The frozen step is a
    descent direction for that potential, which carries the iteration from
    poor initial guesses.

    Raises :class:`NoConvergence` carrying the report if the iteration budget
    runs out or the line search fails.
    """
    config = config or SolverConfig()
    prescribed = config.prescribed_theta
    consistent = config.tangent == "consistent"
    q0.check(robot)
    if loads is not None:
        loads.check(robot)
    q = q0.copy()
    current = assemble(robot, q, loads, consistent=consistent)
    norm = float(np.linalg.norm(_reduce(robot, current.residual, None, prescribed)[0]))
    history = [norm]
    diagnostics = []
    report = SolveReport(False, 0, history, q, diagnostics)

    for it in range(1, config.max_iterations + 1):
        if norm < config.residual_tolerance:
            break
        r, K = _reduce(robot, current.residual, current.tangent, prescribed)
        attempts = []
        if consistent:
            Kc = _reduce(robot, current.residual, current.consistent_tangent, prescribed)[1]
            attempts.append(("consistent", Kc, False, config.consistent_halvings))
        attempts.append(("frozen", K, True, config.max_halvings))
        trial = None
        for kind, matrix, symmetric, allowed in attempts:
            try:
                dq, shift = newton_step(matrix, r, config, symmetric=symmetric)
            except SingularTangent:
                if kind == "frozen":
                    raise
                continue
            trial, result, rule, step, halvings = _line_search(
                robot, q, loads, dq, current, norm, allowed, config, it
            )
            diagnostics.append(
                {"iteration": it, "direction": kind, "step_norm": float(np.linalg.norm(dq)),
                 "step_length": step, "halvings": halvings, "shift": shift, "accepted_by": rule}
            )
            if trial is not None:
                break
        report.iterations = it
        if trial is None:
            raise NoConvergence(
                f"line search failed at iteration {it} (|r| = {norm:.3e})", report=report
            )
        q = trial
        current = assemble(robot, q, loads, consistent=consistent)
        norm = float(np.linalg.norm(_reduce(robot, current.residual, None, prescribed)[0]))
        history.append(norm)
        report.final_state = q
        log.debug("iteration %d: |r| = %.3e, %s step %g (%s)", it, norm, kind, step, rule)

    if norm >= config.residual_tolerance:
        raise NoConvergence(
            f"residual {norm:.3e} above tolerance after {report.iterations} iterations", report=report
        )
    report.converged = True
    report.final_state = q
    K = _reduce(robot, current.residual, current.tangent, prescribed)[1]
    report.min_tangent_eigenvalue = float(np.linalg.eigvalsh(K)[0])
    return report

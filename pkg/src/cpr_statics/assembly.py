"""Robot topology, boundary embeddings and global residual/tangent assembly.

The generalized tangent vector is laid out as::

    [ dtheta (M) | dzeta_ee (6) | dzeta of interior nodes, rod-major | dbeta, rod-major ]

Boundary nodes never appear as unknowns: node 0 of rod ``k`` follows its
motor, node ``n_k`` is rigidly attached to the end-effector.  The projections
from generalized to element increments are kept as index lists plus two small
dense contractions (the motor twist ``S_k`` and ``Ad`` of the inverse
attachment).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Union

import numpy as np

from . import batch, lie
from .element import (
    ElementMaterial,
    ElementState,
)
from .errors import CPRError, DescriptionError, PulleyCoincident

NodeRef = Union[str, tuple]
EE = "ee"


@dataclass(frozen=True)
class MotorAxis:
    """Revolute motor about the world line through ``point`` along ``direction``."""

    direction: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.direction, dtype=float).reshape(3)
        c = np.asarray(self.point, dtype=float).reshape(3)
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise DescriptionError(f"motor direction must be a unit vector, |a| = {np.linalg.norm(a)!r}")
        object.__setattr__(self, "direction", a)
        object.__setattr__(self, "point", c)

    @property
    def spatial_twist(self) -> np.ndarray:
        a, c = self.direction, self.point
        return np.concatenate([a, -np.cross(a, c)])

    def transform(self, theta: float) -> np.ndarray:
        """World transform ``x -> c + R(theta)(x - c)``."""
        R = lie.exp_so3(theta * self.direction)
        return lie.make_pose(R, self.point - R @ self.point)


@dataclass(frozen=True)
class RodSpec:
    element_count: int
    length: float
    material: ElementMaterial
    motor: int
    install_pose: np.ndarray
    platform_attachment: np.ndarray

    def __post_init__(self):
        if int(self.element_count) < 1:
            raise DescriptionError("a rod needs at least one element")
        if not self.length > 0.0:
            raise DescriptionError("rod length must be positive")
        for name in ("install_pose", "platform_attachment"):
            g = np.asarray(getattr(self, name), dtype=float)
            if not lie.is_pose(g):
                raise DescriptionError(f"{name} is not a valid SE(3) pose")
            object.__setattr__(self, name, g)
        object.__setattr__(self, "element_count", int(self.element_count))

    @property
    def element_length(self) -> float:
        return self.length / self.element_count


@dataclass(frozen=True)
class IndexMap:
    """Offsets of every variable block in the generalized tangent vector."""

    n_motors: int
    element_counts: tuple

    @cached_property
    def ee(self) -> slice:
        return slice(self.n_motors, self.n_motors + 6)

    @cached_property
    def _interior_offsets(self) -> list:
        offsets, pos = [], self.n_motors + 6
        for n in self.element_counts:
            offsets.append(pos)
            pos += 6 * (n - 1)
        return offsets

    @cached_property
    def _slope_offsets(self) -> list:
        pos = self.n_motors + 6 * self.n_poses
        offsets = []
        for n in self.element_counts:
            offsets.append(pos)
            pos += 6 * n
        return offsets

    @property
    def theta(self) -> slice:
        return slice(0, self.n_motors)

    @property
    def n_poses(self) -> int:
        """Independent poses: end-effector plus all interior nodes."""
        return 1 + sum(n - 1 for n in self.element_counts)

    @property
    def n_slopes(self) -> int:
        return sum(self.element_counts)

    @property
    def size(self) -> int:
        return self.n_motors + 6 * self.n_poses + 6 * self.n_slopes

    def node(self, k: int, j: int) -> slice:
        n = self.element_counts[k]
        assert 1 <= j <= n - 1, f"node {j} of rod {k} is not an interior node"
        start = self._interior_offsets[k] + 6 * (j - 1)
        return slice(start, start + 6)

    def slope(self, k: int, e: int) -> slice:
        assert 0 <= e < self.element_counts[k], f"element {e} out of range for rod {k}"
        start = self._slope_offsets[k] + 6 * e
        return slice(start, start + 6)

    def blocks(self) -> list:
        """All ``(label, slice)`` pairs in order; used to check the layout."""
        out = [("theta", self.theta), ("ee", self.ee)]
        for k, n in enumerate(self.element_counts):
            out += [(f"rod{k}:node{j}", self.node(k, j)) for j in range(1, n)]
        for k, n in enumerate(self.element_counts):
            out += [(f"rod{k}:slope{e}", self.slope(k, e)) for e in range(n)]
        return out


@dataclass(frozen=True)
class Robot:
    motors: tuple
    rods: tuple

    def __post_init__(self):
        object.__setattr__(self, "motors", tuple(self.motors))
        object.__setattr__(self, "rods", tuple(self.rods))
        if not self.rods:
            raise DescriptionError("robot has no rods")
        for k, rod in enumerate(self.rods):
            if not 0 <= rod.motor < len(self.motors):
                raise DescriptionError(f"rods[{k}] references missing motor {rod.motor}")

    @cached_property
    def index(self) -> IndexMap:
        return IndexMap(len(self.motors), tuple(r.element_count for r in self.rods))

    @cached_property
    def layout(self) -> "ElementLayout":
        return ElementLayout(self)


@dataclass
class GeneralizedState:
    """Point on R^M x SE(3)^N_g x R^(6 N_beta)."""

    motor_angles: np.ndarray
    ee_pose: np.ndarray
    interior_poses: list
    slopes: list

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(
            self.motor_angles.copy(),
            self.ee_pose.copy(),
            [g.copy() for g in self.interior_poses],
            [b.copy() for b in self.slopes],
        )

    def check(self, robot: Robot) -> None:
        if self.motor_angles.shape != (len(robot.motors),):
            raise ValueError("motor angle count does not match the robot")
        for k, rod in enumerate(robot.rods):
            if self.interior_poses[k].shape != (rod.element_count - 1, 4, 4):
                raise ValueError(f"rod {k}: expected {rod.element_count - 1} interior poses")
            if self.slopes[k].shape != (rod.element_count, 6):
                raise ValueError(f"rod {k}: expected {rod.element_count} slopes")
        poses = [self.ee_pose, *[g for rod in self.interior_poses for g in rod]]
        if not all(lie.is_pose(g) for g in poses):
            raise ValueError("state contains an invalid pose")


@dataclass
class NodalWrench:
    node: NodeRef
    wrench: np.ndarray  # [moment; force], body frame


@dataclass
class PulleyLoad:
    """Force of fixed magnitude pulling the node toward a world anchor."""

    node: NodeRef
    anchor: np.ndarray
    magnitude: float


@dataclass
class LoadSet:
    wrenches: list = field(default_factory=list)
    pulleys: list = field(default_factory=list)

    def check(self, robot: Robot) -> None:
        for item in [*self.wrenches, *self.pulleys]:
            _check_node(robot, item.node)


def _check_node(robot: Robot, node: NodeRef) -> None:
    if node == EE:
        return
    try:
        k, j = node
    except (TypeError, ValueError):
        raise DescriptionError(f"bad node reference {node!r}; use 'ee' or (rod, index)") from None
    if not 0 <= k < len(robot.rods) or not 1 <= j <= robot.rods[k].element_count - 1:
        raise DescriptionError(f"node {node!r} is not an interior node or the end-effector")


def base_embedding(rod: RodSpec, axis: MotorAxis, theta: float):
    """Pose of node 0 and its right-trivialized derivative w.r.t. the motor angle."""
    g = axis.transform(theta) @ rod.install_pose
    S = lie.adjoint_group(lie.inv_pose(g)) @ axis.spatial_twist
    return g, S


def platform_embedding(rod: RodSpec, ee_pose: np.ndarray):
    g = ee_pose @ rod.platform_attachment
    return g, lie.adjoint_group(lie.inv_pose(rod.platform_attachment))


def rod_node_poses(robot: Robot, q: GeneralizedState, k: int) -> list:
    rod = robot.rods[k]
    g0, _ = base_embedding(rod, robot.motors[rod.motor], q.motor_angles[rod.motor])
    gn, _ = platform_embedding(rod, q.ee_pose)
    return [g0, *q.interior_poses[k], gn]


def node_pose(robot: Robot, q: GeneralizedState, node: NodeRef) -> np.ndarray:
    if node == EE:
        return q.ee_pose
    k, j = node
    return q.interior_poses[k][j - 1]


@dataclass
class ElementProjection:
    """Sparse projection of one element: three ``(global slice, T)`` blocks.

    Block ``i`` of the local increment equals ``T_i @ dq[slice_i]``.
    """

    blocks: list

    def scatter_vector(self, local: np.ndarray, out: np.ndarray) -> None:
        for i, (idx, T) in enumerate(self.blocks):
            part = local[6 * i:6 * i + 6]
            out[idx] += part if T is None else T.T @ part

    def scatter_matrix(self, local: np.ndarray, out: np.ndarray) -> None:
        for i, (idx_i, Ti) in enumerate(self.blocks):
            for j, (idx_j, Tj) in enumerate(self.blocks):
                block = local[6 * i:6 * i + 6, 6 * j:6 * j + 6]
                if Ti is not None:
                    block = Ti.T @ block
                if Tj is not None:
                    block = block @ Tj
                out[idx_i, idx_j] += block


def element_projection(robot: Robot, k: int, e: int, base_twist: np.ndarray, ee_map: np.ndarray) -> ElementProjection:
    """Projection for element ``e`` (0-based) of rod ``k``.

    ``base_twist`` is ``S_k`` at the current motor angle and ``ee_map`` is
    ``Ad`` of the inverse platform attachment.  ``T = None`` means identity.
    """
    idx = robot.index
    rod = robot.rods[k]
    blocks = []
    for j in (e, e + 1):
        if j == 0:
            blocks.append((slice(rod.motor, rod.motor + 1), base_twist.reshape(6, 1)))
        elif j == rod.element_count:
            blocks.append((idx.ee, ee_map))
        else:
            blocks.append((idx.node(k, j), None))
    blocks.append((idx.slope(k, e), None))
    return ElementProjection(blocks)


def project_element(proj: ElementProjection, local: np.ndarray, out: np.ndarray) -> None:
    """Add ``P^T local`` (vector) or ``P^T local P`` (matrix) into ``out``."""
    if local.ndim == 1:
        proj.scatter_vector(local, out)
    else:
        proj.scatter_matrix(local, out)


def iter_elements(robot: Robot, q: GeneralizedState) -> Iterator:
    """Yield ``(k, e, ElementState, ElementProjection)`` rod-major, element-ascending."""
    for k, rod in enumerate(robot.rods):
        g0, S = base_embedding(rod, robot.motors[rod.motor], q.motor_angles[rod.motor])
        gn, Ad = platform_embedding(rod, q.ee_pose)
        nodes = [g0, *q.interior_poses[k], gn]
        h = rod.element_length
        for e in range(rod.element_count):
            state = ElementState(nodes[e], nodes[e + 1], q.slopes[k][e], h)
            yield k, e, state, element_projection(robot, k, e, S, Ad)


def _label(exc: CPRError, k: int, e: int) -> CPRError:
    exc.rod, exc.element = k, e
    return exc


class ElementLayout:
    """Static per-element data for batched assembly, rod-major.

    ``columns[e]`` lists the 18 global indices that element ``e`` touches;
    a base-node block uses only its first slot (the motor angle) and pads the
    other five with the dummy index ``size``.  The matching ``18 x 18``
    contraction ``T`` is the identity except for the base block (``S_k`` in
    column 0) and the platform block (``Ad`` of the inverse attachment).
    """

    def __init__(self, robot: Robot):
        idx = robot.index
        size = idx.size
        self.size = size
        labels, lengths, stiffness, natural, columns = [], [], [], [], []
        self.base_rows, self.platform_rows = [], []
        for k, rod in enumerate(robot.rods):
            n = rod.element_count
            for e in range(n):
                cols = []
                for j in (e, e + 1):
                    if j == 0:
                        cols += [rod.motor] + [size] * 5
                        self.base_rows.append(len(labels))
                    elif j == n:
                        cols += list(range(idx.ee.start, idx.ee.stop))
                        self.platform_rows.append(len(labels))
                    else:
                        sl = idx.node(k, j)
                        cols += list(range(sl.start, sl.stop))
                sl = idx.slope(k, e)
                cols += list(range(sl.start, sl.stop))
                labels.append((k, e))
                lengths.append(rod.element_length)
                stiffness.append(rod.material.stiffness)
                natural.append(rod.material.natural_strain)
                columns.append(cols)
        self.labels = labels
        self.length = np.array(lengths)
        self.stiffness = np.array(stiffness)
        self.natural_strain = np.array(natural)
        self.columns = np.array(columns, dtype=np.intp)
        flat = self.columns[:, :, None] * (size + 1) + self.columns[:, None, :]
        self.matrix_index = flat.reshape(-1)
        self.vector_index = self.columns.reshape(-1)
        # base blocks come first in the element (block a), platform blocks second
        self.base_rods = [labels[i][0] for i in self.base_rows]
        self.platform_rods = [labels[i][0] for i in self.platform_rows]
        self.platform_maps = np.array(
            [lie.adjoint_group(lie.inv_pose(robot.rods[k].platform_attachment)) for k in self.platform_rods]
        ).reshape(-1, 6, 6)

    def contractions(self, base_twists: np.ndarray) -> np.ndarray:
        """``(N, 18, 18)`` block-diagonal maps from element columns to local increments."""
        T = np.broadcast_to(np.eye(18), (len(self.labels), 18, 18)).copy()
        b = self.base_rows
        T[b, :6, :6] = 0.0
        T[b, :6, 0] = base_twists
        T[self.platform_rows, 6:12, 6:12] = self.platform_maps
        return T

    def scatter_vector(self, local: np.ndarray) -> np.ndarray:
        out = np.bincount(self.vector_index, weights=local.reshape(-1), minlength=self.size + 1)
        return out[: self.size]

    def scatter_matrix(self, local: np.ndarray) -> np.ndarray:
        n = self.size + 1
        out = np.bincount(self.matrix_index, weights=local.reshape(-1), minlength=n * n)
        return out.reshape(n, n)[: self.size, : self.size]


def element_stack(robot: Robot, q: GeneralizedState):
    """Batched element kinematics for the whole robot plus the base twists ``S``.

    Element errors are re-raised with their rod/element labels.
    """
    lay = robot.layout
    pose_a, pose_b, slopes, twists = [], [], [], []
    for k, rod in enumerate(robot.rods):
        g0, S = base_embedding(rod, robot.motors[rod.motor], q.motor_angles[rod.motor])
        gn, _ = platform_embedding(rod, q.ee_pose)
        nodes = np.concatenate([g0[None], q.interior_poses[k], gn[None]])
        pose_a.append(nodes[:-1])
        pose_b.append(nodes[1:])
        slopes.append(q.slopes[k])
        twists.append(S)
    try:
        stack = batch.ElementStack(
            np.concatenate(pose_a), np.concatenate(pose_b), np.concatenate(slopes),
            lay.length, lay.stiffness, lay.natural_strain,
        )
    except batch.BatchError as exc:
        k, e = lay.labels[exc.index]
        raise _label(exc.error, k, e) from None
    base = np.array([twists[k] for k in lay.base_rods])
    return stack, base


def internal_energy(robot: Robot, q: GeneralizedState) -> float:
    stack, _ = element_stack(robot, q)
    return float(np.sum(stack.energies()))


def external_wrench(robot: Robot, loads: LoadSet | None, q: GeneralizedState) -> list:
    """Body-frame wrenches ``[(node, F)]`` at the current configuration."""
    if loads is None:
        return []
    out = [(w.node, np.asarray(w.wrench, dtype=float)) for w in loads.wrenches]
    for p in loads.pulleys:
        g = node_pose(robot, q, p.node)
        d = np.asarray(p.anchor, dtype=float) - g[:3, 3]
        dist = np.linalg.norm(d)
        if dist < 1e-9:
            raise PulleyCoincident(f"pulley anchor coincides with node {p.node!r}")
        F = np.zeros(6)
        F[3:] = g[:3, :3].T @ (p.magnitude * d / dist)
        out.append((p.node, F))
    return out


def _node_slice(robot: Robot, node: NodeRef) -> slice:
    if node == EE:
        return robot.index.ee
    k, j = node
    return robot.index.node(k, j)


def load_potential(robot: Robot, loads: LoadSet | None, q: GeneralizedState) -> float | None:
    """Potential of the pulley loads, ``sum f |p_node - anchor|``.

    Returns ``None`` when body-fixed nodal wrenches are present, since those
    are follower loads without a potential.
    """
    if loads is None:
        return 0.0
    if loads.wrenches:
        return None
    total = 0.0
    for p in loads.pulleys:
        g = node_pose(robot, q, p.node)
        total += p.magnitude * float(np.linalg.norm(np.asarray(p.anchor, dtype=float) - g[:3, 3]))
    return total


def load_stiffness(robot: Robot, loads: LoadSet | None, q: GeneralizedState, out: np.ndarray) -> None:
    """Add the derivative of ``-F`` for pulley loads into ``out``.

    Body-fixed wrenches are constant in the node chart and contribute nothing.
    """
    if loads is None:
        return
    for p in loads.pulleys:
        g = node_pose(robot, q, p.node)
        R = g[:3, :3]
        d = np.asarray(p.anchor, dtype=float) - g[:3, 3]
        dist = np.linalg.norm(d)
        u = d / dist
        sl = _node_slice(robot, p.node)
        ang = slice(sl.start, sl.start + 3)
        lin = slice(sl.start + 3, sl.stop)
        out[lin, ang] -= lie.skew(R.T @ (p.magnitude * u))
        out[lin, lin] += (p.magnitude / dist) * R.T @ (np.eye(3) - np.outer(u, u)) @ R


@dataclass
class Assembly:
    residual: np.ndarray
    tangent: np.ndarray | None  # frozen-Jacobian K_t, symmetric
    internal_energy: float
    potential: float | None  # internal + load potential, None for follower loads
    consistent_tangent: np.ndarray | None = None  # chart Jacobian of the residual


def assemble(
    robot: Robot,
    q: GeneralizedState,
    loads: LoadSet | None = None,
    tangent: bool = True,
    consistent: bool = False,
) -> Assembly:
    """Global residual, tangent(s) and energies in one element pass.

    ``tangent`` requests the frozen-Jacobian ``K_t``.  ``consistent`` also
    builds the exact chart Jacobian (``K_t`` plus the geometric element terms
    and the pulley load stiffness), which the solver uses for Newton steps.
    """
    tangent = tangent or consistent
    lay = robot.layout
    stack, base = element_stack(robot, q)
    T = lay.contractions(base)
    Tt = np.swapaxes(T, -1, -2)
    energy = float(np.sum(stack.energies()))
    r = lay.scatter_vector(np.einsum("nij,nj->ni", Tt, stack.residuals()))
    K = G = None
    if tangent:
        K = lay.scatter_matrix(Tt @ stack.tangents() @ T)
        K = 0.5 * (K + K.T)
    if consistent:
        G = lay.scatter_matrix(Tt @ stack.geometric_tangents() @ T) + K
        load_stiffness(robot, loads, q, G)
    for node, F in external_wrench(robot, loads, q):
        r[_node_slice(robot, node)] -= F
    ext = load_potential(robot, loads, q)
    return Assembly(r, K, energy, None if ext is None else energy + ext, G)


def assemble_residual(robot: Robot, q: GeneralizedState, loads: LoadSet | None = None) -> np.ndarray:
    return assemble(robot, q, loads, tangent=False).residual


def assemble_tangent(robot: Robot, q: GeneralizedState) -> np.ndarray:
    return assemble(robot, q, None, tangent=True).tangent


def tangent_dimension(robot: Robot, prescribed_theta: bool = False) -> int:
    n = robot.index.size
    return n - len(robot.motors) if prescribed_theta else n

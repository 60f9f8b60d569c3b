"""Description files and the phase-sampled actuation sweep with its export and metrics.

All files are JSON documents carrying a ``format_version`` field.  Quantities
are SI.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import lie
from .assembly import EE, LoadSet, MotorAxis, NodalWrench, PulleyLoad, Robot, RodSpec, rod_node_poses
from .element import DEFAULT_NATURAL_STRAIN, ElementMaterial, ElementState, interpolate_pose, recover_kinematics
from .errors import DescriptionError, NoConvergence, SweepAborted
from .solver import SolverConfig, initial_guess, predict, solve

FORMAT_VERSION = 1


# --------------------------------------------------------------------------- #
# validation helpers

def _get(obj, key, path, default=...):
    if not isinstance(obj, dict):
        raise DescriptionError(f"{path}: expected an object")
    if key not in obj:
        if default is ...:
            raise DescriptionError(f"{path}.{key}: required field missing")
        return default
    return obj[key]


def _number(value, path, positive=False, nonnegative=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise DescriptionError(f"{path}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise DescriptionError(f"{path}: must be positive, got {value!r}")
    if nonnegative and value < 0:
        raise DescriptionError(f"{path}: must be non-negative, got {value!r}")
    return float(value)


def _integer(value, path, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DescriptionError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise DescriptionError(f"{path}: must be at least {minimum}, got {value}")
    return value


def _vector(value, n, path) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise DescriptionError(f"{path}: expected a list of {n} numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _pose(value, path) -> np.ndarray:
    """``{"position": [3], "rotation": [[3]x3]}`` or ``"rotation_vector": [3]``."""
    position = _vector(_get(value, "position", path), 3, f"{path}.position")
    has_matrix, has_vector = "rotation" in value, "rotation_vector" in value
    if has_matrix and has_vector:
        raise DescriptionError(f"{path}: give either rotation or rotation_vector, not both")
    if has_vector:
        R = lie.exp_so3(_vector(value["rotation_vector"], 3, f"{path}.rotation_vector"))
    elif has_matrix:
        rows = value["rotation"]
        if not isinstance(rows, list) or len(rows) != 3:
            raise DescriptionError(f"{path}.rotation: expected a 3x3 nested list")
        R = np.array([_vector(r, 3, f"{path}.rotation[{i}]") for i, r in enumerate(rows)])
    else:
        R = np.eye(3)
    g = lie.make_pose(R, position)
    if not lie.is_pose(g, tol=1e-9):
        raise DescriptionError(f"{path}.rotation: not a proper rotation matrix")
    return g


def _pose_json(g: np.ndarray) -> dict:
    return {"position": g[:3, 3].tolist(), "rotation": g[:3, :3].tolist()}


def _check_version(doc, path):
    version = _get(doc, "format_version", path)
    if version != FORMAT_VERSION:
        raise DescriptionError(f"{path}.format_version: unsupported version {version!r} (expected {FORMAT_VERSION})")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DescriptionError(f"{path}: invalid JSON ({exc})") from None


# --------------------------------------------------------------------------- #
# robot description

@dataclass(frozen=True)
class SectionMaterial:
    """Circular solid section: Young's modulus (Pa), diameter (m), Poisson ratio, shear correction."""

    youngs_modulus: float
    diameter: float
    poisson_ratio: float = 0.3
    shear_correction: float = 0.9

    def stiffness(self) -> np.ndarray:
        """``diag(EI, EI, GJ, ks G A, ks G A, E A)`` for the [angular; linear] twist order."""
        E, d = self.youngs_modulus, self.diameter
        inertia = math.pi * d**4 / 64.0
        polar = math.pi * d**4 / 32.0
        area = math.pi * d**2 / 4.0
        shear = E / (2.0 * (1.0 + self.poisson_ratio))
        ks = self.shear_correction
        return np.diag([E * inertia, E * inertia, shear * polar, ks * shear * area, ks * shear * area, E * area])

    @classmethod
    def from_json(cls, doc, path) -> "SectionMaterial":
        out = cls(
            _number(_get(doc, "youngs_modulus", path), f"{path}.youngs_modulus", positive=True),
            _number(_get(doc, "diameter", path), f"{path}.diameter", positive=True),
            _number(_get(doc, "poisson_ratio", path, 0.3), f"{path}.poisson_ratio"),
            _number(_get(doc, "shear_correction", path, 0.9), f"{path}.shear_correction", positive=True),
        )
        if not -1.0 < out.poisson_ratio < 0.5:
            raise DescriptionError(f"{path}.poisson_ratio: must lie in (-1, 0.5), got {out.poisson_ratio}")
        return out

    def to_json(self) -> dict:
        return {
            "youngs_modulus": self.youngs_modulus,
            "diameter": self.diameter,
            "poisson_ratio": self.poisson_ratio,
            "shear_correction": self.shear_correction,
        }


@dataclass(frozen=True)
class RodDescription:
    motor: int
    length: float
    elements: int
    install_pose: np.ndarray
    platform_attachment: np.ndarray
    material: SectionMaterial | None = None  # None: use the robot default


@dataclass
class RobotDescription:
    motors: list
    rods: list
    material: SectionMaterial
    natural_strain: np.ndarray = field(default_factory=lambda: DEFAULT_NATURAL_STRAIN.copy())
    frame: str = "origin on the robot central axis, in the plane of the motor axes"
    note: str = ""

    def rod_material(self, k: int) -> SectionMaterial:
        return self.rods[k].material or self.material

    def build(self) -> Robot:
        rods = []
        for k, r in enumerate(self.rods):
            try:
                mat = ElementMaterial(self.rod_material(k).stiffness(), self.natural_strain)
            except ValueError as exc:
                raise DescriptionError(f"rods[{k}].material: {exc}") from None
            rods.append(RodSpec(r.elements, r.length, mat, r.motor, r.install_pose, r.platform_attachment))
        return Robot(self.motors, rods)

    @classmethod
    def from_json(cls, doc) -> "RobotDescription":
        _check_version(doc, "robot")
        material = SectionMaterial.from_json(_get(doc, "material", "robot"), "robot.material")
        natural = _vector(_get(doc, "natural_strain", "robot", list(DEFAULT_NATURAL_STRAIN)), 6, "robot.natural_strain")
        motor_docs = _get(doc, "motors", "robot")
        if not isinstance(motor_docs, list) or not motor_docs:
            raise DescriptionError("robot.motors: expected a non-empty list")
        motors = []
        for i, m in enumerate(motor_docs):
            path = f"robot.motors[{i}]"
            direction = _vector(_get(m, "direction", path), 3, f"{path}.direction")
            norm = np.linalg.norm(direction)
            if abs(norm - 1.0) > 1e-9:
                raise DescriptionError(f"{path}.direction: must be a unit vector (norm {norm:.12g})")
            motors.append(MotorAxis(direction / norm, _vector(_get(m, "point", path), 3, f"{path}.point")))
        rod_docs = _get(doc, "rods", "robot")
        if not isinstance(rod_docs, list) or not rod_docs:
            raise DescriptionError("robot.rods: expected a non-empty list")
        rods = []
        for k, r in enumerate(rod_docs):
            path = f"robot.rods[{k}]"
            motor = _integer(_get(r, "motor", path), f"{path}.motor", minimum=0)
            if motor >= len(motors):
                raise DescriptionError(f"{path}.motor: rod {k} references missing motor {motor}")
            override = r.get("material") if isinstance(r, dict) else None
            rods.append(RodDescription(
                motor,
                _number(_get(r, "length", path), f"{path}.length", positive=True),
                _integer(_get(r, "elements", path), f"{path}.elements", minimum=1),
                _pose(_get(r, "install_pose", path), f"{path}.install_pose"),
                _pose(_get(r, "platform_attachment", path), f"{path}.platform_attachment"),
                None if override is None else SectionMaterial.from_json(override, f"{path}.material"),
            ))
        out = cls(motors, rods, material, natural,
                  str(doc.get("frame", cls.frame)), str(doc.get("note", "")))
        out.build()  # surfaces non-SPD stiffness early
        return out

    def to_json(self) -> dict:
        rods = []
        for r in self.rods:
            item = {
                "motor": r.motor,
                "length": r.length,
                "elements": r.elements,
                "install_pose": _pose_json(r.install_pose),
                "platform_attachment": _pose_json(r.platform_attachment),
            }
            if r.material is not None:
                item["material"] = r.material.to_json()
            rods.append(item)
        return {
            "format_version": FORMAT_VERSION,
            "note": self.note,
            "frame": self.frame,
            "material": self.material.to_json(),
            "natural_strain": self.natural_strain.tolist(),
            "motors": [{"direction": m.direction.tolist(), "point": m.point.tolist()} for m in self.motors],
            "rods": rods,
        }


def symmetric_description(
    rod_length: float = 0.2,
    motor_radius: float = 0.05,
    crank: float = 0.02,
    platform_radius: float = 0.03,
    rod_spacing: float = 0.012,
    elements: int = 4,
    material: SectionMaterial = SectionMaterial(1.13e10, 1e-3),
    motors: int = 3,
) -> RobotDescription:
    """Three-fold symmetric robot with two rods per motor.

    Motor ``m`` sits at angle ``pi/2 + 2 pi m / motors`` on a circle of
    ``motor_radius`` in the z = 0 plane, with its axis tangential.  Its two
    rods start ``crank`` further out radially, ``rod_spacing`` either side
    along the axis, pointing up (+z), and meet the platform at
    ``platform_radius``.
    """
    axes, rods = [], []
    for m in range(motors):
        phi = 0.5 * math.pi + 2.0 * math.pi * m / motors
        radial = np.array([math.cos(phi), math.sin(phi), 0.0])
        tangent = np.array([-math.sin(phi), math.cos(phi), 0.0])
        R = lie.exp_so3(np.array([0.0, 0.0, phi]))
        axes.append(MotorAxis(tangent, motor_radius * radial))
        for side in (-1.0, 1.0):
            base = (motor_radius + crank) * radial + side * rod_spacing * tangent
            top = platform_radius * radial + side * rod_spacing * tangent
            rods.append(RodDescription(m, rod_length, elements, lie.make_pose(R, base), lie.make_pose(R, top)))
    note = (
        "Illustrative prototype: geometry chosen for demonstration, not measured data. "
        f"rod length {rod_length} m, motor axis radius {motor_radius} m, crank {crank} m, "
        f"platform radius {platform_radius} m, rod spacing {rod_spacing} m."
    )
    return RobotDescription(axes, rods, material, note=note)


def load_description(path) -> RobotDescription:
    return RobotDescription.from_json(_read_json(path))


def save_description(desc: RobotDescription, path) -> None:
    Path(path).write_text(json.dumps(desc.to_json(), indent=2) + "\n", encoding="utf-8")


def prototype_path() -> Path:
    """Path of the shipped example robot (illustrative geometry, not measured data)."""
    return Path(str(resources.files("cpr_statics") / "data" / "prototype.example.json"))


def load_prototype() -> RobotDescription:
    return load_description(prototype_path())


# --------------------------------------------------------------------------- #
# loads

def _node_ref(value, path):
    if value == EE:
        return EE
    if isinstance(value, list) and len(value) == 2:
        return (_integer(value[0], f"{path}[0]", 0), _integer(value[1], f"{path}[1]", 1))
    raise DescriptionError(f"{path}: node must be \"ee\" or [rod, interior node index]")


def loads_from_json(doc) -> LoadSet:
    _check_version(doc, "loads")
    out = LoadSet()
    for i, p in enumerate(_get(doc, "pulleys", "loads", [])):
        path = f"loads.pulleys[{i}]"
        out.pulleys.append(PulleyLoad(
            _node_ref(_get(p, "node", path, EE), f"{path}.node"),
            _vector(_get(p, "anchor", path), 3, f"{path}.anchor"),
            _number(_get(p, "magnitude", path), f"{path}.magnitude", nonnegative=True),
        ))
    for i, w in enumerate(_get(doc, "wrenches", "loads", [])):
        path = f"loads.wrenches[{i}]"
        moment = _vector(_get(w, "moment", path, [0.0, 0.0, 0.0]), 3, f"{path}.moment")
        force = _vector(_get(w, "force", path, [0.0, 0.0, 0.0]), 3, f"{path}.force")
        out.wrenches.append(NodalWrench(_node_ref(_get(w, "node", path, EE), f"{path}.node"), np.concatenate([moment, force])))
    return out


def loads_to_json(loads: LoadSet) -> dict:
    node = lambda n: n if n == EE else list(n)  # noqa: E731
    return {
        "format_version": FORMAT_VERSION,
        "pulleys": [{"node": node(p.node), "anchor": list(map(float, p.anchor)), "magnitude": float(p.magnitude)} for p in loads.pulleys],
        "wrenches": [{"node": node(w.node), "moment": list(map(float, w.wrench[:3])), "force": list(map(float, w.wrench[3:]))} for w in loads.wrenches],
    }


def load_loads(path) -> LoadSet:
    return loads_from_json(_read_json(path))


# --------------------------------------------------------------------------- #
# actuation protocol

@dataclass(frozen=True)
class ActuationProtocol:
    """Motor angles ``theta_m(t) = offset + amplitude * sin(omega t + phase_m)``.

    The defaults give the three-phase excitation swinging each motor
    between ``-pi/6`` and ``0``.  ``phase_samples`` uniform phases cover one
    period; with ``close_period`` the phase ``2 pi`` is recorded as well.
    """

    amplitude: float = -math.pi / 12.0
    offset: float = -math.pi / 12.0
    omega: float = 0.5
    phases: tuple = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
    ramp_duration: float = 2.0
    phase_samples: int = 10
    close_period: bool = True

    def __post_init__(self):
        if self.phase_samples < 1:
            raise DescriptionError("protocol.phase_samples: must be at least 1")
        if not self.omega > 0:
            raise DescriptionError("protocol.omega: must be positive")
        if self.ramp_duration < 0:
            raise DescriptionError("protocol.ramp_duration: must be non-negative")
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def angles(self, t: float) -> np.ndarray:
        return self.offset + self.amplitude * np.sin(self.omega * t + np.array(self.phases))

    @classmethod
    def from_json(cls, doc) -> "ActuationProtocol":
        _check_version(doc, "protocol")
        d = cls()
        phases = _get(doc, "phases", "protocol", list(d.phases))
        if not isinstance(phases, list) or not phases:
            raise DescriptionError("protocol.phases: expected a non-empty list")
        close = _get(doc, "close_period", "protocol", d.close_period)
        if not isinstance(close, bool):
            raise DescriptionError("protocol.close_period: expected true or false")
        return cls(
            _number(_get(doc, "amplitude", "protocol", d.amplitude), "protocol.amplitude"),
            _number(_get(doc, "offset", "protocol", d.offset), "protocol.offset"),
            _number(_get(doc, "omega", "protocol", d.omega), "protocol.omega", positive=True),
            tuple(_number(p, f"protocol.phases[{i}]") for i, p in enumerate(phases)),
            _number(_get(doc, "ramp_duration", "protocol", d.ramp_duration), "protocol.ramp_duration", nonnegative=True),
            _integer(_get(doc, "phase_samples", "protocol", d.phase_samples), "protocol.phase_samples", minimum=1),
            close,
        )

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "omega": self.omega,
            "phases": list(self.phases),
            "ramp_duration": self.ramp_duration,
            "phase_samples": self.phase_samples,
            "close_period": self.close_period,
        }


def load_protocol(path) -> ActuationProtocol:
    return ActuationProtocol.from_json(_read_json(path))


@dataclass(frozen=True)
class ProtocolSample:
    index: int
    time: float  # seconds since the start of the run
    phase: float | None  # omega * t within the periodic part, None for the zero sample
    theta: np.ndarray


def generate_protocol(p: ActuationProtocol) -> list:
    """Zero-angle start, then uniform phases over one period from the ramp endpoint."""
    samples = [ProtocolSample(0, 0.0, None, np.zeros(len(p.phases)))]
    count = p.phase_samples + (1 if p.close_period else 0)
    for i in range(count):
        t = i * p.period / p.phase_samples
        samples.append(ProtocolSample(i + 1, p.ramp_duration + t, p.omega * t, p.angles(t)))
    return samples


# --------------------------------------------------------------------------- #
# sweep

@dataclass
class SampleRecord:
    index: int
    time: float
    phase: float | None
    theta: np.ndarray
    ee_pose: np.ndarray
    residual: float
    iterations: int
    converged: bool
    shapes: list | None = None  # per rod: (stations, 4, 4) poses

    @property
    def position(self) -> np.ndarray:
        return self.ee_pose[:3, 3]


@dataclass
class TrajectoryRecord:
    samples: list = field(default_factory=list)
    frame: str = ""

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.samples]).reshape(-1, 3)


def rod_shapes(robot: Robot, q, stations_per_element: int) -> list:
    """Poses along every rod: ``stations_per_element`` per element plus the tip."""
    if stations_per_element < 1:
        raise ValueError("stations_per_element must be at least 1")
    out = []
    for k, rod in enumerate(robot.rods):
        nodes = rod_node_poses(robot, q, k)
        h = rod.element_length
        poses = []
        for e in range(rod.element_count):
            state = ElementState(nodes[e], nodes[e + 1], q.slopes[k][e], h)
            kin = recover_kinematics(state)
            for i in range(stations_per_element):
                poses.append(interpolate_pose(state, kin, h * i / stations_per_element))
        poses.append(nodes[-1].copy())
        out.append(np.array(poses))
    return out


def _solve_sample(robot, q0, loads, config, shapes):
    rep = solve(robot, q0, loads, config)
    shape = rod_shapes(robot, rep.final_state, shapes) if shapes else None
    return rep, shape


def _record(sample: ProtocolSample, rep, shape) -> SampleRecord:
    return SampleRecord(sample.index, sample.time, sample.phase, sample.theta.copy(), rep.final_state.ee_pose.copy(),
                        rep.residual, rep.iterations, rep.converged, shape)


def _cold_task(args):
    robot, theta, loads, config, shapes = args
    return _solve_sample(robot, initial_guess(robot, theta), loads, config, shapes)


def run_sweep(
    description: RobotDescription | Robot,
    protocol: ActuationProtocol,
    loads: LoadSet | None = None,
    config: SolverConfig | None = None,
    shapes: int = 0,
    warm_start: bool = True,
    workers: int = 1,
) -> TrajectoryRecord:
    """Prescribed-angle equilibria at every protocol sample.

    Warm starts carry the previous equilibrium forward with a first-order
    continuation predictor.  With ``warm_start=False`` every sample starts
    from the straight initial guess and, with ``workers > 1``, samples are
    solved in parallel processes.  ``shapes > 0`` stores that many stations
    per element for every rod.

    Raises :class:`SweepAborted` with the partial record on non-convergence.
    """
    robot = description.build() if isinstance(description, RobotDescription) else description
    frame = description.frame if isinstance(description, RobotDescription) else ""
    config = config or SolverConfig()
    if not config.prescribed_theta:
        raise ValueError("sweeps prescribe the motor angles; use prescribed_theta=True")
    samples = generate_protocol(protocol)
    if len(samples[0].theta) != len(robot.motors):
        raise DescriptionError(f"protocol drives {len(samples[0].theta)} motors, robot has {len(robot.motors)}")
    record = TrajectoryRecord([], frame)

    if not warm_start and workers > 1:
        tasks = [(robot, s.theta, loads, config, shapes) for s in samples]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_cold_task, t) for t in tasks]
            for s, fut in zip(samples, futures):
                try:
                    rep, shape = fut.result()
                except NoConvergence as exc:
                    raise SweepAborted(s.index, record, exc) from exc
                record.samples.append(_record(s, rep, shape))
        return record

    q = None
    for s in samples:
        if q is None or not warm_start:
            q0 = initial_guess(robot, s.theta)
        else:
            q0 = predict(robot, q, s.theta, loads)
        try:
            rep, shape = _solve_sample(robot, q0, loads, config, shapes)
        except NoConvergence as exc:
            raise SweepAborted(s.index, record, exc) from exc
        record.samples.append(_record(s, rep, shape))
        q = rep.final_state
    return record


# --------------------------------------------------------------------------- #
# metrics and export

def compute_error_metrics(sim, ref) -> dict:
    """Pointwise position errors ``|p_ref - p_sim|`` in millimetres, with mean and max.

    ``sim`` and ``ref`` are trajectory records or ``(n, 3)`` position arrays in metres.
    """
    a = sim.positions if isinstance(sim, TrajectoryRecord) else np.asarray(sim, dtype=float).reshape(-1, 3)
    b = ref.positions if isinstance(ref, TrajectoryRecord) else np.asarray(ref, dtype=float).reshape(-1, 3)
    if len(a) != len(b):
        raise DescriptionError(f"sample count mismatch: simulation has {len(a)}, reference has {len(b)}")
    if len(a) == 0:
        raise DescriptionError("no samples to compare")
    errors = 1e3 * np.linalg.norm(b - a, axis=1)
    return {"errors_mm": errors.tolist(), "mean_mm": float(errors.mean()), "max_mm": float(errors.max())}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def trajectory_csv(record: TrajectoryRecord, n_motors: int | None = None) -> str:
    if n_motors is None:
        n_motors = len(record.samples[0].theta) if record.samples else 3
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", *[f"theta{m + 1}" for m in range(n_motors)], "x", "y", "z", "residual", "iterations"])
    for s in record.samples:
        writer.writerow([s.index, *map(_fmt, s.theta), *map(_fmt, s.position), _fmt(s.residual), s.iterations])
    return buf.getvalue()


def trajectory_json(record: TrajectoryRecord) -> dict:
    out = {"format_version": FORMAT_VERSION, "frame": record.frame, "samples": []}
    for s in record.samples:
        item = {
            "index": s.index,
            "time": s.time,
            "phase": s.phase,
            "theta": s.theta.tolist(),
            "ee_pose": s.ee_pose.tolist(),
            "residual": s.residual,
            "iterations": s.iterations,
            "converged": s.converged,
        }
        if s.shapes is not None:
            item["shapes"] = [rod.tolist() for rod in s.shapes]
        out["samples"].append(item)
    return out


def export(record: TrajectoryRecord, path, fmt: str | None = None) -> None:
    """Write ``record`` as CSV or JSON; the format defaults to the file suffix."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    if fmt == "csv":
        text = trajectory_csv(record)
    elif fmt == "json":
        # repr-based float output round-trips exactly (17 significant digits suffice)
        text = json.dumps(trajectory_json(record), indent=1) + "\n"
    else:
        raise ValueError(f"unknown export format {fmt!r}; use csv or json")
    path.write_text(text, encoding="utf-8")


def read_positions(path) -> np.ndarray:
    """End-effector positions (m) from an exported CSV or JSON trajectory, or a plain x,y,z CSV."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
        try:
            return np.array([np.asarray(s["ee_pose"], dtype=float)[:3, 3] for s in doc["samples"]]).reshape(-1, 3)
        except (KeyError, TypeError, ValueError) as exc:
            raise DescriptionError(f"{path}: not a trajectory document ({exc})") from None
    rows = list(csv.DictReader(io.StringIO(text)))
    try:
        return np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]).reshape(-1, 3)
    except (KeyError, TypeError, ValueError) as exc:
        raise DescriptionError(f"{path}: expected x, y, z columns ({exc})") from None


def example_loads() -> LoadSet:
    """Shipped pulley load: 0.5 N on the end-effector toward an anchor above and beside it."""
    return load_loads(prototype_path().with_name("pulley.example.json"))


def circle_fit(points) -> dict:
    """Least-squares circle through 3D points: centre, radius, normal and max radial deviation (m).

    The plane comes from the SVD of the centred points; the circle from an
    algebraic (Kasa) fit in that plane.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) < 3:
        raise ValueError("a circle fit needs at least three points")
    centroid = P.mean(axis=0)
    _, _, Vt = np.linalg.svd(P - centroid)
    u, v, normal = Vt
    xy = np.column_stack([(P - centroid) @ u, (P - centroid) @ v])
    A = np.column_stack([2.0 * xy, np.ones(len(xy))])
    b = np.sum(xy**2, axis=1)
    (cx, cy, c), *_ = np.linalg.lstsq(A, b, rcond=None)
    radius = math.sqrt(max(c + cx * cx + cy * cy, 0.0))
    in_plane = np.linalg.norm(xy - [cx, cy], axis=1) - radius
    off_plane = (P - centroid) @ normal
    return {
        "center": centroid + cx * u + cy * v,
        "radius": radius,
        "normal": normal,
        "max_deviation": float(np.max(np.hypot(in_plane, off_plane))),
    }

from __future__ import annotations

import copy
import dataclasses
import math

import numpy as np
import pytest

from cpr_statics import lie
from cpr_statics.assembly import MotorAxis, Robot, RodSpec
from cpr_statics.element import ElementMaterial
from cpr_statics.scenario import SectionMaterial, load_prototype


def random_twist(rng, angular=1.0, linear=1.0):
    a = rng.normal(size=3)
    a *= angular * rng.uniform() / np.linalg.norm(a)
    return np.concatenate([a, linear * rng.normal(size=3)])


def random_pose(rng, angle=3.0, scale=1.0):
    return lie.exp_se3(random_twist(rng, angle, scale))


def section_stiffness():
    return SectionMaterial(1.13e10, 1e-3).stiffness()


def random_spd(rng, n=6):
    M = rng.normal(size=(n, n))
    return M @ M.T + n * np.eye(n)


def two_rod_robot(n=2, length=0.1):
    """Two parallel rods on one motor, joined by the platform; small enough for dense checks."""
    mat = ElementMaterial(section_stiffness())
    motor = MotorAxis(np.array([1.0, 0.0, 0.0]), np.zeros(3))
    rods = [
        RodSpec(n, length, mat, 0, lie.make_pose(position=[0.0, y, 0.0]), lie.make_pose(position=[0.0, y, 0.0]))
        for y in (-0.01, 0.01)
    ]
    return Robot([motor], rods)


def transformed_robot(robot: Robot, T: np.ndarray) -> Robot:
    """Every world-fixed datum mapped by the rigid transform ``T``."""
    R, p = T[:3, :3], T[:3, 3]
    motors = [MotorAxis(R @ m.direction, R @ m.point + p) for m in robot.motors]
    rods = [RodSpec(r.element_count, r.length, r.material, r.motor, T @ r.install_pose, r.platform_attachment)
            for r in robot.rods]
    return Robot(motors, rods)


@pytest.fixture(scope="session")
def prototype_description():
    return load_prototype()


@pytest.fixture(scope="session")
def prototype(prototype_description):
    return prototype_description.build()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


PI = math.pi


def straight_variant(description):
    """Copy of a description whose platform attachments sit directly above the base points.

    With rods of natural length the assembly is then exactly compatible at
    ``theta = 0``: every rod is straight and unstressed.
    """
    out = copy.deepcopy(description)
    out.rods = [dataclasses.replace(r, platform_attachment=r.install_pose.copy()) for r in out.rods]
    return out


def compatible_state(robot):
    """Exact straight-rod configuration for :func:`straight_variant` robots at zero angles."""
    from cpr_statics.assembly import GeneralizedState

    L = robot.rods[0].length
    ee = lie.make_pose(position=[0.0, 0.0, L])
    interior, slopes = [], []
    for rod in robot.rods:
        h = rod.element_length
        xi0 = rod.material.natural_strain
        interior.append(np.array([rod.install_pose @ lie.exp_se3(j * h * xi0) for j in range(1, rod.element_count)]))
        slopes.append(np.zeros((rod.element_count, 6)))
    return GeneralizedState(np.zeros(len(robot.motors)), ee, interior, slopes)


@pytest.fixture(scope="session")
def loaded_equilibrium(prototype):
    from cpr_statics.scenario import example_loads
    from cpr_statics.solver import initial_guess, solve

    loads = example_loads()
    theta = np.array([-0.3, -0.1, -0.45])
    return theta, loads, solve(prototype, initial_guess(prototype, theta), loads).final_state

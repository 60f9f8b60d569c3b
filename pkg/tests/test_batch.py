"""The vectorized kernels agree with the scalar reference implementations."""

import math

import numpy as np
import pytest

from cpr_statics import batch, lie
from cpr_statics.element import (
    ElementMaterial,
    ElementState,
    element_energy,
    element_geometric_tangent,
    element_residual,
    element_tangent,
    magnus_forward,
    recover_kinematics,
)
from cpr_statics.errors import ElementRotationTooLarge, RotationNearPi

from conftest import random_pose, random_spd, random_twist


@pytest.fixture
def twists(rng):
    # include the small-angle branch and exact zeros
    w = np.array([random_twist(rng, 3.0, 2.0) for _ in range(40)])
    w[:5, :3] *= 1e-3
    w[5, :3] = 0.0
    w[6] = 0.0
    return w


def test_lie_kernels(twists):
    G = batch.exp_se3(twists)
    logs, angles = batch.log_se3(G)
    for i, w in enumerate(twists):
        assert np.allclose(G[i], lie.exp_se3(w), atol=1e-14)
        assert np.allclose(logs[i], lie.log_se3(G[i]), atol=1e-12)
        assert angles[i] == pytest.approx(np.linalg.norm(logs[i][:3]), abs=1e-11)
        assert np.allclose(batch.dexp_inv(twists)[i], lie.dexp_inv(w), atol=1e-12)
        assert np.allclose(batch.adjoint_group(G)[i], lie.adjoint_group(G[i]), atol=1e-14)
        assert np.allclose(batch.adjoint_algebra(twists)[i], lie.adjoint_algebra(w), atol=0)
        assert np.allclose(batch.inv_pose(G)[i], lie.inv_pose(G[i]), atol=1e-14)


def test_log_near_pi_reports_index():
    G = np.stack([np.eye(4), lie.exp_se3([0, math.pi - 1e-9, 0, 0, 0, 0])])
    with pytest.raises(batch.BatchError) as info:
        batch.log_se3(G)
    assert info.value.index == 1
    assert isinstance(info.value.error, RotationNearPi)


def element_stack(rng, n=25, h=0.05):
    states, mats = [], []
    for _ in range(n):
        mean, slope = random_twist(rng, 8.0, 1.0), random_twist(rng, 20.0, 2.0)
        ga = random_pose(rng)
        states.append(ElementState(ga, ga @ lie.exp_se3(magnus_forward(mean, slope, h)), slope, h))
        mats.append(ElementMaterial(random_spd(rng), random_twist(rng, 0.5, 0.5)))
    stack = batch.ElementStack(
        np.stack([s.pose_a for s in states]),
        np.stack([s.pose_b for s in states]),
        np.stack([s.slope for s in states]),
        np.full(n, h),
        np.stack([m.stiffness for m in mats]),
        np.stack([m.natural_strain for m in mats]),
    )
    return states, mats, stack


def test_element_quantities(rng):
    states, mats, stack = element_stack(rng)
    energies, residuals, tangents = stack.energies(), stack.residuals(), stack.tangents()
    geometric = stack.geometric_tangents()
    for i, (e, m) in enumerate(zip(states, mats)):
        kin = recover_kinematics(e)
        assert np.allclose(stack.mean[i], kin.mean_strain, rtol=1e-12, atol=1e-12)
        for name in ("J1", "J2", "J3"):
            assert np.allclose(getattr(stack, name)[i], getattr(kin, name), rtol=1e-11, atol=1e-12)
        assert energies[i] == pytest.approx(element_energy(e, m, kin), rel=1e-11)
        gamma = element_residual(e, m, kin)
        assert np.allclose(residuals[i], gamma, atol=1e-11 * np.max(np.abs(gamma)))
        H = element_tangent(e, m, kin)
        assert np.allclose(tangents[i], H, atol=1e-12 * np.max(np.abs(H)))
        Gs = element_geometric_tangent(e, m, kin)
        assert np.allclose(geometric[i], Gs, atol=1e-7 * np.max(np.abs(Gs)))


def test_rotation_bound_reports_index(rng):
    g = np.stack([np.eye(4), np.eye(4)])
    gb = np.stack([lie.exp_se3([0, 0, 0, 0, 0, 0.1]), lie.exp_se3([0, 0, 1.6, 0, 0, 0.1])])
    with pytest.raises(batch.BatchError) as info:
        batch.ElementStack(g, gb, np.zeros((2, 6)), np.full(2, 0.1), np.stack([np.eye(6)] * 2), np.zeros((2, 6)))
    assert info.value.index == 1
    assert isinstance(info.value.error, ElementRotationTooLarge)

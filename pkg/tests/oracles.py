"""Independent reference computations shared by the test modules."""

from __future__ import annotations

import numpy as np

from cpr_statics import lie


def _hat_stack(v):
    return np.stack([lie.hat(x) for x in v])


def integrate_linear_strain(mean, slope, h, steps=10_000):
    """RK4 on ``g' = g hat(mean + (s - h/2) slope)`` over ``[0, h]`` from the identity.

    ``mean`` and ``slope`` may be single twists or ``(n, 6)`` stacks.
    """
    mean, slope = np.asarray(mean, dtype=float), np.asarray(slope, dtype=float)
    single = mean.ndim == 1
    M0, M1 = _hat_stack(np.atleast_2d(mean)), _hat_stack(np.atleast_2d(slope))
    ds = h / steps
    g = np.broadcast_to(np.eye(4), M0.shape).copy()
    for i in range(steps):
        s = i * ds
        a = M0 + (s - 0.5 * h) * M1
        b = a + 0.5 * ds * M1
        c = a + ds * M1
        k1 = g @ a
        k2 = (g + 0.5 * ds * k1) @ b
        k3 = (g + 0.5 * ds * k2) @ b
        k4 = (g + ds * k3) @ c
        g = g + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return g[0] if single else g


def pose_error(g1, g2):
    return float(np.linalg.norm(lie.log_se3(lie.inv_pose(g1) @ g2)))


def empirical_order(lengths, errors):
    slope, _ = np.polyfit(np.log(lengths), np.log(errors), 1)
    return float(slope)


def right_perturbation_fd(f, poses, slope, direction, eps):
    """Central difference of ``f(poses, slope)`` along ``direction = [dzeta_a; dzeta_b; dbeta]``."""
    def at(t):
        ga = poses[0] @ lie.exp_se3(t * direction[:6])
        gb = poses[1] @ lie.exp_se3(t * direction[6:12])
        return f(ga, gb, slope + t * direction[12:])

    return (at(eps) - at(-eps)) / (2 * eps)

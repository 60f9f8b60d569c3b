import copy
import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpr_statics import lie
from cpr_statics.assembly import EE, LoadSet, NodalWrench, PulleyLoad
from cpr_statics.errors import DescriptionError, SweepAborted
from cpr_statics.scenario import (
    ActuationProtocol,
    RobotDescription,
    SampleRecord,
    SectionMaterial,
    TrajectoryRecord,
    circle_fit,
    compute_error_metrics,
    example_loads,
    export,
    generate_protocol,
    load_description,
    load_loads,
    load_protocol,
    loads_from_json,
    loads_to_json,
    read_positions,
    run_sweep,
    save_description,
    symmetric_description,
    trajectory_csv,
)
from cpr_statics.solver import SolverConfig, initial_guess, solve

E, D = 1.13e10, 1e-3


@pytest.fixture(scope="module")
def sweeps(prototype_description):
    protocol = ActuationProtocol()
    return {
        "unloaded": run_sweep(prototype_description, protocol),
        "loaded": run_sweep(prototype_description, protocol, example_loads()),
    }


@pytest.fixture
def robot_doc(prototype_description):
    return copy.deepcopy(prototype_description.to_json())


class TestDescription:
    def test_prototype_stiffness(self, prototype_description):
        K = prototype_description.material.stiffness()
        G = E / (2 * 1.3)
        assert K[0, 0] == pytest.approx(E * math.pi * D**4 / 64, rel=1e-15)
        assert K[2, 2] == pytest.approx(G * math.pi * D**4 / 32, rel=1e-15)
        assert K[3, 3] == pytest.approx(0.9 * G * math.pi * D**2 / 4, rel=1e-15)
        assert K[5, 5] == pytest.approx(E * math.pi * D**2 / 4, rel=1e-15)
        assert np.count_nonzero(K - np.diag(np.diag(K))) == 0

    def test_shipped_file_matches_builder(self, prototype_description):
        assert prototype_description.to_json() == symmetric_description().to_json()

    def test_prototype_layout(self, prototype_description):
        d = prototype_description
        assert len(d.motors) == 3 and len(d.rods) == 6
        assert all(r.elements == 4 for r in d.rods)
        assert "not measured" in d.note

    def test_round_trip(self, prototype_description, tmp_path):
        path = tmp_path / "robot.json"
        save_description(prototype_description, path)
        again = load_description(path)
        assert again.to_json() == prototype_description.to_json()
        save_description(again, tmp_path / "again.json")
        assert (tmp_path / "again.json").read_text() == path.read_text()

    def test_rod_material_override(self, robot_doc):
        robot_doc["rods"][2]["material"] = {"youngs_modulus": 2e11, "diameter": 2e-3}
        desc = RobotDescription.from_json(robot_doc)
        robot = desc.build()
        assert robot.rods[2].material.stiffness[5, 5] == pytest.approx(2e11 * math.pi * 1e-6)
        assert robot.rods[1].material.stiffness[5, 5] == pytest.approx(E * math.pi * 0.25e-6)
        assert RobotDescription.from_json(desc.to_json()).to_json() == desc.to_json()

    def test_rotation_vector_form(self, robot_doc):
        robot_doc["rods"][0]["install_pose"] = {"position": [0, 0, 0], "rotation_vector": [0, 0, 0.5]}
        g = RobotDescription.from_json(robot_doc).rods[0].install_pose
        assert np.allclose(g[:3, :3], lie.exp_so3([0, 0, 0.5]))

    @pytest.mark.parametrize(
        "edit, message",
        [
            (lambda d: d["rods"][3].__setitem__("motor", 7), "robot.rods[3].motor: rod 3 references missing motor 7"),
            (lambda d: d["rods"][1].pop("length"), "robot.rods[1].length: required field missing"),
            (lambda d: d["rods"][1].__setitem__("elements", 0), "robot.rods[1].elements: must be at least 1"),
            (lambda d: d["rods"][1].__setitem__("length", -0.1), "robot.rods[1].length: must be positive"),
            (lambda d: d["motors"][0].__setitem__("direction", [1, 1, 0]), "robot.motors[0].direction: must be a unit vector"),
            (lambda d: d["motors"][2].__setitem__("point", [0, 0]), "robot.motors[2].point: expected a list of 3 numbers"),
            (lambda d: d["material"].__setitem__("youngs_modulus", "big"), "robot.material.youngs_modulus: expected a finite number"),
            (lambda d: d["material"].__setitem__("poisson_ratio", 0.7), "robot.material.poisson_ratio: must lie in"),
            (lambda d: d["rods"][0]["install_pose"].__setitem__("rotation", [[1, 0, 0], [0, 1, 0], [0, 0, -1]]),
             "robot.rods[0].install_pose.rotation: not a proper rotation"),
            (lambda d: d.__setitem__("format_version", 99), "robot.format_version: unsupported version"),
            (lambda d: d.__setitem__("rods", []), "robot.rods: expected a non-empty list"),
        ],
    )
    def test_field_path_errors(self, robot_doc, edit, message):
        edit(robot_doc)
        with pytest.raises(DescriptionError, match=message.replace("[", r"\[").replace("]", r"\]").replace(".", r"\.")):
            RobotDescription.from_json(robot_doc)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(DescriptionError, match="invalid JSON"):
            load_description(path)

    def test_section_material(self):
        K = SectionMaterial(1.0, 2.0, poisson_ratio=0.25, shear_correction=1.0).stiffness()
        assert K[3, 3] == pytest.approx(math.pi / 2.5)


class TestLoadsFile:
    def test_round_trip(self):
        loads = LoadSet([NodalWrench((1, 2), np.arange(6.0))], [PulleyLoad(EE, np.array([0.1, 0, 0.5]), 0.5)])
        again = loads_from_json(json.loads(json.dumps(loads_to_json(loads))))
        assert again.wrenches[0].node == (1, 2)
        assert np.array_equal(again.wrenches[0].wrench, np.arange(6.0))
        assert again.pulleys[0].node == EE and again.pulleys[0].magnitude == 0.5

    def test_shipped_pulley(self):
        (p,) = example_loads().pulleys
        assert p.magnitude == 0.5 and p.node == EE

    def test_bad_node(self):
        with pytest.raises(DescriptionError, match=r"loads\.pulleys\[0\]\.node"):
            loads_from_json({"format_version": 1, "pulleys": [{"node": "base", "anchor": [0, 0, 1], "magnitude": 1}]})

    def test_negative_magnitude(self):
        with pytest.raises(DescriptionError, match="non-negative"):
            loads_from_json({"format_version": 1, "pulleys": [{"anchor": [0, 0, 1], "magnitude": -1}]})


class TestProtocol:
    def test_transition_endpoint(self):
        samples = generate_protocol(ActuationProtocol())
        expected = -(math.pi / 12) * np.array([1.0, 1.8660254037844386, 0.1339745962155614])
        assert np.allclose(samples[1].theta, expected, atol=1e-15)

    def test_period(self):
        assert ActuationProtocol().period == pytest.approx(4 * math.pi)

    def test_counting(self):
        samples = generate_protocol(ActuationProtocol())
        assert len(samples) == 12
        assert np.array_equal(samples[0].theta, np.zeros(3))
        distinct = {tuple(np.round(s.theta, 12)) for s in samples}
        assert len(distinct) == 11
        assert np.allclose(samples[1].theta, samples[-1].theta, atol=1e-15)
        assert [s.index for s in samples] == list(range(12))
        assert len(generate_protocol(ActuationProtocol(close_period=False))) == 11

    def test_range(self):
        for s in generate_protocol(ActuationProtocol(phase_samples=200)):
            assert np.all(s.theta <= 1e-15) and np.all(s.theta >= -math.pi / 6 - 1e-15)

    def test_bit_identical_regeneration(self):
        a, b = generate_protocol(ActuationProtocol()), generate_protocol(ActuationProtocol())
        assert all(np.array_equal(x.theta, y.theta) and x.time == y.time for x, y in zip(a, b))

    def test_times(self):
        samples = generate_protocol(ActuationProtocol())
        assert samples[1].time == 2.0
        assert samples[-1].time == pytest.approx(2.0 + 4 * math.pi)

    def test_validation(self):
        with pytest.raises(DescriptionError):
            ActuationProtocol(phase_samples=0)
        with pytest.raises(DescriptionError):
            ActuationProtocol(omega=0.0)

    def test_file_round_trip(self, tmp_path):
        p = ActuationProtocol(amplitude=0.1, phase_samples=7, close_period=False)
        path = tmp_path / "p.json"
        path.write_text(json.dumps(p.to_json()))
        assert load_protocol(path) == p

    @settings(max_examples=200)
    @given(st.floats(-100, 100), st.floats(0.01, 10))
    def test_amplitude_bound_property(self, t, omega):
        theta = ActuationProtocol(omega=omega).angles(t)
        assert np.all(theta <= 1e-15) and np.all(theta >= -math.pi / 6 - 1e-15)


class TestSweep:
    def test_zero_amplitude(self, prototype, prototype_description):
        rec = run_sweep(prototype_description, ActuationProtocol(amplitude=0.0, offset=0.0, phase_samples=3))
        ref = solve(prototype, initial_guess(prototype, np.zeros(3))).final_state.ee_pose
        for s in rec.samples:
            assert np.allclose(s.ee_pose, ref, atol=1e-12)

    def test_periodicity(self, sweeps):
        for rec in sweeps.values():
            assert np.linalg.norm(rec.samples[1].position - rec.samples[-1].position) < 1e-9

    def test_record_contents(self, sweeps):
        rec = sweeps["unloaded"]
        assert len(rec.samples) == 12
        assert all(s.converged and s.residual < 1e-9 for s in rec.samples)
        assert rec.frame.startswith("origin on the robot central axis")
        for s in rec.samples:
            assert lie.is_pose(s.ee_pose, tol=1e-12)

    def test_unloaded_trajectory_is_near_circular(self, sweeps):
        fit = circle_fit(sweeps["unloaded"].positions[1:])
        # regression numbers for the shipped geometry
        assert fit["radius"] == pytest.approx(18.3e-3, rel=0.01)
        assert fit["max_deviation"] < 0.01 * fit["radius"]
        assert abs(fit["normal"][2]) > 0.99

    def test_warm_start_matches_cold_start(self, prototype_description, sweeps):
        for key, loads in (("unloaded", None), ("loaded", example_loads())):
            cold = run_sweep(prototype_description, ActuationProtocol(), loads, warm_start=False)
            warm = sweeps[key]
            assert np.max(np.linalg.norm(cold.positions - warm.positions, axis=1)) < 1e-8
            # over the whole sweep warm starts save work; single samples may need one or two more
            assert sum(s.iterations for s in warm.samples) <= sum(s.iterations for s in cold.samples)

    def test_parallel_cold_start(self, prototype_description, sweeps):
        rec = run_sweep(prototype_description, ActuationProtocol(), warm_start=False, workers=2)
        assert np.max(np.abs(rec.positions - sweeps["unloaded"].positions)) < 1e-8

    def test_shapes(self, prototype, prototype_description):
        rec = run_sweep(prototype_description, ActuationProtocol(phase_samples=2, close_period=False), shapes=3)
        for s in rec.samples:
            assert len(s.shapes) == 6
            assert sum(len(r) for r in s.shapes) == 6 * (3 * 4 + 1)
            for k, rod in enumerate(prototype.rods):
                assert np.allclose(s.shapes[k][-1], s.ee_pose @ rod.platform_attachment, atol=1e-9)

    def test_abort_keeps_partial_record(self, prototype_description):
        with pytest.raises(SweepAborted) as info:
            run_sweep(prototype_description, ActuationProtocol(), config=SolverConfig(max_iterations=12))
        assert info.value.sample_index == 1
        assert len(info.value.record.samples) == 1
        assert info.value.report is not None

    def test_load_shifts_toward_pulley(self, sweeps):
        shift = sweeps["loaded"].positions[1:].mean(axis=0) - sweeps["unloaded"].positions[1:].mean(axis=0)
        assert shift[0] > 1e-3  # anchor sits at +x


def record_from(points):
    return TrajectoryRecord([
        SampleRecord(i, 0.0, None, np.zeros(3), lie.make_pose(position=p), 0.0, 0, True) for i, p in enumerate(points)
    ])


class TestMetrics:
    def test_identical(self, sweeps):
        m = compute_error_metrics(sweeps["unloaded"], sweeps["unloaded"])
        assert m["mean_mm"] == 0 and m["max_mm"] == 0 and len(m["errors_mm"]) == 12

    def test_uniform_offset(self, sweeps):
        ref = sweeps["unloaded"].positions + [1e-3, 0, 0]
        m = compute_error_metrics(sweeps["unloaded"], ref)
        assert m["mean_mm"] == pytest.approx(1.0, rel=1e-9)
        assert m["max_mm"] == pytest.approx(1.0, rel=1e-9)

    def test_count_mismatch(self, sweeps):
        with pytest.raises(DescriptionError, match="sample count mismatch"):
            compute_error_metrics(sweeps["unloaded"], sweeps["unloaded"].positions[:5])

    @settings(max_examples=100)
    @given(st.integers(0, 2**31), st.integers(1, 20))
    def test_against_reimplementation(self, seed, n):
        rng = np.random.default_rng(seed)
        sim, ref, c = rng.normal(size=(n, 3)) * 0.01, rng.normal(size=(n, 3)) * 0.01, rng.normal(size=3) * 0.01
        m = compute_error_metrics(record_from(sim), ref + c)
        expected = [1000 * math.sqrt(sum((ref[i][j] + c[j] - sim[i][j]) ** 2 for j in range(3))) for i in range(n)]
        assert np.allclose(m["errors_mm"], expected, rtol=1e-12)
        assert m["mean_mm"] == pytest.approx(sum(expected) / n, rel=1e-12)
        assert m["max_mm"] == pytest.approx(max(expected), rel=1e-12)


class TestExport:
    def test_csv_round_trip(self, sweeps, tmp_path):
        rec = sweeps["loaded"]
        path = tmp_path / "t.csv"
        export(rec, path)
        assert np.array_equal(read_positions(path), rec.positions)
        rows = list(csv.reader(io.StringIO(path.read_text())))
        assert rows[0] == ["index", "theta1", "theta2", "theta3", "x", "y", "z", "residual", "iterations"]
        assert len(rows) == 13

    def test_empty_record(self):
        assert trajectory_csv(TrajectoryRecord()) == "index,theta1,theta2,theta3,x,y,z,residual,iterations\n"

    def test_json_round_trip(self, prototype_description, tmp_path):
        rec = run_sweep(prototype_description, ActuationProtocol(phase_samples=1, close_period=False), shapes=2)
        path = tmp_path / "t.json"
        export(rec, path)
        doc = json.loads(path.read_text())
        assert np.array_equal(read_positions(path), rec.positions)
        assert np.array_equal(np.array(doc["samples"][1]["ee_pose"]), rec.samples[1].ee_pose)
        assert np.array(doc["samples"][0]["shapes"][0]).shape == (2 * 4 + 1, 4, 4)

    def test_unknown_format(self, sweeps, tmp_path):
        with pytest.raises(ValueError):
            export(sweeps["unloaded"], tmp_path / "t.xml")


def test_circle_fit_exact():
    t = np.linspace(0, 2 * math.pi, 9)[:-1]
    R = lie.exp_so3([0.3, -0.2, 0.1])
    pts = (R @ np.stack([0.02 * np.cos(t), 0.02 * np.sin(t), np.zeros_like(t)])).T + [0.1, 0.2, 0.3]
    fit = circle_fit(pts)
    assert fit["radius"] == pytest.approx(0.02, rel=1e-12)
    assert np.allclose(fit["center"], [0.1, 0.2, 0.3], atol=1e-14)
    assert fit["max_deviation"] < 1e-14

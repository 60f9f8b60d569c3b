"""Command line front end: ``solve``, ``sweep``, ``metrics`` and ``validate``.

Exit status is 0 on success, 2 when the solver does not converge and 1 for
bad input such as an invalid file or argument.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import scenario
from .errors import CPRError, DescriptionError, NoConvergence, SingularTangent, SweepAborted
from .solver import SolverConfig, initial_guess, solve

EXIT_OK, EXIT_INPUT, EXIT_NO_CONVERGENCE = 0, 1, 2


class _InputError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpr-statics", description="Forward statics of continuum parallel robots.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = p.add_subparsers(dest="command", required=True)

    def robot_arg(sp):
        sp.add_argument("--robot", default=None, help="robot description JSON (default: shipped prototype)")

    def solver_args(sp):
        sp.add_argument("--tol", type=float, default=1e-9, help="residual tolerance (default 1e-9)")
        sp.add_argument("--max-iter", type=int, default=50, help="iteration limit (default 50)")

    s = sub.add_parser("solve", help="one prescribed-angle equilibrium")
    robot_arg(s)
    s.add_argument("--theta", required=True, help="comma-separated motor angles in radians")
    s.add_argument("--loads", default=None, help="loads JSON")
    s.add_argument("--out", default=None, help="output JSON (default: stdout)")
    s.add_argument("--shapes", type=int, default=0, metavar="N", help="stations per element for rod shapes")
    solver_args(s)

    s = sub.add_parser("sweep", help="equilibria along the actuation protocol")
    robot_arg(s)
    s.add_argument("--protocol", default=None, help="protocol JSON (default: built-in sinusoidal protocol)")
    s.add_argument("--loads", default=None, help="loads JSON")
    s.add_argument("--out", default=None, help="output .csv or .json (default: CSV on stdout)")
    s.add_argument("--shapes", type=int, default=0, metavar="N", help="stations per element for rod shapes (JSON output)")
    s.add_argument("--cold", action="store_true", help="solve every sample from the straight initial guess")
    s.add_argument("--workers", type=int, default=1, help="parallel processes for --cold")
    solver_args(s)

    s = sub.add_parser("metrics", help="position errors between two trajectories (mm)")
    s.add_argument("--sim", required=True, help="simulated trajectory (.csv or .json)")
    s.add_argument("--ref", required=True, help="reference trajectory (.csv or .json)")

    s = sub.add_parser("validate", help="schema-check description, loads or protocol files")
    s.add_argument("files", nargs="+")
    return p


def _description(path):
    return scenario.load_prototype() if path is None else scenario.load_description(path)


def _config(args) -> SolverConfig:
    try:
        return SolverConfig(residual_tolerance=args.tol, max_iterations=args.max_iter)
    except ValueError as exc:
        raise _InputError(str(exc)) from None


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _cmd_solve(args) -> int:
    desc = _description(args.robot)
    robot = desc.build()
    try:
        theta = np.array([float(x) for x in args.theta.split(",")])
    except ValueError:
        raise _InputError(f"--theta: expected comma-separated numbers, got {args.theta!r}") from None
    if theta.shape != (len(robot.motors),):
        raise _InputError(f"--theta: robot has {len(robot.motors)} motors, got {theta.size} angles")
    loads = scenario.load_loads(args.loads) if args.loads else None
    if loads is not None:
        loads.check(robot)
    rep = solve(robot, initial_guess(robot, theta), loads, _config(args))
    doc = {
        "format_version": scenario.FORMAT_VERSION,
        "frame": desc.frame,
        "theta": theta.tolist(),
        "ee_pose": rep.final_state.ee_pose.tolist(),
        "residual": rep.residual,
        "iterations": rep.iterations,
        "residual_history": rep.residual_history,
    }
    if args.shapes:
        doc["shapes"] = [s.tolist() for s in scenario.rod_shapes(robot, rep.final_state, args.shapes)]
    _write(json.dumps(doc, indent=1) + "\n", args.out)
    p = rep.final_state.ee_pose[:3, 3]
    print(f"converged in {rep.iterations} iterations, |r| = {rep.residual:.3e}, "
          f"ee = [{p[0]:.6f}, {p[1]:.6f}, {p[2]:.6f}] m", file=sys.stderr)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    desc = _description(args.robot)
    protocol = scenario.load_protocol(args.protocol) if args.protocol else scenario.ActuationProtocol()
    loads = scenario.load_loads(args.loads) if args.loads else None
    if loads is not None:
        loads.check(desc.build())
    if args.workers < 1:
        raise _InputError("--workers must be at least 1")
    if args.shapes < 0:
        raise _InputError("--shapes must be non-negative")
    try:
        record = scenario.run_sweep(desc, protocol, loads, _config(args), shapes=args.shapes,
                                    warm_start=not args.cold, workers=args.workers)
    except SweepAborted as exc:
        if args.out and exc.record.samples:
            scenario.export(exc.record, args.out)
        raise
    if args.out is None:
        sys.stdout.write(scenario.trajectory_csv(record, len(desc.motors)))
    else:
        scenario.export(record, args.out)
    its = [s.iterations for s in record.samples]
    print(f"{len(its)} samples, max {max(its)} iterations, max |r| = {max(s.residual for s in record.samples):.3e}",
          file=sys.stderr)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    m = scenario.compute_error_metrics(scenario.read_positions(args.sim), scenario.read_positions(args.ref))
    for k, e in enumerate(m["errors_mm"]):
        print(f"sample {k}: {e:.6f} mm")
    print(f"mean {m['mean_mm']:.6f} mm, max {m['max_mm']:.6f} mm")
    return EXIT_OK


def _cmd_validate(args) -> int:
    for path in args.files:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DescriptionError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise DescriptionError(f"{path}: expected a JSON object")
        if "rods" in doc:
            scenario.RobotDescription.from_json(doc)
            kind = "robot"
        elif "pulleys" in doc or "wrenches" in doc:
            scenario.loads_from_json(doc)
            kind = "loads"
        else:
            scenario.ActuationProtocol.from_json(doc)
            kind = "protocol"
        print(f"{path}: valid {kind} file")
    return EXIT_OK


_COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "metrics": _cmd_metrics, "validate": _cmd_validate}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (NoConvergence, SingularTangent) as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (DescriptionError, _InputError, CPRError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

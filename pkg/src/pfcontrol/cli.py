"""Command-line front end.

Subcommands: solve, tangent, adjoint, gradcheck, optimize, probe. Every
command takes a JSON config (--config) and writes a JSON report to --output,
or into the directory given by --out, or to stdout. With --out, solve also
writes a per-level time series CSV (and field snapshot rows every
output.snapshot_stride levels), and optimize writes its iteration history
CSV plus the final control. Every output file carries the config digest.
Outputs are deterministic: reruns on the same config are byte-identical,
timing goes to stderr only.

Exit codes: 0 success, 1 solver failure or non-converged optimization,
2 invalid config or usage, 3 a check or probe ran but did not pass.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import dj_along_tangent, solve_adjoint
from .config import RunConfig, load_config
from .control import lq_inner, lq_norm, optimize
from .dynamics import mixture_energy, solve_state, solve_tangent
from .errors import ConfigError, PfcError, ValidationError
from .harness import (
    energy_probe,
    fd_gradient_check,
    frechet_remainder_probe,
    lipschitz_probe,
    lipschitz_refinement_probe,
    separation_probe,
    smooth_direction,
    trajectory_y_norm,
    yosida_convergence_probe,
)

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_SOLVER = 1
_EXIT_CONFIG = 2
_EXIT_CHECK = 3


def _write_json(payload: dict, path: str | Path | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(path: str | Path, digest: str, header: list[str], rows) -> None:
    """CSV with the config digest on a leading comment line; floats go
    through repr so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_digest={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )


def _out_dir(args) -> Path | None:
    out = getattr(args, "out", None)
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _report_path(args, name: str) -> Path | str | None:
    if args.output:
        return args.output
    out = _out_dir(args)
    return out / name if out is not None else None


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec
    u = cfg.initial_control()
    t0 = time.perf_counter()
    traj = solve_state(u, spec)
    _info(f"solve: {spec.tgrid.steps} steps in {time.perf_counter() - t0:.3f}s")
    energies = [mixture_energy(spec.grid, spec.potential, lv) for lv in traj.phi]
    payload = {
        "command": "solve",
        "version": __version__,
        "config_digest": cfg.digest,
        "spec_digest": spec.digest(),
        "times": spec.tgrid.times().tolist(),
        "phase_mean": traj.phase_mean_history().tolist(),
        "energy": energies,
        "theta_norms": [spec.grid.h_norm(lv) for lv in traj.theta],
        "phi_norms": [spec.grid.h_norm(lv) for lv in traj.phi],
        "theta_final": traj.theta[-1].tolist(),
        "phi_final": traj.phi[-1].tolist(),
    }
    _write_json(payload, _report_path(args, "solve_report.json"))
    out = _out_dir(args)
    csv_path = args.csv or (out / "solve_timeseries.csv" if out is not None else None)
    if csv_path:
        times = spec.tgrid.times()
        means = traj.phase_mean_history()
        _write_csv(
            csv_path,
            cfg.digest,
            ["level", "time", "phase_mean", "energy", "theta_h", "phi_h"],
            (
                (
                    k,
                    float(times[k]),
                    float(means[k]),
                    energies[k],
                    payload["theta_norms"][k],
                    payload["phi_norms"][k],
                )
                for k in range(spec.tgrid.steps + 1)
            ),
        )
    if out is not None and cfg.snapshot_stride > 0:
        stride = cfg.snapshot_stride
        levels = sorted(set(range(0, spec.tgrid.steps + 1, stride)) | {spec.tgrid.steps})
        coords = spec.grid.coords()
        axis_names = ["x", "y"][: spec.grid.dim]
        times = spec.tgrid.times()
        _write_csv(
            out / "solve_snapshots.csv",
            cfg.digest,
            ["level", "time", *axis_names, "theta", "phi"],
            (
                (
                    k,
                    float(times[k]),
                    *(float(c) for c in coords[i]),
                    float(traj.theta[k, i]),
                    float(traj.phi[k, i]),
                )
                for k in levels
                for i in range(spec.grid.ncells)
            ),
        )
    return _EXIT_OK


def _cmd_tangent(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec
    u = cfg.initial_control()
    base = solve_state(u, spec)
    h = smooth_direction(spec, np.random.default_rng(args.seed))
    t0 = time.perf_counter()
    tan = solve_tangent(h, base, spec)
    _info(f"tangent: {time.perf_counter() - t0:.3f}s")
    payload = {
        "command": "tangent",
        "version": __version__,
        "config_digest": cfg.digest,
        "seed": args.seed,
        "y_norm": trajectory_y_norm(tan.dtheta, tan.dphi, spec.grid, spec.tgrid),
        "dtheta_norms": [spec.grid.h_norm(lv) for lv in tan.dtheta],
        "dphi_norms": [spec.grid.h_norm(lv) for lv in tan.dphi],
        "max_dphi_mean": float(np.max(np.abs(tan.dphi.sum(axis=1) / spec.grid.ncells))),
    }
    _write_json(payload, _report_path(args, "tangent_report.json"))
    return _EXIT_OK


def _cmd_adjoint(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec
    u = cfg.initial_control()
    state = solve_state(u, spec)
    t0 = time.perf_counter()
    adj = solve_adjoint(state, spec.cost, spec)
    _info(f"adjoint: {time.perf_counter() - t0:.3f}s")
    grad = adj.reduced_gradient()
    h = smooth_direction(spec, np.random.default_rng(args.seed))
    tan = solve_tangent(h, state, spec)
    lhs = lq_inner(grad, h, spec)
    rhs = dj_along_tangent(tan, state, spec.cost)
    gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0e-300)
    payload = {
        "command": "adjoint",
        "version": __version__,
        "config_digest": cfg.digest,
        "seed": args.seed,
        "gradient_lq_norm": lq_norm(grad, spec),
        "gradient_sup_norm": float(np.max(np.abs(grad))),
        "duality_lhs": lhs,
        "duality_rhs": rhs,
        "duality_rel_gap": gap,
    }
    _write_json(payload, _report_path(args, "adjoint_report.json"))
    return _EXIT_OK


def _cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    u = cfg.initial_control()
    report = fd_gradient_check(
        u, cfg.spec, n_directions=args.directions, seed=args.seed, tol=args.tol
    )
    _info(f"gradcheck: {report.runtime:.3f}s, max rel error {report.measured['max_rel_error']:.3e}")
    payload = report.to_json()
    payload["config_digest"] = cfg.digest
    _write_json(payload, _report_path(args, "gradcheck_report.json"))
    return _EXIT_OK if report.passed else _EXIT_CHECK


def _cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec
    u0 = cfg.initial_control()
    t0 = time.perf_counter()
    report = optimize(spec, u0, cfg.optimize)
    _info(
        f"optimize: {report.iterations} iterations, termination {report.termination}, "
        f"{time.perf_counter() - t0:.3f}s"
    )
    payload = {
        "command": "optimize",
        "version": __version__,
        "config_digest": cfg.digest,
        "spec_digest": spec.digest(),
        "iterations": report.iterations,
        "termination": report.termination,
        "j_history": report.j_history,
        "residual_history": report.residual_history,
        "j_final": report.j_final,
        "residual_final": report.residual_final,
        "bang_bang": dataclasses.asdict(report.bang_bang),
        "start_seed": report.start_seed,
        "fd_check": report.fd_check,
    }
    _write_json(payload, _report_path(args, "optimize_report.json"))
    out = _out_dir(args)
    if out is not None:
        # Row k describes iterate k; step/du_norm are the move that produced
        # it, so they are empty on the starting row.
        _write_csv(
            out / "optimize_history.csv",
            cfg.digest,
            ["iteration", "j", "residual", "step", "du_norm"],
            (
                (
                    k,
                    report.j_history[k],
                    report.residual_history[k],
                    report.step_history[k - 1] if k >= 1 else "",
                    report.du_norm_history[k - 1] if k >= 1 else "",
                )
                for k in range(len(report.j_history))
            ),
        )
    control_path = args.control_output or (out / "control.json" if out is not None else None)
    if control_path:
        _write_json(
            {
                "config_digest": cfg.digest,
                "shape": list(report.u_opt.shape),
                "values": report.u_opt.tolist(),
            },
            control_path,
        )
    return _EXIT_OK if report.termination == "stationary" else _EXIT_SOLVER


def _cmd_probe(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec
    if args.name == "gradient":
        report = fd_gradient_check(cfg.initial_control(), spec, seed=args.seed)
    elif args.name == "frechet":
        report = frechet_remainder_probe(cfg.initial_control(), spec, seed=args.seed)
    elif args.name == "lipschitz":
        report = lipschitz_probe(spec, n_pairs=args.samples, seed=args.seed)
    elif args.name == "refinement":
        report = lipschitz_refinement_probe(spec, n_pairs=args.samples, seed=args.seed)
    elif args.name == "yosida":
        report = yosida_convergence_probe(spec, seed=args.seed)
    elif args.name == "energy":
        report = energy_probe(spec, steps=args.steps)
    else:
        report = separation_probe(spec, n_controls=args.samples, seed=args.seed)
    _info(f"probe {report.name}: passed={report.passed}, {report.runtime:.3f}s")
    payload = report.to_json()
    payload["config_digest"] = cfg.digest
    _write_json(payload, _report_path(args, f"probe_{args.name}_report.json"))
    return _EXIT_OK if report.passed else _EXIT_CHECK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfcontrol",
        description="Distributed optimal control of a conserved phase-field system.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--output", default=None, help="JSON report path (default stdout)")
        p.add_argument("--out", default=None, help="output directory for report and data files")

    p = sub.add_parser("solve", help="run the forward solver")
    common(p)
    p.add_argument("--csv", default=None, help="optional per-level CSV table")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("tangent", help="directional state derivative along a seeded direction")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_tangent)

    p = sub.add_parser("adjoint", help="adjoint solve and tangent duality gap")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_adjoint)

    p = sub.add_parser("gradcheck", help="adjoint gradient against the FD oracle")
    common(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--tol", type=float, default=1.0e-6)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("optimize", help="projected-gradient optimization")
    common(p)
    p.add_argument("--control-output", default=None, help="write the final control here")
    p.set_defaults(fn=_cmd_optimize)

    p = sub.add_parser("probe", help="run a verification probe")
    common(p)
    p.add_argument(
        "--name",
        required=True,
        choices=[
            "gradient",
            "frechet",
            "lipschitz",
            "refinement",
            "yosida",
            "energy",
            "separation",
        ],
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=10, help="controls / pairs for sampling probes")
    p.add_argument("--steps", type=int, default=256, help="time steps for the energy probe")
    p.set_defaults(fn=_cmd_probe)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        for line in exc.violations:
            print(f"config error: {line}", file=sys.stderr)
        return _EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except PfcError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return _EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: solve, tabulate, order studies, certificates.

Exit codes: 0 success; 1 usage, parse, or validation errors (including
inadmissible mesh widths); 2 runtime stops (delay hit zero during solve,
or fewer than 3 refinement levels succeeded in an order study); 3
certificate verdict "piecewise monotone only"; 4 certification failed
outright (the solve stopped early, so the path cannot be certified).

Numeric CSV fields print with 8 decimals to match the reference tables;
--precision or the EPCA_PRECISION environment variable override this.
Error columns always print in scientific notation.  JSON output carries
raw floats (lossless round-trip) and a "schema": 1 version marker.

Table rows whose sample time coincides with an impulse carry a trailing
"# note" comment: the stored node is the pre-jump state there, so the
error column shows the jump against a right-continuous reference.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Callable, Optional, Sequence

import numpy as np

from .analysis import (
    convergence_order,
    error_table,
    estimate_constants,
    monotonicity_certificate,
)
from .engine import mesh_index_of, solve
from .expressions import ParseError
from .model import SolverError, TAU_NEGATIVE, Trajectory, ValidationError
from .oracle import integrate_reference
from .problems import BUILTIN_NAMES, builtin, load_problem_file

__all__ = ["main"]

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_PIECEWISE = 3
EXIT_UNCERTIFIED = 4


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_problem(ref: str):
    """Resolve a --problem flag: built-in name, or path to a .prob file.

    Returns (spec, exact_x, exact_tau); the exact solutions are None for
    file-defined problems.
    """
    if ref in BUILTIN_NAMES:
        return builtin(ref)
    if os.path.exists(ref):
        return load_problem_file(ref), None, None
    raise ValidationError(
        f"unknown problem {ref!r}: not a built-in ({', '.join(BUILTIN_NAMES)}) and no such file"
    )


def _precision(args) -> int:
    if args.precision is not None:
        return args.precision
    env = os.environ.get("EPCA_PRECISION")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"EPCA_PRECISION must be an integer, got {env!r}")
    return 8


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")


def _float_list(raw: str, flag: str) -> list[float]:
    if raw.strip() == "":
        return []
    try:
        return [float(part) for part in raw.split(",")]
    except ValueError:
        raise ValidationError(f"{flag} expects a comma-separated list of numbers, got {raw!r}")


def _fmt(value: float, prec: int) -> str:
    return f"{value:.{prec}f}"


def _trajectory_csv(traj: Trajectory, prec: int) -> str:
    dim = traj.dim
    head = ["kind", "j", "t"] + [f"x{i + 1}" for i in range(dim)] + ["tau"]
    lines = [",".join(head)]
    by_cell: dict[int, list] = {}
    for rec in traj.impulses:
        by_cell.setdefault(rec.node_index, []).append(rec)

    def row(kind: str, j, t: float, x, tau) -> str:
        cells = [kind, str(j), _fmt(t, prec)]
        cells += [_fmt(float(v), prec) for v in np.atleast_1d(x)]
        cells.append(_fmt(float(tau), prec))
        return ",".join(cells)

    for j in range(traj.num_nodes):
        t = traj.node_time(j)
        lines.append(row("node", j, t, traj.xs[j], traj.taus[j]))
        for rec in by_cell.get(j, []):
            tau_at = float(traj.taus[j])
            lines.append(row("impulse-left", rec.k, rec.time, rec.x_left, tau_at))
            lines.append(row("impulse-right", rec.k, rec.time, rec.x_right, tau_at))
    if traj.final is not None:
        lines.append(row("final", "", traj.final.t, traj.final.x, traj.final.tau))
    lines.append(f"# status,{traj.status.kind}")
    return "\n".join(lines)


def _trajectory_json(traj: Trajectory) -> str:
    payload = {
        "schema": SCHEMA_VERSION,
        "kind": "trajectory",
        "h": traj.h,
        "status": traj.status.as_dict(),
        "t": [traj.node_time(j) for j in range(traj.num_nodes)],
        "x": traj.xs.tolist(),
        "tau": traj.taus.tolist(),
        "impulses": [
            {
                "k": rec.k,
                "time": rec.time,
                "x_left": rec.x_left.tolist(),
                "x_right": rec.x_right.tolist(),
                "node_index": rec.node_index,
                "at_node": rec.at_node,
            }
            for rec in traj.impulses
        ],
        "final": None
        if traj.final is None
        else {"t": traj.final.t, "x": traj.final.x.tolist(), "tau": traj.final.tau},
    }
    return json.dumps(payload, indent=2)


def cmd_solve(args) -> int:
    spec, _, _ = _load_problem(args.problem)
    traj = solve(spec, args.h, t_end=args.t_end)
    prec = _precision(args)
    if args.format == "csv":
        _emit(_trajectory_csv(traj, prec), args.out)
    else:
        _emit(_trajectory_json(traj), args.out)
    if traj.status.kind == TAU_NEGATIVE:
        print(
            f"delay hit zero at node {traj.status.at_index} "
            f"(t={traj.status.at_time}); partial trajectory written",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    return EXIT_OK


def _oracle_reference(spec) -> tuple[Callable[[float], object], Callable[[float], float]]:
    from .model import min_impulse_gap

    base = min(min_impulse_gap(spec) / 8.0, 1e-3)
    ref = integrate_reference(spec, base)
    return (lambda s: ref.eval_x(s)), (lambda s: ref.eval_tau(s))


def cmd_table(args) -> int:
    spec, exact_x, exact_tau = _load_problem(args.problem)
    hs = _float_list(args.h, "--h")
    times = _float_list(args.times, "--times")
    if not hs:
        raise ValidationError("--h expects at least one mesh width")
    if args.exact_from_oracle or exact_x is None:
        if exact_x is None and not args.exact_from_oracle:
            raise ValidationError(
                f"problem {args.problem!r} has no built-in exact solution; pass --exact-from-oracle"
            )
        exact_x, exact_tau = _oracle_reference(spec)

    offending = [(h, s) for h in hs for s in times if mesh_index_of(s, h) is None]
    if offending:
        pairs = "; ".join(f"h={h}, s={s}" for h, s in offending)
        raise ValidationError(f"sample times must be mesh points: {pairs}")

    prec = _precision(args)
    blocks = []
    for h in hs:
        if not times:
            blocks.append((h, []))
            continue
        traj = solve(spec, h, t_end=min(max(times), spec.horizon))
        blocks.append((h, error_table(traj, exact_x, exact_tau, times)))

    # a sample time sitting exactly on an impulse compares the stored node
    # (pre-jump by convention) against a right-continuous reference, so the
    # error column shows the jump itself; flag such rows rather than let
    # the number pass for discretization error
    on_impulse = sorted(
        {s for s in times for ev in spec.impulses
         if math.isclose(s, ev.time, rel_tol=1e-12, abs_tol=1e-12)}
    )

    if args.format == "csv":
        lines = ["h,s,i,x_h,tau_h,e_x,e_tau"]
        for h, rows in blocks:
            for r in rows:
                xs = "|".join(_fmt(float(v), prec) for v in np.atleast_1d(r.x_h))
                lines.append(
                    f"{h},{_fmt(r.s, prec)},{r.i},{xs},{_fmt(r.tau_h, prec)},{r.e_x:.3e},{r.e_tau:.3e}"
                )
        for s in on_impulse:
            lines.append(f"# note,s={_fmt(s, prec)} is an impulse time; x_h is the pre-jump node value")
        _emit("\n".join(lines), args.out)
    else:
        payload = {
            "schema": SCHEMA_VERSION,
            "kind": "error_table",
            "problem": args.problem,
            "samples_on_impulses": on_impulse,
            "blocks": [
                {
                    "h": h,
                    "rows": [
                        {
                            "s": r.s,
                            "i": r.i,
                            "x_h": np.atleast_1d(r.x_h).tolist(),
                            "tau_h": r.tau_h,
                            "e_x": r.e_x,
                            "e_tau": r.e_tau,
                        }
                        for r in rows
                    ],
                }
                for h, rows in blocks
            ],
        }
        _emit(json.dumps(payload, indent=2), args.out)
    return EXIT_OK


def cmd_order(args) -> int:
    if args.levels < 3:
        raise ValidationError("--levels must be at least 3")
    spec, exact_x, exact_tau = _load_problem(args.problem)
    times = _float_list(args.times, "--times")
    if not times:
        raise ValidationError("--times expects at least one sample time")
    if args.exact_from_oracle or exact_x is None:
        if exact_x is None and not args.exact_from_oracle:
            raise ValidationError(
                f"problem {args.problem!r} has no built-in exact solution; pass --exact-from-oracle"
            )
        exact_x, exact_tau = _oracle_reference(spec)
    h_levels = [args.h_base / args.factor**i for i in range(args.levels)]
    est = convergence_order(spec, exact_x, exact_tau, h_levels, times, component=args.component)
    payload = {
        "schema": SCHEMA_VERSION,
        "kind": "order_estimate",
        "problem": args.problem,
        "component": args.component,
        "pairs": [[h, e] for h, e in est.pairs],
        "ratios": list(est.ratios),
        "fitted_order": None if math.isnan(est.fitted_order) else est.fitted_order,
        "floor_limited": est.floor_limited,
        "failures": [[h, msg] for h, msg in est.failures],
    }
    _emit(json.dumps(payload, indent=2), args.out)
    if est.levels_succeeded < 3:
        print(
            f"only {est.levels_succeeded} of {args.levels} levels succeeded; "
            "order estimate unreliable",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_certify(args) -> int:
    spec, _, _ = _load_problem(args.problem)
    traj = solve(spec, args.h)
    report = None
    if traj.num_nodes > 0:
        report = monotonicity_certificate(traj, spec)
    constants = estimate_constants(spec)
    payload = {
        "schema": SCHEMA_VERSION,
        "kind": "certificate",
        "problem": args.problem,
        "h": args.h,
        "solve_status": traj.status.as_dict(),
        "monotonicity": None if report is None else report.as_dict(),
        "constants": {
            "h0": constants.h0,
            "M1": constants.M1,
            "M2": constants.M2,
            "M3": constants.M3,
            "alpha": constants.alpha,
            "h_star": constants.h_star,
            "a0_min": constants.a0_min,
            "method": dict(constants.method),
            "grid_resolution": constants.grid_resolution,
            "caveats": list(constants.caveats),
        },
    }
    _emit(json.dumps(payload, indent=2), args.out)
    if not traj.status.ok or report is None:
        print("solve stopped early; the path cannot be certified", file=sys.stderr)
        return EXIT_UNCERTIFIED
    if report.strictly_increasing:
        return EXIT_OK
    return EXIT_PIECEWISE


def _build_parser() -> _Parser:
    parser = _Parser(prog="epcadde", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--precision",
        type=int,
        default=None,
        help="decimals for CSV values (default 8, env EPCA_PRECISION)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="integrate a problem on a uniform mesh", parents=[common])
    p_solve.add_argument("--problem", required=True, help="built-in name or .prob file path")
    p_solve.add_argument("--h", type=float, required=True, help="mesh width")
    p_solve.add_argument("--t-end", type=float, default=None, dest="t_end", help="stop time (default: the horizon)")
    p_solve.add_argument("--out", default=None, help="output path (default: stdout)")
    p_solve.add_argument("--format", choices=("csv", "json"), default="csv")
    p_solve.set_defaults(run=cmd_solve)

    p_table = sub.add_parser("table", help="error table against the exact solution", parents=[common])
    p_table.add_argument("--problem", required=True)
    p_table.add_argument("--h", required=True, help="comma-separated mesh widths")
    p_table.add_argument("--times", required=True, help="comma-separated sample times")
    p_table.add_argument("--exact-from-oracle", action="store_true", help="reference by dense integration instead of a built-in closed form")
    p_table.add_argument("--out", default=None)
    p_table.add_argument("--format", choices=("csv", "json"), default="csv")
    p_table.set_defaults(run=cmd_table)

    p_order = sub.add_parser("order", help="fit the convergence order over mesh refinements", parents=[common])
    p_order.add_argument("--problem", required=True)
    p_order.add_argument("--h-base", type=float, required=True, dest="h_base", help="coarsest mesh width")
    p_order.add_argument("--levels", type=int, required=True, help="number of refinements (>= 3)")
    p_order.add_argument("--times", required=True, help="comma-separated sample times")
    p_order.add_argument("--factor", type=float, default=10.0, help="refinement factor between levels (default 10)")
    p_order.add_argument("--component", choices=("x", "tau", "both"), default="x")
    p_order.add_argument("--exact-from-oracle", action="store_true")
    p_order.add_argument("--out", default=None)
    p_order.set_defaults(run=cmd_order)

    p_cert = sub.add_parser("certify", help="monotonicity certificate and a-priori constants", parents=[common])
    p_cert.add_argument("--problem", required=True)
    p_cert.add_argument("--h", type=float, required=True)
    p_cert.add_argument("--out", default=None)
    p_cert.set_defaults(run=cmd_certify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.run(args)
    except (SolverError, ParseError) as err:
        print(f"epcadde: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 failed property check (``verify``), 2 invalid input,
3 numerical failure (partial output is still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .discontinuity import DEFAULT_NU_SCHEDULE, jump, regularization_limit
from .errors import NumericalError, QFIError
from .families import BUILTINS, builtin_family, evaluate_bundle
from .scenario import columns, evaluate_scenario, format_value, json_value, load_scenario
from .verify import run_properties

EXIT_OK, EXIT_PROPERTY, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _matrix(m) -> list:
    return [[json_value(x) for x in row] for row in np.atleast_2d(np.asarray(m, dtype=float))]


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def write_records(records, cols, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            w.writerow([format_value(rec[c]) for c in cols])
        return buf.getvalue()
    rows = [{c: json_value(rec[c]) for c in cols} for rec in records]
    return json.dumps({"columns": cols, "rows": rows}, indent=1) + "\n"


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    records = evaluate_scenario(sc, threads=args.threads)
    _emit(write_records(records, columns(sc), args.format), args.out)
    failed = sum(rec["status"] != "ok" for rec in records)
    if failed:
        print(f"{failed} of {len(records)} points failed numerically; rows are flagged",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_jump(args) -> int:
    fam = builtin_family(args.family)
    b = evaluate_bundle(fam, args.at)
    rep = jump(b, args.dir, fam=fam if args.confirm else None)
    doc = {
        "family": fam.name,
        "point": [json_value(x) for x in rep.point],
        "direction": [json_value(x) for x in rep.direction],
        "rank": b.spectrum.rank,
        "delta": _matrix(rep.delta.values),
        "contributing_branches": [[k, json_value(c)] for k, c in rep.contributing_branches],
        "excluded_branches": [[k, json_value(c)] for k, c in rep.excluded_branches],
        "coupled_delta": _matrix(rep.coupled_delta),
    }
    if rep.numeric_confirmation is not None:
        conf = rep.numeric_confirmation
        doc["numeric_confirmation"] = {
            "limit": _matrix(conf.limit.values),
            "residual": json_value(conf.residual),
            "coupled_residual": json_value(conf.coupled_residual),
            "relative_change": json_value(conf.relative_change),
            "steps": [json_value(h) for h in conf.steps],
        }
    _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_regularize(args) -> int:
    fam = builtin_family(args.family)
    tr = regularization_limit(fam, args.at, None, args.schedule)
    doc = {
        "family": fam.name,
        "point": [json_value(x) for x in np.atleast_1d(args.at)],
        "rho0": tr.rho0_description,
        "nu_schedule": [json_value(v) for v in tr.nu_schedule],
        "qfi_values": [_matrix(v.values) for v in tr.qfi_values],
        "min_eigenvalues": [json_value(v) for v in tr.min_eigenvalues],
        "extrapolated_limit": _matrix(tr.extrapolated_limit.values),
        "qfi_at_point": _matrix(tr.qfi_at_point.values),
        "hessian_sum": _matrix(tr.hessian_sum.values),
        "limit_plus_twice_hessian_sum": _matrix(tr.reconstructed_hc),
        "continuous_qfi_at_point": _matrix(tr.continuous_qfi_at_point.values),
        "relative_change": json_value(tr.relative_change),
    }
    _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_properties(args.seed, args.trials)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def cmd_list(args) -> int:
    for name in sorted(BUILTINS):
        fam = BUILTINS[name]()
        print(f"{name}\tparams={fam.n_params}\tdim={fam.dim}\t{fam.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="buresqfi",
                                 description="Quantum Fisher information and Bures metric "
                                             "at rank-change points")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evaluate a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("jump", help="directional jump of the continuous QFI at a point")
    p.add_argument("family", help="builtin name, optionally with arguments: 'random-full-rank(3,7)'")
    p.add_argument("--at", type=_floats, required=True, help="point, e.g. --at=0,0")
    p.add_argument("--dir", type=_floats, required=True, help="direction, e.g. --dir=0,1")
    p.add_argument("--confirm", action="store_true", help="also extrapolate H_c along the direction")
    p.add_argument("--out")
    p.set_defaults(func=cmd_jump)

    p = sub.add_parser("regularize", help="regularization trace toward a point")
    p.add_argument("family")
    p.add_argument("--at", type=_floats, required=True)
    p.add_argument("--schedule", type=_floats, default=list(DEFAULT_NU_SCHEDULE))
    p.add_argument("--out")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("verify", help="run the seeded property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("list-families", help="list builtin families")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QFIError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

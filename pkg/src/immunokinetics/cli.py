"""Command-line entry point: ``immunokinetics {simulate,compare,equilibria,check-operator}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 I/O
error, 4 identity violated.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .compare import PAIRS, run_comparison
from .equilibria import equilibrium_report
from .errors import ConfigError, ImmunokineticsError
from .model import ImmunityGrid
from .operator_check import check_operator
from .scenario import MODELS, PDE_MODELS, load_scenario, run_model

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO, EXIT_IDENTITY = range(5)
SLOPE_BAND = (0.9, 1.1)
OPERATOR_CELLS = 64


def _fmt(x) -> str:
    return "%.17g" % x


def write_atomic(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, columns) -> str:
    """Columns may be None (written as empty fields)."""
    n = next(len(c) for c in columns if c is not None)
    cols = [[""] * n if c is None else [_fmt(v) for v in np.asarray(c, dtype=float)] for c in columns]
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in zip(*cols))
    return "\n".join(lines) + "\n"


def density_text(traj) -> str:
    z = [_fmt(v) for v in traj.grid.centers]
    lines = ["t,z,r"]
    for t, r in zip(traj.t, traj.r):
        ts = _fmt(t)
        lines.extend(f"{ts},{zi},{_fmt(ri)}" for zi, ri in zip(z, r))
    return "\n".join(lines) + "\n"


def _apply_overrides(scn, args):
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_end is not None:
        if not args.t_end > 0:
            raise ConfigError("--t-end must be > 0")
        changes["t_end"] = args.t_end
    if args.grid_cells is not None:
        if args.grid_cells < 1:
            raise ConfigError("--grid-cells must be a positive integer")
        if args.model in PDE_MODELS:
            changes["n_cells"] = args.grid_cells
        else:
            print(f"warning: --grid-cells is ignored for model {args.model}", file=sys.stderr)
    return replace(scn, **changes)


def cmd_simulate(args) -> int:
    scn = _apply_overrides(load_scenario(args.config), args)
    run = run_model(scn, args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "timeseries.csv", csv_text(
        ("t", "S", "I", "R", "N", "Lambda", "B"), [run.t, run.S, run.I, run.R, run.N, run.Lambda, run.B]))
    if run.trajectory is not None:
        write_atomic(out / "density.csv", density_text(run.trajectory))
    print(f"{args.model}: {len(run.t)} samples to t={run.t[-1]:g}, written to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scn = load_scenario(args.config)
    result = run_comparison(scn, args.pair)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "comparison.csv", csv_text(result.header, result.columns))
    write_atomic(out / "report.txt", result.report())
    sys.stdout.write(result.report())
    if not result.passed:
        t, v = result.witness
        print(f"identity violated: worst at t={t:.17g} value={v:.6e}", file=sys.stderr)
        return EXIT_IDENTITY
    return EXIT_OK


def cmd_equilibria(args) -> int:
    scn = load_scenario(args.config)
    pairs = equilibrium_report(scn.params, scn.birth).as_pairs()
    width = max(len(k) for k, _ in pairs)
    for k, v in pairs:
        shown = v if isinstance(v, str) else f"{v:.10g}"
        print(f"{k.ljust(width)}  {shown}")
    print()
    for k, v in pairs:
        print(f"{k}={v if isinstance(v, str) else f'{v:.10g}'}")
    return EXIT_OK


def cmd_check_operator(args) -> int:
    scn = load_scenario(args.config)
    grid = ImmunityGrid.uniform(scn.params.z_min, scn.params.z_max, OPERATOR_CELLS)
    res = check_operator(scn.params, scn.birth, scn.kernel, grid, seed=args.seed)
    lo, hi = SLOPE_BAND
    for i, s in enumerate(res.slopes):
        print(f"pair {i:2d}  slope={s:.6f}")
    print(f"slope_min={res.slopes.min():.6f}")
    print(f"slope_max={res.slopes.max():.6f}")
    print(f"linearity_error={res.linearity_error:.3e}")
    ok = bool(np.all((res.slopes >= lo) & (res.slopes <= hi)))
    print(f"result={'pass' if ok else 'fail'}")
    return EXIT_OK if ok else EXIT_IDENTITY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="immunokinetics", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one model and write CSV output")
    sim.add_argument("--config", required=True, type=Path)
    sim.add_argument("--model", required=True, choices=MODELS)
    sim.add_argument("--out", required=True, type=Path)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--grid-cells", type=int)
    sim.add_argument("--t-end", type=float)
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="check a cross-model identity")
    cmp_.add_argument("--config", required=True, type=Path)
    cmp_.add_argument("--pair", required=True, choices=PAIRS)
    cmp_.add_argument("--out", required=True, type=Path)
    cmp_.set_defaults(func=cmd_compare)

    eq = sub.add_parser("equilibria", help="print the disease-free equilibrium report")
    eq.add_argument("--config", required=True, type=Path)
    eq.set_defaults(func=cmd_equilibria)

    op = sub.add_parser("check-operator", help="finite-difference test of the derivative of Q")
    op.add_argument("--config", required=True, type=Path)
    op.add_argument("--seed", type=int, default=0)
    op.set_defaults(func=cmd_check_operator)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ImmunokineticsError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: sweeps, detector fields, and oracle checks.

Every artifact-writing command drops a manifest.json holding the resolved
inputs, package versions, seed, and wall time, so a run can be reproduced
from the manifest alone.  Exit codes: 0 success, 2 validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .kernels import active_backend
from .model import (
    ValidationError,
    canonical_name,
    load_model,
    model_to_dict,
    named_configuration,
)
from .operator_algebra import DimensionCapError, algebra_selftest
from .oracle import exact_ground
from .phase_diagram import (
    bures_ridge,
    casimir_field,
    derivative_fields,
    export_grid,
    extract_separatrix,
    scan_ground,
    write_field_csv,
    write_separatrix_dat,
    write_summary_json,
)
from .two_level import e_min, e_min_derivatives
from .variational import minimize_ground

_TWO_LEVEL_PLOT = """\
# plot the two-level minimum energy; run: gnuplot -p plot_two_level.gp
set datafile separator ','
set xlabel 'x'
set ylabel 'E_min'
plot 'two_level.csv' skip 1 using 1:2 with lines lw 2 notitle
"""


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"range {text!r} must be lo:hi:step")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0.0 or hi < lo:
        raise ValidationError(f"range {text!r} must ascend with positive step")
    return np.arange(lo, hi + 0.5 * step, step)


def _parse_window(text: str) -> tuple[float, float, float, float]:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValidationError(f"window {text!r} must be a0:a1:b0:b1")
    return tuple(float(p) for p in parts)


def _parse_x(text: str | None):
    if text is None:
        return None
    vals = tuple(float(p) for p in text.split(","))
    return vals[0] if len(vals) == 1 else vals


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ValidationError("threads must be a positive integer")
    try:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def _is_path(config: str) -> bool:
    return os.sep in config or config.endswith(".json")


def _named_or_file(config: str) -> str | None:
    """The canonical configuration name, or None for a model file path."""
    if _is_path(config):
        return None
    try:
        return canonical_name(config)
    except ValidationError:
        if os.path.exists(config):
            return None
        raise


def _resolve_point_spec(args):
    """Model at one strength point for the oracle command."""
    name = _named_or_file(args.config)
    x = _parse_x(args.x)
    if name is None:
        spec = load_model(args.config)
        if args.grow is not None or args.omega2 is not None:
            raise ValidationError(
                "grow and omega2 apply to named configurations only"
            )
        return spec.with_x(list(np.atleast_1d(x))) if x is not None else spec
    return named_configuration(
        name, omega2=args.omega2, g=args.grow, x=x
    )


def _versions() -> dict:
    import scipy
    import skimage

    return {
        "ddphase": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-image": skimage.__version__,
    }


def _write_manifest(outdir, command, inputs, artifacts, wall, extra=None):
    payload = {
        "command": command,
        "inputs": inputs,
        "versions": _versions(),
        "backend": active_backend(),
        "artifacts": sorted(artifacts),
        "wall_time_s": wall,
    }
    if extra:
        payload.update(extra)
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _scan_from_args(args):
    name = _named_or_file(args.config)
    window = _parse_window(args.window)
    shape = (args.grid, args.grid)
    if name is None:
        spec = load_model(args.config)
        if args.grow is not None or args.omega2 is not None:
            raise ValidationError(
                "grow and omega2 apply to named configurations only"
            )
        return scan_ground(
            spec, window=window, shape=shape, seed=args.seed
        )
    return scan_ground(
        name,
        args.grow,
        omega2=args.omega2,
        window=window,
        shape=shape,
        seed=args.seed,
    )


def _grid_inputs(args, grid) -> dict:
    return {
        "config": args.config,
        "grow": args.grow,
        "omega2": args.omega2,
        "grid": args.grid,
        "window": args.window,
        "seed": args.seed,
        "threads": args.threads,
        "model": model_to_dict(grid.spec),
    }


def _finish_grid(args, grid, artifacts, inputs, t0, extra=None) -> int:
    counts = {
        "normal_cells": int(np.sum(grid.normal_mask)),
        "unconverged_cells": int(np.sum(~grid.converged)),
        "degenerate_cells": int(np.sum(grid.degenerate)),
    }
    if extra:
        counts.update(extra)
    _write_manifest(
        args.out, args.command, inputs, artifacts + ["manifest.json"],
        time.monotonic() - t0, counts,
    )
    if counts["unconverged_cells"]:
        print(
            f"numeric failure: {counts['unconverged_cells']} grid nodes "
            "did not converge",
            file=sys.stderr,
        )
        return 3
    return 0


def cmd_two_level(args) -> int:
    t0 = time.monotonic()
    xs = _parse_range(args.x)
    y = 1.0 + args.g
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "two_level.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,e_min,de,d2e\n")
        for x in xs:
            e = e_min(float(x), y)
            de, d2e = e_min_derivatives(float(x), y)
            fh.write(f"{_fmt(x)},{_fmt(e)},{_fmt(de)},{_fmt(d2e)}\n")
    with open(
        os.path.join(args.out, "plot_two_level.gp"), "w", encoding="utf-8"
    ) as fh:
        fh.write(_TWO_LEVEL_PLOT)
    inputs = {"g": args.g, "x": args.x, "seed": args.seed}
    _write_manifest(
        args.out, "two-level", inputs,
        ["two_level.csv", "plot_two_level.gp", "manifest.json"],
        time.monotonic() - t0,
    )
    return 0


def cmd_scan(args) -> int:
    t0 = time.monotonic()
    _apply_threads(args.threads)
    grid = _scan_from_args(args)
    derivative_fields(grid)
    if len(grid.pairs) == 2:
        casimir_field(grid, n_atoms=args.casimir_na)
        bures_ridge(grid, args.na, eps=args.eps)
    curves = extract_separatrix(grid)
    artifacts = export_grid(grid, curves, args.out)
    return _finish_grid(args, grid, artifacts, _grid_inputs_full(args, grid), t0)


def _grid_inputs_full(args, grid) -> dict:
    inputs = _grid_inputs(args, grid)
    inputs["na"] = getattr(args, "na", None)
    inputs["casimir_na"] = getattr(args, "casimir_na", None)
    inputs["eps"] = getattr(args, "eps", None)
    return inputs


def cmd_separatrix(args) -> int:
    t0 = time.monotonic()
    _apply_threads(args.threads)
    grid = _scan_from_args(args)
    curves = extract_separatrix(grid)
    os.makedirs(args.out, exist_ok=True)
    write_summary_json(grid, curves, os.path.join(args.out, "separatrix.json"))
    write_separatrix_dat(curves, os.path.join(args.out, "separatrix.dat"))
    artifacts = ["separatrix.json", "separatrix.dat"]
    return _finish_grid(
        args, grid, artifacts, _grid_inputs(args, grid), t0,
        {"curves": len(curves)},
    )


def cmd_bures(args) -> int:
    t0 = time.monotonic()
    _apply_threads(args.threads)
    grid = _scan_from_args(args)
    ridge = bures_ridge(grid, args.na, eps=args.eps)
    os.makedirs(args.out, exist_ok=True)
    write_field_csv(grid, "bures", os.path.join(args.out, "bures.csv"))
    inputs = _grid_inputs(args, grid)
    inputs["na"] = args.na
    inputs["eps"] = args.eps
    return _finish_grid(
        args, grid, ["bures.csv"], inputs, t0,
        {"bures_max": float(ridge.max())},
    )


def cmd_casimir(args) -> int:
    t0 = time.monotonic()
    _apply_threads(args.threads)
    grid = _scan_from_args(args)
    casimir_field(grid, n_atoms=args.casimir_na)
    os.makedirs(args.out, exist_ok=True)
    write_field_csv(grid, "dc", os.path.join(args.out, "dc.csv"))
    inputs = _grid_inputs(args, grid)
    inputs["casimir_na"] = args.casimir_na
    return _finish_grid(args, grid, ["dc.csv"], inputs, t0)


def cmd_oracle(args) -> int:
    spec = _resolve_point_spec(args)
    sol = minimize_ground(spec, seed=args.seed)
    e_exact, report = exact_ground(spec, args.na)
    gap = sol.energy - e_exact
    verdict = {
        "E_var": sol.energy,
        "E_exact": e_exact,
        "gap": gap,
        "cutoffs": list(report.cutoffs),
        "converged": bool(report.converged and sol.converged),
        "dim": report.dim,
        "method": report.method,
    }
    print(json.dumps(verdict, indent=2, sort_keys=True))
    if gap < -1e-8 or not verdict["converged"]:
        return 3
    return 0


def cmd_selftest(args) -> int:
    report = algebra_selftest()
    cases = {
        f"n={n},n_atoms={na}": {k: float(v) for k, v in errs.items()}
        for (n, na), errs in report["cases"].items()
    }
    print(
        json.dumps(
            {"tol": report["tol"], "passed": report["passed"], "cases": cases},
            indent=2,
            sort_keys=True,
        )
    )
    return 0 if report["passed"] else 3


def _add_grid_flags(p: argparse.ArgumentParser, na_default: int | None):
    p.add_argument("--config", required=True,
                   help="configuration name or model file path")
    p.add_argument("--grow", default=None,
                   help="strength row label, g1..g3 or g-1..g-3")
    p.add_argument("--omega2", type=float, default=None,
                   help="middle level energy override")
    p.add_argument("--grid", type=int, default=201,
                   help="nodes per axis")
    p.add_argument("--window", default="0:3:0:3",
                   help="strength window a0:a1:b0:b1")
    if na_default is not None:
        p.add_argument("--na", type=int, default=na_default,
                       help="atom number for the Bures detector")
        p.add_argument("--eps", type=float, default=None,
                       help="re-minimised strength offset for the ridge")
    p.add_argument("--out", default="ddphase_out", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="multistart seed")
    p.add_argument("--threads", type=int, default=None,
                   help="kernel thread count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddphase",
        description=__doc__.split("\n", 1)[0],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("two-level", help="closed-form pair sweep CSV")
    p.add_argument("--g", type=float, default=0.0,
                   help="total pair interaction strength")
    p.add_argument("--x", default="0:3:0.001", help="sweep range lo:hi:step")
    p.add_argument("--out", default="ddphase_out", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="unused, recorded")
    p.set_defaults(func=cmd_two_level)

    p = sub.add_parser("scan", help="full grid scan with every detector")
    _add_grid_flags(p, na_default=5000)
    p.add_argument("--casimir-na", type=int, default=2, dest="casimir_na",
                   help="atom number for the Casimir difference")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("separatrix", help="transition lines and orders only")
    _add_grid_flags(p, na_default=None)
    p.set_defaults(func=cmd_separatrix)

    p = sub.add_parser("bures", help="maximum Bures distance field")
    _add_grid_flags(p, na_default=5000)
    p.set_defaults(func=cmd_bures)

    p = sub.add_parser("casimir", help="signed Casimir difference field")
    _add_grid_flags(p, na_default=None)
    p.add_argument("--casimir-na", type=int, default=2, dest="casimir_na",
                   help="atom number for the Casimir difference")
    p.set_defaults(func=cmd_casimir)

    p = sub.add_parser("oracle", help="variational vs exact ground energy")
    p.add_argument("--config", required=True,
                   help="configuration name or model file path")
    p.add_argument("--grow", default=None, help="strength row label")
    p.add_argument("--omega2", type=float, default=None)
    p.add_argument("--x", default=None,
                   help="strength point, comma-separated per transition")
    p.add_argument("--na", type=int, default=2, help="atom number")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("selftest", help="operator algebra identity checks")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DimensionCapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

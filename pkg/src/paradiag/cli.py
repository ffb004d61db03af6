"""Command-line driver: ``paradiag {solve,spectrum,sweep,validate}``.

Settings come from (lowest to highest priority) built-in defaults, an
optional ``key=value`` file given with ``--config``, and command-line flags.

Exit codes: 0 success, 1 validation failure or bad input, 2 a solve or
sweep cell did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import fields

import numpy as np

from .experiments import (
    SOLVE_COLUMNS,
    SPECTRUM_COLUMNS,
    RunConfig,
    SweepSpec,
    _fmt,
    run_solve,
    run_spectrum,
    run_sweep,
)
from .validate import run_validate

EXIT_OK, EXIT_FAIL, EXIT_NOT_CONVERGED = 0, 1, 2

# flag dest -> RunConfig field
_FIELD_OF = {
    "objective": "objective",
    "equation": "equation",
    "m": "m",
    "L": "L",
    "T_ref": "T_ref",
    "T": "T",
    "gamma": "gamma",
    "d": "d",
    "alpha": "alpha",
    "tol": "rel_tol",
    "max_iter": "max_iter",
    "scale_mode": "scale_mode",
    "out": "out",
    "jobs": "workers",
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_alpha(text):
    return complex(text.replace(" ", "").replace("i", "j"))


def _convert(field, raw):
    if field == "alpha":
        return _parse_alpha(raw)
    kind = _TYPES[field]
    if "int" in str(kind):
        return int(raw)
    if "float" in str(kind):
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Keys as the long flags."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in _FIELD_OF:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[_FIELD_OF[key]] = _convert(_FIELD_OF[key], value)
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--objective", choices=("tracking", "terminal"))
    p.add_argument("--equation", choices=("diffusion1d", "diffusion2d", "advdiff2d"))
    p.add_argument("--m", type=int, help="grid points per side (cells for diffusion1d)")
    p.add_argument("--L", type=int, help="number of time steps")
    p.add_argument("--T-ref", dest="T_ref", type=float, help="reference horizon")
    p.add_argument("--T", dest="T", type=float, help="explicit horizon (overrides T-ref for solve/spectrum)")
    p.add_argument("--gamma", type=float)
    p.add_argument("--d", type=float, help="diffusion coefficient (advdiff2d)")
    p.add_argument("--alpha", type=_parse_alpha, help="alpha-circulant parameter, e.g. -1 or 1e-4")
    p.add_argument("--tol", type=float, help="GMRES relative tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--scale-mode", dest="scale_mode", choices=("horizon", "timestep"))
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--jobs", type=int, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paradiag", description="ParaDiag optimal-control solver and experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="single all-at-once solve")
    _common(s)
    s = sub.add_parser("spectrum", help="analytic preconditioned spectrum per spatial mode")
    _common(s)
    s.add_argument("--sigmas", help="comma-separated spatial eigenvalues (needed for non-self-adjoint K)")
    s = sub.add_parser("sweep", help="iteration-count table over L and one parameter")
    _common(s)
    s.add_argument("--L-values", dest="L_values", default="30,100,300")
    s.add_argument("--column", default="T_ref", choices=("T_ref", "T", "gamma", "d"))
    s.add_argument("--values", default=None, help="comma-separated column values (default: base value)")
    s.add_argument("--allow-large", action="store_true", help="permit L above the desk-scale cap")
    sub.add_parser("validate", help="run the oracle/property battery")
    return parser


def config_from_args(args) -> RunConfig:
    settings = read_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, field in _FIELD_OF.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[field] = value
    return RunConfig(**settings)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _write(rows, columns, out, header=None):
    buf = io.StringIO()
    if header:
        buf.write(header + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    text = buf.getvalue()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    rec = run_solve(cfg, keep_solution=False)
    row = rec.row()
    _write([[row[c] for c in SOLVE_COLUMNS]], SOLVE_COLUMNS, cfg.out)
    return EXIT_OK if rec.converged else EXIT_NOT_CONVERGED


def cmd_spectrum(args) -> int:
    cfg = config_from_args(args)
    sigmas = None if args.sigmas is None else np.array(_floats(args.sigmas))
    _, rows = run_spectrum(cfg, sigmas)
    _write(rows, SPECTRUM_COLUMNS, cfg.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    column = "T_ref" if args.column == "T" else args.column
    values = _floats(args.values) if args.values else (getattr(cfg, column),)
    Ls = tuple(int(x) for x in args.L_values.split(","))
    spec = SweepSpec(cfg, Ls, column, values, args.allow_large)
    header, columns, rows, _ = run_sweep(spec, workers=cfg.workers)
    _write(rows, columns, cfg.out, header)
    return EXIT_OK if all(r[-1] == "true" for r in rows) else EXIT_NOT_CONVERGED


def cmd_validate(args) -> int:
    results = run_validate()
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"solve": cmd_solve, "spectrum": cmd_spectrum, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"paradiag {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

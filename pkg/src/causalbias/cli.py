"""Command line interface: ``causalbias audit | sweep | simulate | selftest``.

Exit codes: 0 success, 1 oracle disagreement or selftest failure, 2 parse or
input error, 3 structural mismatch, 4 positivity or collinearity.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .errors import CausalBiasError, InputError

SEED_ENV = "CAUSALBIAS_SEED"


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the parse-error code, like malformed inputs."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return float(text)
    except ValueError:
        raise InputError(f"parameter value {text!r} is not a number") from None


def _parse_params(items) -> dict:
    params = {}
    for item in items or ():
        for part in item.split(","):
            key, sep, value = part.partition("=")
            if not sep or not key.strip():
                raise InputError(f"expected key=value, got {part!r}")
            params[key.strip()] = _parse_value(value.strip())
    return params


def _parse_pair(text: str | None):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise InputError("--error-mech expects 'P(t1|z0),P(t0|z1)'")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise InputError(f"--error-mech values must be numbers: {text!r}") from None


def _parse_map(items) -> dict:
    out = {}
    for item in items or ():
        for part in item.split(","):
            src, sep, dst = part.partition("=")
            if not sep:
                raise InputError(f"--map expects column=node, got {part!r}")
            out[src.strip()] = dst.strip()
    return out


def parse_axes(text: str) -> dict:
    """``"beta=-1:1:0.1,gamma=-1:1:0.1"`` to ``{"beta": (-1, 1, 0.1), ...}``."""
    axes = {}
    for part in text.split(","):
        name, sep, rng = part.partition("=")
        bits = rng.split(":")
        if not sep or len(bits) != 3:
            raise InputError(f"axis must look like name=start:stop:step, got {part!r}")
        try:
            axes[name.strip()] = tuple(float(b) for b in bits)
        except ValueError:
            raise InputError(f"non-numeric axis bounds in {part!r}") from None
    return axes


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


# -- subcommands ---------------------------------------------------------------


def cmd_audit(args) -> int:
    from .audit import AuditConfig, dump_report, run_audit
    from .scm import ScmSpec

    seed = args.seed if args.seed is not None else _default_seed()
    scm = None
    if args.scm:
        scm = ScmSpec(args.scm, _parse_params(args.param), args.n, seed)
    elif args.data is None:
        raise InputError("audit needs --data or --scm")
    biases = "auto" if args.bias == "auto" else [b.strip() for b in args.bias.split(",")]
    config = AuditConfig(
        data=args.data,
        scm=scm,
        graph=args.graph,
        sensitive=[s.strip() for s in args.sensitive.split(",")] if args.sensitive else (),
        outcome=args.outcome,
        biases=biases,
        adjust=args.adjust,
        error_mech=_parse_pair(args.error_mech),
        column_map=_parse_map(args.map),
        exact_tol=args.exact_tol,
        mc_sigma=args.mc_sigma,
        timestamp=args.timestamp,
    )
    report = run_audit(config)
    _write(dump_report(report), args.out)
    for e in report["biases"]:
        if e["agrees"] is False:
            print(f"oracle disagreement for {e['label']}: |{e['closed_form_value']} - {e['oracle_value']}| "
                  f"> {e['tolerance']:.3g}", file=sys.stderr)
    return 0 if report["ok"] else 1


def cmd_sweep(args) -> int:
    from .scm import axis_values, format_float, sweep, sweep_slices

    axes = parse_axes(args.axes)
    grid = sweep(args.bias, axes, hold=args.hold, standardized=args.std, threads=args.threads)
    for coords, msg in grid.singular:
        where = " ".join(f"{k}={format_float(v)}" for k, v in coords.items())
        print(f"singular cell {where}: {msg}", file=sys.stderr)
    text = grid.to_csv()
    _write(text, args.out)
    if args.out and args.out != "-" and not args.no_slices:
        out = Path(args.out)
        first = next(iter(axes.values()))
        values = axis_values(*first)
        for hold in (0.5, -1.0):
            frame = sweep_slices(args.bias, hold, values, args.std)
            lines = ["parameter,value,bias"]
            lines += [f"{r.parameter},{format_float(r.value)},{format_float(r.bias)}" for r in frame.itertuples()]
            path = out.with_name(f"{out.stem}.slice_hold{format_float(hold)}{out.suffix or '.csv'}")
            path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return 0


def cmd_simulate(args) -> int:
    from .scm import ScmSpec, simulate

    seed = args.seed if args.seed is not None else _default_seed()
    spec = ScmSpec(args.structure, _parse_params(args.param), args.n, seed)
    frame = simulate(spec)
    text = frame.to_csv(index=False, lineterminator="\n", float_format="%.17g")
    _write(text, args.out)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    seed = args.seed if args.seed is not None else _default_seed()
    results = run_selftest(seed, inject=args.inject, mc=not args.no_mc)
    failed = 0
    for r in results:
        print(r.line())
        failed += r.status == "FAIL"
    print(f"{len(results) - failed}/{len(results)} batteries without failure (seed {seed})")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causalbias", description="Measure causal biases in discrimination estimates.")
    p.add_argument("--version", action="version",
                   version=f"causalbias {__version__} (report format 1, sweep format 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("audit", help="compute the biases a graph implies for a dataset")
    src = a.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV file with a header row")
    src.add_argument("--scm", metavar="STRUCTURE", help="simulate data from a built-in generator instead")
    a.add_argument("--param", action="append", metavar="K=V", help="generator parameters (repeatable)")
    a.add_argument("--n", type=int, default=100_000, help="rows to simulate with --scm")
    a.add_argument("--graph", help="graph file; defaults to the generator graph with --scm")
    a.add_argument("--sensitive", help="sensitive variable(s), e.g. A or A,B")
    a.add_argument("--outcome")
    a.add_argument("--bias", default="auto", help="auto or a comma list of conf,sel,meas,int")
    a.add_argument("--adjust", choices=("each", "all"), default="each")
    a.add_argument("--map", action="append", metavar="COL=NODE", help="rename CSV columns to graph nodes")
    a.add_argument("--error-mech", metavar="E0,E1", help="P(t1|z0),P(t0|z1) for measurement bias")
    a.add_argument("--seed", type=int)
    a.add_argument("--exact-tol", type=float, default=1e-9)
    a.add_argument("--mc-sigma", type=float, default=3.0, help="Monte Carlo tolerance in standard errors")
    a.add_argument("--timestamp", action="store_true", help="record the wall-clock time in the report")
    a.add_argument("--out", help="report path (default stdout)")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("sweep", help="evaluate a linear closed form over a parameter grid")
    s.add_argument("--bias", choices=("conf", "sel", "meas"), required=True)
    s.add_argument("--axes", required=True, help='e.g. "beta=-1:1:0.1,gamma=-1:1:0.1"')
    s.add_argument("--hold", type=float, default=0.5, help="value for parameters not on an axis")
    s.add_argument("--std", action="store_true", help="standardized variables")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--no-slices", action="store_true", help="skip the one-parameter slice files")
    s.add_argument("--out", help="grid CSV path (default stdout)")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="write rows from a built-in generator")
    m.add_argument("--structure", required=True)
    m.add_argument("--param", action="append", metavar="K=V")
    m.add_argument("--n", type=int, default=1000)
    m.add_argument("--seed", type=int)
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    t = sub.add_parser("selftest", help="run the oracle batteries")
    t.add_argument("--seed", type=int)
    t.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo checks")
    t.add_argument("--inject", help=argparse.SUPPRESS)
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CausalBiasError as exc:
        print(f"causalbias: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyError as exc:
        print(f"causalbias: unknown name: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

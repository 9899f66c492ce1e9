"""Command-line front end.

Subcommands: ``report`` (full estimand report for a model file), ``table1``
(closed-form columns at chosen coefficients), ``table2``/``table3`` (builtin
scenario suites against the reference fixture), ``estimate`` (plug-in bounds
from a CSV), ``plant`` (entry-mean heritability for a design file).

Exit codes: 0 success, 1 any comparison failure, 2 input error.  The default
seed comes from the CFHERIT_SEED environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

from . import empirical, plant, tables
from .dsl import load_model
from .errors import CFHeritError
from .estimands import REPORT_ORDER, report
from .moments import EngineConfig

CSV_HEADER = ["estimand", "value", "method", "stderr", "paper_value", "delta", "pass"]


def _default_seed() -> int:
    try:
        return int(os.environ.get("CFHERIT_SEED", "0"))
    except ValueError:
        return 0


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _emit(rows: list[dict], fmt: str, out) -> None:
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([_fmt(r.get(k)) for k in CSV_HEADER])
    else:
        widths = {k: max(len(k), *(len(_fmt(r.get(k))) for r in rows)) for k in CSV_HEADER}
        head = "| " + " | ".join(k.ljust(widths[k]) for k in CSV_HEADER) + " |"
        sep = "| " + " | ".join("-" * widths[k] for k in CSV_HEADER) + " |"
        out.write(head + "\n" + sep + "\n")
        for r in rows:
            out.write(
                "| " + " | ".join(_fmt(r.get(k)).ljust(widths[k]) for k in CSV_HEADER) + " |\n"
            )


def _cells_to_rows(cells) -> list[dict]:
    return [
        {
            "estimand": f"{c.row}:{c.estimand}",
            "value": c.value,
            "method": c.method,
            "stderr": c.stderr if c.method == "monte-carlo" else "",
            "paper_value": c.reference,
            "delta": c.delta,
            "pass": c.ok,
        }
        for c in cells
    ]


def _common_options(parser, suppress: bool) -> None:
    # accepted both before and after the subcommand; the later parse wins
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, help="master seed (default: CFHERIT_SEED or 0)",
                        **({"default": d} if suppress else {"default": None}))
    parser.add_argument("--mc-n", type=int, help="Monte Carlo sample size per stratum",
                        **({"default": d} if suppress else {"default": 1_000_000}))
    parser.add_argument("--format", choices=("csv", "markdown"),
                        **({"default": d} if suppress else {"default": "csv"}))
    parser.add_argument("--out", help="output path (default: stdout)",
                        **({"default": d} if suppress else {"default": None}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfherit", description=__doc__)
    _common_options(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        _common_options(sp, suppress=True)
        return sp

    sp = add("report", help="full heritability report for a model file")
    sp.add_argument("model", help="path to a model-spec file")

    sp = add("table1", help="closed-form columns at chosen coefficients")
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--beta1", type=float, default=None)
    sp.add_argument("--beta2", type=float, default=None)
    sp.add_argument("--tol", type=float, default=1e-9)

    for t in (2, 3):
        sp = add(f"table{t}", help=f"builtin table {t} suite vs reference values")
        sp.add_argument("--tol", type=float, default=0.01)

    sp = add("estimate", help="plug-in bounds from a CSV of (X, G, Y)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--x", nargs="*", default=[], help="X column names (discrete)")
    sp.add_argument("--g", nargs="+", required=True, help="genotype column names")
    sp.add_argument("--y", required=True, help="phenotype column name")
    sp.add_argument("--bootstrap", type=int, default=200)

    sp = add("plant", help="entry-mean heritability for a design file")
    sp.add_argument("--design", required=True, help="path to a JSON design")

    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = args.seed if args.seed is not None else _default_seed()
    buf = io.StringIO()
    exit_code = 0
    try:
        if args.command == "report":
            rep = report(load_model(args.model), EngineConfig(seed=seed, mc_n=args.mc_n))
            rows = [
                {
                    "estimand": name,
                    "value": e.value,
                    "method": e.method,
                    "stderr": e.se if e.method == "monte-carlo" else "",
                    "paper_value": "",
                    "delta": "",
                    "pass": "",
                }
                for name in REPORT_ORDER
                if (e := rep.entries.get(name)) is not None
            ]
            _emit(rows, args.format, buf)
            for note in rep.warnings:
                buf.write(f"# note: {note}\n")
        elif args.command == "table1":
            beta1 = args.beta1 if args.beta1 is not None else args.beta
            beta2 = args.beta2 if args.beta2 is not None else args.beta
            cells = tables.run_table1(beta1=beta1, beta2=beta2, beta=args.beta,
                                      seed=seed, tol=args.tol)
            _emit(_cells_to_rows(cells), args.format, buf)
            exit_code = 0 if all(c.ok for c in cells) else 1
        elif args.command in ("table2", "table3"):
            t = int(args.command[-1])
            cells = tables.run_table(t, seed=seed, mc_n=args.mc_n, tol=args.tol)
            _emit(_cells_to_rows(cells), args.format, buf)
            n_fail = sum(not c.ok for c in cells)
            if n_fail:
                buf.write(f"# {n_fail} of {len(cells)} cells deviate beyond tolerance {args.tol}\n")
                exit_code = 1
        elif args.command == "estimate":
            ds = empirical.load_table(args.data, args.x, args.g, args.y)
            res = empirical.estimate_bounds(ds, seed=seed, n_boot=args.bootstrap)
            rows = [
                {
                    "estimand": name,
                    "value": b.value,
                    "method": "plug-in",
                    "stderr": b.se,
                    "paper_value": "",
                    "delta": "",
                    "pass": "",
                }
                for name, b in res.bounds.items()
            ]
            _emit(rows, args.format, buf)
            for note in res.notes:
                buf.write(f"# note: {note}\n")
        elif args.command == "plant":
            design = plant.load_design(args.design)
            xi_val, h2_plant = plant.plant_heritability(design)
            rows = [
                {"estimand": "xi", "value": xi_val, "method": "analytic",
                 "stderr": "", "paper_value": "", "delta": "", "pass": ""},
                {"estimand": "H2_plant", "value": h2_plant, "method": "analytic",
                 "stderr": "", "paper_value": "", "delta": "", "pass": ""},
            ]
            _emit(rows, args.format, buf)
    except (CFHeritError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2

    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return exit_code


def main() -> None:
    sys.exit(run_cli())

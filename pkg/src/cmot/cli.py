"""``cmot`` command line.

Exit status: 0 solved or feasible, 2 negative verdict with a certificate,
1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .errors import CmotError
from .io import coupling_csv, emit_report, load_scenario, read_plan_csv
from .runner import COMMANDS, run_scenario

log = logging.getLogger("cmot")


def _read_payoff(path: str) -> list[float]:
    text = Path(path).read_text()
    if path.endswith(".json"):
        return [float(v) for v in json.loads(text)]
    rows = list(csv.DictReader(text.splitlines()))
    return [float(r["f"]) for r in rows]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmot", description="Constrained martingale transport on finite grids.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--emit-plan", metavar="FILE", help="write the witness or optimal plan as x,y,mass CSV")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    common.add_argument("-o", "--output", metavar="FILE", help="write the report here instead of stdout")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("scenario")
        if name == "solve":
            sp.add_argument("--dual", action="store_true", help="also compute the dual potential")
        if name == "envelope":
            sp.add_argument("payoff", nargs="?", help="payoff values: JSON list or CSV with column f")
        if name in ("multiperiod", "skorokhod"):
            sp.add_argument("--emit-path", metavar="FILE", help="write the path measure as JSON")
        if name == "skorokhod":
            sp.add_argument("--sigma", type=float)
            sp.add_argument("--steps", type=int)
            sp.add_argument("--kappa", type=float)
        if name == "check-monotone":
            sp.add_argument("plan", nargs="?", help="plan CSV with header x,y,mass")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="cmot: %(message)s")
    try:
        sc = load_scenario(args.scenario)
        for w in sc.warnings:
            log.warning("%s: %s", w["pointer"], w["message"])
        overrides = {}
        if getattr(args, "dual", False):
            overrides["dual"] = True
        if getattr(args, "payoff", None):
            overrides["payoff"] = _read_payoff(args.payoff)
        for key in ("sigma", "steps", "kappa"):
            if getattr(args, key, None) is not None:
                overrides[key] = getattr(args, key)
        if getattr(args, "plan", None):
            overrides["plan"] = read_plan_csv(args.plan, sc.alpha(), sc.beta().atoms)
        result = run_scenario(sc, args.command, args.tol, args.seed, **overrides)
        if args.emit_plan and result.plan is not None:
            Path(args.emit_plan).write_bytes(coupling_csv(result.plan))
        if getattr(args, "emit_path", None) and result.path is not None:
            Path(args.emit_path).write_text(json.dumps(result.path.to_dict(), sort_keys=True, indent=2) + "\n")
        out = emit_report(result.report, args.format, include_timings=args.timings)
        if args.output:
            Path(args.output).write_bytes(out)
        else:
            sys.stdout.buffer.write(out)
            sys.stdout.flush()
        return result.exit_code
    except (CmotError, OSError, ValueError) as exc:
        print(f"cmot: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

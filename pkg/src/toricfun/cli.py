"""Command line entry point: ``toricfun <suite> [options]``.

Exit codes: 0 all margins within tolerance, 1 some margin below ``-tol``,
2 bad configuration, 3 a quadrature or transform failed to converge.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SpecError, ToricFunError
from .reporting import (
    EXIT_CONFIG,
    SUITES,
    ExperimentConfig,
    oracle_dump,
    run_suite,
    write_outputs,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toricfun", description="Functionals of torus-invariant metrics on P^n.")
    p.add_argument("suite", choices=SUITES + ("oracle",), help="experiment suite to run")
    p.add_argument("--n", type=int, help="dimension of P^n (default 1)")
    p.add_argument("--m", help="degree, list or range such as 3, 2,4 or 2-5 (default 2)")
    p.add_argument("--seeds", type=int, help="number of generated metrics (default 0: named metrics)")
    p.add_argument("--seed-start", type=int, help="first seed (default 0)")
    p.add_argument("--complexity", type=int, help="pieces per generated metric (default 2)")
    p.add_argument("--resolution", type=int, help="quadrature nodes per direction (default 31)")
    p.add_argument("--tol", type=float, help="margin tolerance (default 1e-9)")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--out", default="toricfun-out", help="output directory")
    p.add_argument("--spec", help="JSON file with one metric spec or a list of them")
    p.add_argument("--config", help="JSON file whose keys mirror these flags")
    p.add_argument("--exponent-set", choices=("displayed", "geometric"))
    p.add_argument("--volume", choices=("canonical", "fs"))
    p.add_argument("--no-plot", action="store_true", help="skip margins.png")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Merge ``--config`` (if any) with explicit flags; flags win."""
    d: dict = {}
    if args.config:
        d.update(json.loads(Path(args.config).read_text()))
        d.pop("out", None)
    d["suite"] = args.suite
    flags = {"n": args.n, "m": args.m, "seeds": args.seeds, "seed_start": args.seed_start,
             "complexity": args.complexity, "resolution": args.resolution, "tol": args.tol,
             "jobs": args.jobs, "exponent_set": args.exponent_set}
    d.update({k: v for k, v in flags.items() if v is not None})
    if args.volume is not None:
        d["volume"] = "fubini_study" if args.volume == "fs" else "canonical"
    if d.get("volume") == "fs":
        d["volume"] = "fubini_study"
    if args.spec:
        specs = json.loads(Path(args.spec).read_text())
        d["specs"] = specs if isinstance(specs, list) else [specs]
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.suite == "oracle":
        table = oracle_dump(args.n or 1, int(args.m or 2))
        print(json.dumps({" ".join(map(str, k)): str(v) for k, v in table.items()}, indent=2))
        return 0
    try:
        cfg = config_from_args(args)
    except (SpecError, ValueError, TypeError, OSError) as exc:
        print(f"toricfun: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_suite(cfg)
    except ToricFunError as exc:
        print(f"toricfun: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    paths = write_outputs(result, args.out, plot=not args.no_plot)
    bad = [r for r in result.rows if r["margin"] is not None and r["margin"] < -cfg.tol]
    print(f"{cfg.suite}: {len(result.rows)} rows, {len(bad)} below tolerance, exit {result.exit_code}")
    for p in paths:
        print(f"  wrote {p}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

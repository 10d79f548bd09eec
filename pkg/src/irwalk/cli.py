"""Command line entry points.

irw run <config.json>        execute an experiment and write CSV/JSON
irw calibrate <config.json>  print the calibrated per-level budgets
irw verify                   run the exact-computation checks
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from . import harness, oracle
from ._backend import backend_name


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--M", type=int, help="replace M_list with a single size")
    p.add_argument("--c", type=float, help="override the risk parameter")
    p.add_argument("--policy", choices=harness.POLICIES,
                   help="override the search policy")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--reps", type=int, help="override replications")


def _load(args: argparse.Namespace) -> harness.ExperimentConfig:
    with open(args.config) as fh:
        raw = json.load(fh)
    if args.M is not None:
        raw["M_list"] = [args.M]
    if args.c is not None:
        raw["c"] = args.c
    if args.policy is not None:
        raw["policy"] = args.policy
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.reps is not None:
        raw["replications"] = args.reps
    return harness.config_from_dict(raw)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    agg = harness.run_experiment(config)
    out = args.out
    if out is None:
        base, _ = os.path.splitext(args.config)
        out = base + "_results.csv"
    harness.emit_results(agg, out)
    for row in agg.rows:
        print(f"M={row['M']} policy={row['policy']} "
              f"test={row['local_test']} L={row['L']} "
              f"mean={row['mean_samples']:.3f} se={row['se_samples']:.3f} "
              f"err={row['error_rate']:.5f} risk={row['risk']:.6g} "
              f"trunc={row['truncated']}")
    base, _ = os.path.splitext(out)
    print(f"wrote {out} and {base + '.json'} (backend: {backend_name()})")
    if args.trace:
        with open(args.trace, "w") as fh:
            for M in config.M_list:
                result = harness.trace_replication(config, M, rep=0)
                for event in result.trace or []:
                    fh.write(json.dumps({"M": M, "rep": 0, **event},
                                        sort_keys=True) + "\n")
        print(f"wrote {args.trace}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    config = _load(args)
    if config.policy != "irw":
        print("nothing to calibrate: the flat baseline uses no local tests")
        return 0
    for M in config.M_list:
        k_table, k_sign = harness._cell_tables(config, M)
        if k_table is not None:
            levels = {str(l): k for l, k in enumerate(k_table) if l > 0}
            print(f"M={M} fixed per-level budgets: {json.dumps(levels)}")
        if k_sign is not None:
            rows = {str(l): row for l, row in enumerate(k_sign) if l > 0}
            print(f"M={M} sign-rule budgets by declared count: "
                  f"{json.dumps(rows)}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    checks = oracle.verify_report(mc_runs=args.runs, seed=args.seed)
    width = max(len(c.name) for c in checks)
    failures = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        failures += not c.passed
        print(f"{c.name:<{width}}  {status}  {c.detail}")
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return 0 if failures == 0 else 2


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="irw", description="tree-structured rare-event search")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    _add_common_overrides(p_run)
    p_run.add_argument("--out", help="CSV output path "
                       "(default: <config>_results.csv)")
    p_run.add_argument("--trace", help="also write a JSONL event trace of "
                       "replication 0 for each M")
    p_run.set_defaults(func=_cmd_run)

    p_cal = sub.add_parser("calibrate", help="print calibrated budgets")
    _add_common_overrides(p_cal)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_ver = sub.add_parser("verify", help="run the exact-computation checks")
    p_ver.add_argument("--runs", type=int, default=40000,
                       help="Monte Carlo runs per check")
    p_ver.add_argument("--seed", type=int, default=1234)
    p_ver.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Time the compiled walk kernels against the pure-Python engines.

Each cell runs the same experiment in a child process with
IRWALK_BACKEND forced, so both backends start from a cold import and
neither can fall back silently.  The child times only the replication
loop and reports JSON on stdout; the parent keeps the best of several
repeats and writes one CSV row per backend and tree size.
"""

import argparse
import csv
import json
import os
import subprocess
import sys
import time


def workload(M, reps, c, kind, seed):
    return {
        "model": {"family": "bernoulli", "mu0": 0.4},
        "M_list": [M],
        "L": 1,
        "c": c,
        "policy": "irw",
        "local_test": kind,
        "replications": reps,
        "master_seed": seed,
    }


def run_worker(args):
    from irwalk._backend import backend_name
    from irwalk.harness import config_from_dict, run_replications

    config = config_from_dict(
        workload(args.M, args.reps, args.c, args.kind, args.seed))
    run_replications(config, args.M)  # warm caches outside the clock
    start = time.perf_counter()
    results = run_replications(config, args.M)
    elapsed = time.perf_counter() - start
    print(json.dumps({
        "backend": backend_name(),
        "seconds": elapsed,
        "samples": sum(r.samples for r in results),
    }))


def time_cell(backend, M, args):
    cmd = [sys.executable, os.path.abspath(__file__), "--worker",
           "--M", str(M), "--reps", str(args.reps), "--c", str(args.c),
           "--kind", args.kind, "--seed", str(args.seed)]
    env = {**os.environ, "IRWALK_BACKEND": backend}
    best = None
    for i in range(args.repeats):
        print(f"\r{backend} M={M}: {i + 1}/{args.repeats}", end="",
              flush=True)
        record = json.loads(subprocess.check_output(cmd, env=env))
        if record["backend"] != backend:
            raise RuntimeError(f"asked for {backend}, "
                               f"got {record['backend']}")
        if best is None or record["seconds"] < best["seconds"]:
            best = record
    print(": %.4fs (%.0f samples/s)"
          % (best["seconds"], best["samples"] / best["seconds"]))
    return best


def main(args):
    backends = ["python", "compiled"]
    rows = []
    for backend in backends:
        for M in args.M:
            try:
                best = time_cell(backend, M, args)
            except subprocess.CalledProcessError:
                print(f"\n{backend} backend unavailable, skipping")
                break
            rows.append({
                "backend": backend,
                "M": M,
                "replications": args.reps,
                "local_test": args.kind,
                "seconds": best["seconds"],
                "samples_per_second": best["samples"] / best["seconds"],
            })

    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out}")

    by_key = {(r["backend"], r["M"]): r["seconds"] for r in rows}
    for M in args.M:
        if ("python", M) in by_key and ("compiled", M) in by_key:
            ratio = by_key[("python", M)] / by_key[("compiled", M)]
            print(f"M={M}: compiled is {ratio:.1f}x faster")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--M", nargs="+", type=int, default=[16, 64, 256],
                        help="tree sizes to benchmark")
    parser.add_argument("--reps", type=int, default=300,
                        help="replications per timed run")
    parser.add_argument("--c", type=float, default=1e-4,
                        help="cost per sample")
    parser.add_argument("--kind", default="sequential",
                        choices=["fixed", "sequential", "active"],
                        help="local test to run at internal nodes")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed repeats per cell, best is kept")
    parser.add_argument("--out", default="backend_timings.csv")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        if len(args.M) != 1:
            sys.exit("--worker expects exactly one M")
        args.M = args.M[0]
        run_worker(args)
    else:
        main(args)

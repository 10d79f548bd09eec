import os
import subprocess
import sys

import numpy as np
import pytest

from irwalk._backend import backend_name, run_one
from irwalk.harness import (
    config_from_dict,
    replication_rng,
    run_replications,
)
from irwalk.localtests import LocalTestSpec
from irwalk.models import BernoulliTreeModel, ExponentialFlowModel
from irwalk.tree import place_targets

FIELDS = ("samples", "declared", "correct", "truncated", "test_samples",
          "leaf_samples", "terminating_samples", "local_truncations",
          "walk_passes")


def _run_pair(model, M, c, spec, seed, *, L, policy="irw", known_L=None,
              k_table=None, k_sign=None, max_samples=10 ** 9):
    pair = []
    for trace in (False, True):
        rng = replication_rng(77, M, seed)
        truth = place_targets(M, L, rng)
        pair.append(run_one(model, M, c, spec, truth, rng, policy=policy,
                            known_L=known_L, k_table=k_table, k_sign=k_sign,
                            max_samples=max_samples, collect_trace=trace))
    return pair


needs_compiled = pytest.mark.skipif(backend_name() != "compiled",
                                    reason="compiled kernels not built")


@needs_compiled
def test_walk_parity_bernoulli_all_kinds():
    """Compiled and Python walks must agree draw for draw."""
    model = BernoulliTreeModel(mu0=0.4)
    k_table = [0, 7, 7, 7, 7]
    for kind in ("fixed", "sequential", "active"):
        spec = LocalTestSpec(kind=kind, p=0.5625)
        for seed in range(25):
            fast, slow = _run_pair(model, 16, 1e-4, spec, seed, L=1,
                                   known_L=1, k_table=k_table)
            for f in FIELDS:
                assert getattr(fast, f) == getattr(slow, f), (kind, seed, f)


@needs_compiled
def test_walk_parity_exponential_multi():
    model = ExponentialFlowModel(lambda_g=10.0, lambda_f=0.001)
    cfg = config_from_dict({
        "model": {"family": "exponential", "lambda_g": 10.0,
                  "lambda_f": 0.001},
        "M_list": [16], "L": 2, "c": 1e-3, "replications": 1,
        "master_seed": 1})
    from irwalk.harness import build_k_sign

    k_sign = build_k_sign(cfg, 16)
    spec = LocalTestSpec(kind="fixed", p=0.5625)
    for seed in range(20):
        fast, slow = _run_pair(model, 16, 1e-3, spec, seed, L=2, known_L=2,
                               k_sign=k_sign)
        for f in FIELDS:
            assert getattr(fast, f) == getattr(slow, f), (seed, f)


@needs_compiled
def test_walk_parity_unknown_count():
    model = ExponentialFlowModel(lambda_g=5.0, lambda_f=1.0)
    cfg = config_from_dict({
        "model": {"family": "exponential", "lambda_g": 5.0, "lambda_f": 1.0},
        "M_list": [8], "L": "unknown", "true_L": 2, "c": 1e-2,
        "replications": 1, "master_seed": 1})
    from irwalk.harness import build_k_sign

    k_sign = build_k_sign(cfg, 8)
    spec = LocalTestSpec(kind="fixed", p=0.5625)
    for seed in range(15):
        fast, slow = _run_pair(model, 8, 1e-2, spec, seed, L=2,
                               known_L=None, k_sign=k_sign)
        for f in FIELDS:
            assert getattr(fast, f) == getattr(slow, f), (seed, f)
    # no targets at all: the stopping phase still matches
    for seed in range(15):
        fast, slow = _run_pair(model, 8, 1e-2, spec, seed, L=0,
                               known_L=None, k_sign=k_sign)
        for f in FIELDS:
            assert getattr(fast, f) == getattr(slow, f), (seed, f)


@needs_compiled
def test_flat_parity():
    for model in (BernoulliTreeModel(mu0=0.4),
                  ExponentialFlowModel(lambda_g=10.0, lambda_f=0.01)):
        spec = LocalTestSpec(kind="fixed", p=0.5625)
        for seed in range(20):
            fast, slow = _run_pair(model, 16, 1e-3, spec, seed, L=2,
                                   policy="chernoff",
                                   max_samples=10 ** 6)
            for f in FIELDS:
                assert getattr(fast, f) == getattr(slow, f), (seed, f)


def test_forced_python_backend_subprocess():
    """IRWALK_BACKEND=python selects the fallback and changes nothing."""
    code = (
        "import irwalk\n"
        "from irwalk.harness import config_from_dict, run_replications\n"
        "cfg = config_from_dict({'model': {'family': 'exponential',"
        " 'lambda_g': 10.0, 'lambda_f': 0.01}, 'M_list': [8], 'L': 1,"
        " 'c': 1e-3, 'replications': 4, 'master_seed': 5})\n"
        "rows = run_replications(cfg, 8)\n"
        "print(irwalk.backend_name())\n"
        "print([r.samples for r in rows])\n"
    )
    out = {}
    for forced in ("python", "compiled"):
        proc = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True, text=True,
            env={**os.environ, "IRWALK_BACKEND": forced},
        )
        if proc.returncode != 0 and forced == "compiled":
            pytest.skip("compiled kernels not built")
        assert proc.returncode == 0, proc.stderr
        name, samples = proc.stdout.strip().splitlines()
        assert name == forced
        out[forced] = samples
    assert out["python"] == out["compiled"]


def test_bad_backend_request_fails_fast():
    proc = subprocess.run(
        [sys.executable, "-c", "import irwalk"],
        capture_output=True, text=True,
        env={**os.environ, "IRWALK_BACKEND": "gpu"},
    )
    assert proc.returncode != 0
    assert "IRWALK_BACKEND" in proc.stderr


def test_run_replications_agree_across_backends_in_process():
    """Trace mode (Python) and plain mode (default) give identical runs."""
    cfg = config_from_dict({
        "model": {"family": "bernoulli", "mu0": 0.4,
                  "decay": {"kind": "polynomial", "alpha": 1.0}},
        "M_list": [64], "L": 1, "c": 1e-4, "replications": 6,
        "master_seed": 9})
    plain = run_replications(cfg, 64)
    traced = [run_replications(cfg, 64, trace_rep=i)[i] for i in range(6)]
    for a, b in zip(plain, traced):
        for f in FIELDS:
            assert getattr(a, f) == getattr(b, f)

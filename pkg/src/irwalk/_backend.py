"""Backend selection and per-replication dispatch.

The compiled kernels and the pure-Python engines consume the shared
generator identically, so either backend yields the same trajectory
for a given seed.  IRWALK_BACKEND=python or =compiled forces a choice;
by default the compiled module is used when the build produced it.
Trace collection always runs the Python engines.
"""

from __future__ import annotations

import math
import os
from typing import Dict, Optional, Sequence

import numpy as np

from . import chernoff as _flat
from . import policy as _walk
from .models import HierarchicalModel
from .policy import RunResult, declaration_threshold
from .tree import GroundTruth, n_levels

_FORCED = os.environ.get("IRWALK_BACKEND", "").strip().lower()
if _FORCED not in ("", "compiled", "python"):
    raise ImportError(
        f"IRWALK_BACKEND must be 'compiled' or 'python', got {_FORCED!r}")

if _FORCED == "python":
    _ext = None
else:
    try:
        from . import _kernels as _ext
    except ImportError:
        if _FORCED == "compiled":
            raise
        _ext = None


def backend_name() -> str:
    return "python" if _ext is None else "compiled"


_KIND_CODE = {"fixed": 0, "sequential": 1, "active": 2}


class _Workspace:
    """Reusable per-M buffers handed to the kernels."""

    def __init__(self, M: int):
        top = n_levels(M)
        off = 0
        self.lvl_off = np.zeros(top + 1, dtype=np.int64)
        for l in range(top + 1):
            self.lvl_off[l] = off
            off += M >> l
        self.cnt = np.zeros(off, dtype=np.int32)
        self.decl = np.zeros(off, dtype=np.int32)
        self.declared_out = np.zeros(M, dtype=np.int32)
        self.out = np.zeros(8, dtype=np.int64)
        self.cnt0 = np.zeros(M, dtype=np.int32)
        self.scores = np.zeros(M, dtype=np.float64)
        self.undeclared = np.zeros(M, dtype=np.uint8)
        self.order = np.zeros(M, dtype=np.int32)
        self.emask = np.zeros(M, dtype=np.uint8)
        self.elig = np.zeros(M, dtype=np.int32)


_WORKSPACES: Dict[int, _Workspace] = {}

_DUMMY_F64 = np.zeros(1, dtype=np.float64)
_DUMMY_I64 = np.zeros(1, dtype=np.int64)

_PLANS: Dict[tuple, dict] = {}


def _workspace(M: int) -> _Workspace:
    ws = _WORKSPACES.get(M)
    if ws is None:
        ws = _Workspace(M)
        _WORKSPACES[M] = ws
    return ws


def _model_key(model: HierarchicalModel) -> tuple:
    if model.family == "bernoulli":
        return ("b", model.mu0, model.decay.kind, model.decay.alpha)
    return ("e", model.lambda_g, model.lambda_f)


def _walk_plan(model, M, c, spec, mode, k_table, k_sign) -> dict:
    key = (_model_key(model), M, c, spec.kind, spec.p, spec.p_fa, spec.p_md,
           spec.cap_factor, mode,
           None if k_table is None else tuple(k_table),
           None if k_sign is None else tuple(tuple(r) for r in k_sign))
    plan = _PLANS.get(key)
    if plan is not None:
        return plan
    top = n_levels(M)
    plan = {
        "top": top,
        "family": 0 if model.family == "bernoulli" else 1,
        "kind": _KIND_CODE[spec.kind],
        "leaf_thresh": declaration_threshold(M, c),
        "log_c": math.log(c),
        "g_up": 0.0, "g_lo": 0.0, "nu_up": 0.0, "nu_lo": 0.0,
        "lam_g": 0.0, "lam_f": 0.0,
        "mu_levels": _DUMMY_F64,
        "k_fixed": _DUMMY_I64,
        "ks_flat": _DUMMY_I64, "ks_off": _DUMMY_I64, "ks_w": _DUMMY_I64,
    }
    if spec.kind == "sequential":
        plan["g_up"], plan["g_lo"] = spec.wald_boundaries()
    elif spec.kind == "active":
        plan["nu_up"], plan["nu_lo"] = spec.active_boundaries()
    if model.family == "bernoulli":
        plan["mu_levels"] = np.array([model.mu(l) for l in range(top + 1)],
                                     dtype=np.float64)
    else:
        plan["lam_g"] = model.lambda_g
        plan["lam_f"] = model.lambda_f
    if mode == 0:
        plan["k_fixed"] = np.asarray(k_table, dtype=np.int64)
    else:
        flat: list = []
        offs = np.zeros(top + 1, dtype=np.int64)
        widths = np.zeros(top + 1, dtype=np.int64)
        for level in range(1, top + 1):
            row = k_sign[level]
            offs[level] = len(flat)
            widths[level] = len(row)
            flat.extend(row)
        plan["ks_flat"] = np.asarray(flat, dtype=np.int64)
        plan["ks_off"] = offs
        plan["ks_w"] = widths
    _PLANS[key] = plan
    return plan


def _kernel_walk(model, M, c, spec, truth, rng, mode, known_L, k_table,
                 k_sign, max_samples) -> RunResult:
    plan = _walk_plan(model, M, c, spec, mode, k_table, k_sign)
    ws = _workspace(M)
    leaves = np.asarray(truth.target_leaves, dtype=np.int32)
    _ext.run_walk(rng, mode, plan["family"], plan["kind"], M, plan["top"],
                  plan["leaf_thresh"], plan["log_c"], plan["g_up"],
                  plan["g_lo"], plan["nu_up"], plan["nu_lo"],
                  0 if known_L is None else known_L, max_samples,
                  spec.cap_factor, plan["mu_levels"], plan["lam_g"],
                  plan["lam_f"], plan["k_fixed"], plan["ks_flat"],
                  plan["ks_off"], plan["ks_w"], leaves, ws.cnt, ws.decl,
                  ws.lvl_off, ws.declared_out, ws.out)
    out = ws.out
    declared = tuple(int(x) for x in ws.declared_out[:out[7]])
    return RunResult(
        samples=int(out[0]),
        declared=declared,
        correct=tuple(sorted(declared)) == truth.target_leaves,
        truncated=bool(out[6]),
        test_samples=int(out[2]),
        leaf_samples=int(out[1]),
        terminating_samples=int(out[3]),
        local_truncations=int(out[4]),
        walk_passes=int(out[5]),
    )


def _kernel_flat(model, M, c, truth, rng, max_samples) -> RunResult:
    if truth.L < 1:
        raise ValueError("baseline needs at least one target")
    ws = _workspace(M)
    ws.cnt0[:] = 0
    for j in truth.target_leaves:
        ws.cnt0[j] = 1
    front = _flat.imbalance_condition(model, truth.L, M)
    family = 0 if model.family == "bernoulli" else 1
    mu0 = model.mu(0) if family == 0 else 0.0
    lam_g = model.lambda_g if family == 1 else 0.0
    lam_f = model.lambda_f if family == 1 else 0.0
    _ext.run_flat(rng, family, M, truth.L, declaration_threshold(M, c),
                  mu0, lam_g, lam_f, 1 if front else 0, max_samples,
                  ws.cnt0, ws.scores, ws.undeclared, ws.order, ws.emask,
                  ws.elig, ws.declared_out, ws.out)
    out = ws.out
    declared = tuple(int(x) for x in ws.declared_out[:out[7]])
    return RunResult(
        samples=int(out[0]),
        declared=declared,
        correct=tuple(sorted(declared)) == truth.target_leaves,
        truncated=bool(out[6]),
        test_samples=0,
        leaf_samples=int(out[0]),
    )


def run_one(model: HierarchicalModel, M: int, c: float, spec,
            truth: GroundTruth, rng: np.random.Generator, *,
            policy: str, known_L: Optional[int],
            k_table: Optional[Sequence[int]],
            k_sign: Optional[Sequence[Sequence[int]]],
            max_samples: int, collect_trace: bool = False) -> RunResult:
    """Execute one replication on the active backend."""
    use_python = collect_trace or _ext is None
    if policy == "chernoff":
        if use_python:
            return _flat.run_chernoff(model, M, c, truth, rng,
                                      max_samples=max_samples)
        return _kernel_flat(model, M, c, truth, rng, max_samples)
    if known_L is None:
        mode = 2
    elif known_L == 1:
        mode = 0
    else:
        mode = 1
    if use_python:
        if mode == 2:
            return _walk.run_unknown_count(
                model, M, c, spec, truth, rng, k_sign=k_sign,
                max_samples=max_samples, collect_trace=collect_trace)
        return _walk.run_multi_target(
            model, M, c, spec, truth, rng, k_table=k_table, k_sign=k_sign,
            max_samples=max_samples, collect_trace=collect_trace)
    if mode != 0 and model.family != "exponential":
        raise ValueError("sign-rule walks need the additive-rate family")
    if mode != 0 and spec.kind != "fixed":
        raise ValueError("sign-rule walks use the fixed budget test")
    if mode == 0 and truth.L != 1:
        raise ValueError("single-target run needs exactly one target")
    return _kernel_walk(model, M, c, spec, truth, rng, mode, known_L,
                        k_table, k_sign, max_samples)

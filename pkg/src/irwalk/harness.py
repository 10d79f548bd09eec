"""Experiment configuration, seeded execution, and result emission.

A JSON config fully determines an experiment; every replication derives
its generator from (master_seed, M, replication index), so results are
independent of execution order and reruns are byte-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import localtests as lt
from ._backend import run_one
from .models import (
    DECAY_KINDS,
    BernoulliTreeModel,
    DecaySchedule,
    ExponentialFlowModel,
    HierarchicalModel,
)
from .policy import RunResult
from .tree import n_levels, place_targets

POLICIES = ("irw", "chernoff")

CSV_HEADER = ("M,policy,local_test,L,c,mean_samples,se_samples,"
              "error_rate,risk,truncated,replications")


class ConfigError(ValueError):
    """Invalid experiment configuration; .fields names the offenders."""

    def __init__(self, fields: List[str]):
        self.fields = list(fields)
        super().__init__("invalid config fields: " + ", ".join(self.fields))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description."""

    model: HierarchicalModel
    M_list: Tuple[int, ...]
    L: Union[int, str]
    c: float
    policy: str = "irw"
    local_test: str = "fixed"
    p: float = 0.5625
    p_fa: Optional[float] = None
    p_md: Optional[float] = None
    per_level_K: Optional[Dict[int, int]] = None
    true_L: Optional[int] = None
    replications: int = 1000
    master_seed: int = 1
    max_samples_per_run: int = 10 ** 9
    seq_cap_factor: int = 10

    def test_spec(self) -> lt.LocalTestSpec:
        return lt.LocalTestSpec(kind=self.local_test, p=self.p,
                                p_fa=self.p_fa, p_md=self.p_md,
                                cap_factor=self.seq_cap_factor)

    def known_L(self) -> Optional[int]:
        """Declared target count, or None when it must be inferred."""
        return None if self.L == "unknown" else int(self.L)

    def placement_L(self) -> int:
        """Number of targets actually planted per replication."""
        if self.L == "unknown":
            return int(self.true_L)
        return int(self.L)

    def to_dict(self) -> dict:
        m = self.model
        if m.family == "bernoulli":
            model = {"family": "bernoulli", "mu0": m.mu0,
                     "decay": {"kind": m.decay.kind, "alpha": m.decay.alpha}}
        else:
            model = {"family": "exponential", "lambda_g": m.lambda_g,
                     "lambda_f": m.lambda_f}
        out = {
            "model": model,
            "M_list": list(self.M_list),
            "L": self.L,
            "c": self.c,
            "policy": self.policy,
            "local_test": self.local_test,
            "p": self.p,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "max_samples_per_run": self.max_samples_per_run,
            "seq_cap_factor": self.seq_cap_factor,
        }
        if self.p_fa is not None:
            out["p_fa"] = self.p_fa
            out["p_md"] = self.p_md
        if self.per_level_K is not None:
            out["per_level_K"] = {str(k): v
                                  for k, v in self.per_level_K.items()}
        if self.true_L is not None:
            out["true_L"] = self.true_L
        return out


def _parse_model(raw, bad: List[str]) -> Optional[HierarchicalModel]:
    if not isinstance(raw, dict) or "family" not in raw:
        bad.append("model")
        return None
    family = raw.get("family")
    try:
        if family == "bernoulli":
            decay_raw = raw.get("decay", {"kind": "constant", "alpha": 1.0})
            decay = DecaySchedule(kind=decay_raw.get("kind", "constant"),
                                  alpha=float(decay_raw.get("alpha", 1.0)))
            return BernoulliTreeModel(mu0=float(raw["mu0"]), decay=decay)
        if family == "exponential":
            return ExponentialFlowModel(lambda_g=float(raw["lambda_g"]),
                                        lambda_f=float(raw["lambda_f"]))
    except (KeyError, TypeError, ValueError):
        bad.append("model")
        return None
    bad.append("model.family")
    return None


def _parse_per_level_k(raw, bad: List[str]) -> Optional[Dict[int, int]]:
    if raw is None:
        return None
    if isinstance(raw, int) and not isinstance(raw, bool):
        if raw < 1:
            bad.append("per_level_K")
            return None
        return {0: raw}
    if isinstance(raw, dict):
        try:
            table = {int(k): int(v) for k, v in raw.items()}
        except (TypeError, ValueError):
            bad.append("per_level_K")
            return None
        if any(v < 1 for v in table.values()):
            bad.append("per_level_K")
            return None
        return table
    bad.append("per_level_K")
    return None


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config, reporting every offending field."""
    bad: List[str] = []
    model = _parse_model(raw.get("model"), bad)

    m_list = raw.get("M_list")
    if (not isinstance(m_list, (list, tuple)) or not m_list
            or any(not isinstance(m, int) or m < 2 or m & (m - 1)
                   for m in m_list)):
        bad.append("M_list")
        m_list = (2,)

    L = raw.get("L", 1)
    if L != "unknown" and (not isinstance(L, int) or isinstance(L, bool)
                           or L < 1):
        bad.append("L")
        L = 1

    true_L = raw.get("true_L")
    if L == "unknown":
        if not isinstance(true_L, int) or isinstance(true_L, bool) \
                or true_L < 0:
            bad.append("true_L")
            true_L = 0
    elif true_L is not None and true_L != L:
        bad.append("true_L")
        true_L = None

    c = raw.get("c")
    if not isinstance(c, (int, float)) or not 0.0 < float(c) < 1.0:
        bad.append("c")
        c = 0.5
    policy = raw.get("policy", "irw")
    if policy not in POLICIES:
        bad.append("policy")
        policy = "irw"
    local_test = raw.get("local_test", "fixed")
    if local_test not in lt.TEST_KINDS:
        bad.append("local_test")
        local_test = "fixed"
    p = raw.get("p", 0.5625)
    if not isinstance(p, (int, float)) or not 0.5 < float(p) < 1.0:
        bad.append("p")
        p = 0.5625
    per_level_k = _parse_per_level_k(raw.get("per_level_K"), bad)
    reps = raw.get("replications", 1000)
    if not isinstance(reps, int) or reps < 1:
        bad.append("replications")
        reps = 1
    seed = raw.get("master_seed", 1)
    if not isinstance(seed, int) or seed < 0:
        bad.append("master_seed")
        seed = 1
    cap = raw.get("max_samples_per_run", 10 ** 9)
    if not isinstance(cap, int) or cap < 1:
        bad.append("max_samples_per_run")
        cap = 10 ** 9
    cap_factor = raw.get("seq_cap_factor", 10)
    if not isinstance(cap_factor, int) or cap_factor < 1:
        bad.append("seq_cap_factor")
        cap_factor = 10
    p_fa = raw.get("p_fa")
    p_md = raw.get("p_md")
    for name, v in (("p_fa", p_fa), ("p_md", p_md)):
        if v is not None and (not isinstance(v, (int, float))
                              or not 0.0 < float(v) < 0.5):
            bad.append(name)
    if bad:
        raise ConfigError(bad)
    cfg = ExperimentConfig(
        model=model, M_list=tuple(m_list), L=L, c=float(c), policy=policy,
        local_test=local_test, p=float(p),
        p_fa=None if p_fa is None else float(p_fa),
        p_md=None if p_md is None else float(p_md),
        per_level_K=per_level_k, true_L=true_L, replications=reps,
        master_seed=seed, max_samples_per_run=cap, seq_cap_factor=cap_factor)
    try:
        cfg.test_spec()
    except ValueError:
        raise ConfigError(["p_fa", "p_md"])
    if cfg.policy == "chernoff" and cfg.L == "unknown":
        raise ConfigError(["policy", "L"])
    for m in cfg.M_list:
        if cfg.placement_L() > m:
            raise ConfigError(["L", "M_list"])
    if cfg.model.family == "bernoulli" and (
            cfg.L == "unknown" or cfg.known_L() > 1) \
            and cfg.policy == "irw":
        raise ConfigError(["model.family", "L"])
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


# Calibrated budgets are exact and pure in the keyed quantities below,
# so they are shared across M values and experiments within a process.
_K_CACHE: Dict[tuple, int] = {}


def _calibrated_fixed_k(model: HierarchicalModel, level: int,
                        p: float) -> int:
    if model.family == "bernoulli":
        key = ("b-fixed", round(model.mu(level - 1), 15), p)
    else:
        key = ("e-fixed", model.lambda_g, model.lambda_f, level, p)
    if key not in _K_CACHE:
        _K_CACHE[key] = lt.calibrate_k(model, level, p)
    return _K_CACHE[key]


def _calibrated_sign_k(model: ExponentialFlowModel, level: int,
                       d_hat: int, p: float) -> int:
    key = ("e-sign", model.lambda_g, model.lambda_f, level, d_hat, p)
    if key not in _K_CACHE:
        _K_CACHE[key] = lt.calibrate_k_sign(model, level, d_hat, p)
    return _K_CACHE[key]


def build_k_table(config: ExperimentConfig, M: int) -> List[int]:
    """Per-level budgets for the larger-score walk; index 0 is unused."""
    top = n_levels(M)
    override = config.per_level_K or {}
    table = [0]
    for level in range(1, top + 1):
        if 0 in override:
            table.append(override[0])
        elif level in override:
            table.append(override[level])
        else:
            table.append(_calibrated_fixed_k(config.model, level, config.p))
    return table


def build_k_sign(config: ExperimentConfig, M: int) -> List[List[int]]:
    """Per-level, per-declared-count budgets for sign-rule walks.

    Row l holds budgets for declared counts 0..d_max at tests of level
    l, where d_max stops one short of the child capacity (a saturated
    child is never sampled); row 0 is an unused placeholder.
    """
    top = n_levels(M)
    if config.L == "unknown":
        # Spurious declarations can push a child's declared count past
        # the planted L; budget a few extra rows and let the walk clamp
        # to the deepest calibrated entry in the (rare) overflow case.
        d_top = config.placement_L() + 4
    else:
        d_top = config.known_L() - 1
    override = config.per_level_K or {}
    rows: List[List[int]] = [[]]
    for level in range(1, top + 1):
        d_max = min((1 << (level - 1)) - 1, d_top)
        row = []
        for d in range(d_max + 1):
            if 0 in override:
                row.append(override[0])
            elif level in override:
                row.append(override[level])
            else:
                row.append(_calibrated_sign_k(config.model, level, d,
                                              config.p))
        rows.append(row)
    return rows


def replication_rng(master_seed: int, M: int, rep: int,
                    ) -> np.random.Generator:
    seq = np.random.SeedSequence([master_seed, M, rep])
    return np.random.Generator(np.random.PCG64(seq))


def _cell_tables(config: ExperimentConfig, M: int,
                 ) -> Tuple[Optional[List[int]], Optional[List[List[int]]]]:
    k_table = None
    k_sign = None
    if config.policy == "irw":
        if config.L != "unknown" and config.known_L() == 1:
            k_table = build_k_table(config, M)
        else:
            k_sign = build_k_sign(config, M)
    return k_table, k_sign


def run_replications(config: ExperimentConfig, M: int, *,
                     trace_rep: Optional[int] = None,
                     ) -> List[RunResult]:
    """All replications for one tree size, in replication order."""
    if M not in config.M_list:
        raise ValueError(f"M={M} is not part of this experiment")
    spec = config.test_spec()
    k_table, k_sign = _cell_tables(config, M)
    results = []
    for rep in range(config.replications):
        rng = replication_rng(config.master_seed, M, rep)
        truth = place_targets(M, config.placement_L(), rng)
        results.append(run_one(
            config.model, M, config.c, spec, truth, rng,
            policy=config.policy, known_L=config.known_L(),
            k_table=k_table, k_sign=k_sign,
            max_samples=config.max_samples_per_run,
            collect_trace=(rep == trace_rep)))
    return results


def trace_replication(config: ExperimentConfig, M: int, rep: int = 0,
                      ) -> RunResult:
    """Re-run one replication on the Python engines with event capture."""
    spec = config.test_spec()
    k_table, k_sign = _cell_tables(config, M)
    rng = replication_rng(config.master_seed, M, rep)
    truth = place_targets(M, config.placement_L(), rng)
    return run_one(config.model, M, config.c, spec, truth, rng,
                   policy=config.policy, known_L=config.known_L(),
                   k_table=k_table, k_sign=k_sign,
                   max_samples=config.max_samples_per_run,
                   collect_trace=True)


@dataclass
class ExperimentAggregate:
    """Per-M summary rows plus the budgets used to produce them."""

    config: ExperimentConfig
    rows: List[dict] = field(default_factory=list)
    k_tables: Dict[int, dict] = field(default_factory=dict)


def aggregate_rows(config: ExperimentConfig, M: int,
                   results: Sequence[RunResult]) -> dict:
    """Summary statistics for one tree size.

    Truncated runs count as errors and are excluded from the sample
    mean; the risk column is recomputed from its two components.
    """
    n = len(results)
    finished = [r.samples for r in results if not r.truncated]
    if finished:
        mean = math.fsum(finished) / len(finished)
    else:
        mean = float("nan")
    if len(finished) > 1:
        var = math.fsum((s - mean) ** 2 for s in finished) \
            / (len(finished) - 1)
        se = math.sqrt(var / len(finished))
    else:
        se = 0.0
    errors = sum(1 for r in results if r.truncated or not r.correct)
    error_rate = errors / n
    return {
        "M": M,
        "policy": config.policy,
        "local_test": config.local_test,
        "L": config.L,
        "c": config.c,
        "mean_samples": mean,
        "se_samples": se,
        "error_rate": error_rate,
        "risk": error_rate + config.c * mean,
        "truncated": sum(r.truncated for r in results),
        "replications": n,
    }


def run_experiment(config: ExperimentConfig) -> ExperimentAggregate:
    """Execute every (M, replication) cell and aggregate per M."""
    agg = ExperimentAggregate(config=config)
    for M in config.M_list:
        results = run_replications(config, M)
        agg.rows.append(aggregate_rows(config, M, results))
        tables: dict = {}
        k_table, k_sign = _cell_tables(config, M)
        if k_table is not None:
            tables["fixed"] = k_table
        if k_sign is not None:
            tables["sign"] = k_sign
        agg.k_tables[M] = tables
    return agg


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(agg: ExperimentAggregate, path: str) -> None:
    """Write the CSV rows and a JSON sidecar next to them."""
    lines = [CSV_HEADER]
    columns = CSV_HEADER.split(",")
    for row in agg.rows:
        lines.append(",".join(_format_cell(row[col]) for col in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = {
        "config": agg.config.to_dict(),
        "master_seed": agg.config.master_seed,
        "k_tables": {str(m): t for m, t in agg.k_tables.items()},
        "rows": agg.rows,
    }
    base, _ = os.path.splitext(path)
    with open(base + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_results(path: str) -> List[dict]:
    """Read an emitted CSV back into typed rows (round-trip exact)."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized results file")
    columns = CSV_HEADER.split(",")
    int_cols = {"M", "truncated", "replications"}
    float_cols = {"c", "mean_samples", "se_samples", "error_rate", "risk"}
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        row: dict = {}
        for col, cell in zip(columns, cells):
            if col in int_cols:
                row[col] = int(cell)
            elif col in float_cols:
                row[col] = float(cell)
            elif col == "L" and cell != "unknown":
                row[col] = int(cell)
            else:
                row[col] = cell
        rows.append(row)
    return rows

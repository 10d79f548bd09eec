"""Information-directed random walk over the observation tree.

The walk starts at the root, runs a local test at each internal node to
pick a child (or retreat to the parent), and runs an open-ended
likelihood scan at leaves.  A leaf whose scan crosses the declaration
boundary is announced as a target.  Multi-target walks score each child
against its own declared count and restart from the root after every
declaration; when the number of targets is unknown, a root-level
stopping test decides whether another pass is worthwhile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import localtests as lt
from .models import HierarchicalModel, llr, sample
from .tree import GroundTruth, n_levels, target_count_table

Trace = List[dict]


def declaration_threshold(M: int, c: float) -> float:
    """Leaf boundary log(log2(M) / c) tying errors to the risk budget c."""
    if not 0.0 < c < 1.0:
        raise ValueError("risk parameter c must lie in (0, 1)")
    return math.log(n_levels(M) / c)


def walk_transition(level: int, index: int, verdict: str, top: int,
                    rng: Optional[np.random.Generator] = None,
                    ) -> Tuple[int, int]:
    """Node reached after a verdict; the root is its own parent.

    An H3 verdict (both children flagged) descends into a uniformly
    random child, consuming one uniform from rng.
    """
    if verdict == lt.H1:
        return level - 1, 2 * index
    if verdict == lt.H2:
        return level - 1, 2 * index + 1
    if verdict == lt.H3:
        if rng is None:
            raise ValueError("H3 needs an rng to break the tie")
        side = 0 if rng.random() < 0.5 else 1
        return level - 1, 2 * index + side
    if level >= top:
        return level, index
    return level + 1, index // 2


@dataclass
class RunResult:
    """Outcome of one detection run."""

    samples: int
    declared: Tuple[int, ...]
    correct: bool
    truncated: bool
    test_samples: int
    leaf_samples: int
    terminating_samples: int = 0
    local_truncations: int = 0
    walk_passes: int = 1
    trace: Optional[Trace] = None


class _Budget:
    """Global sample counter with a hard cap."""

    def __init__(self, cap: int) -> None:
        self.cap = cap
        self.total = 0
        self.exhausted = False

    def spend(self, n: int) -> None:
        self.total += n
        if self.total >= self.cap:
            self.exhausted = True


def _leaf_scan(truth_dist, present, absent, thresh: float, budget: _Budget,
               rng: np.random.Generator) -> Tuple[bool, float, int]:
    """Per-visit leaf scan with a fresh score.

    Returns (declared, final score, samples used).  The scan keeps
    sampling while the score stays in [0, thresh); it declares at or
    above thresh and retreats on any strictly negative score.
    """
    s = 0.0
    used = 0
    while not budget.exhausted:
        y = sample(truth_dist, rng)
        used += 1
        budget.spend(1)
        s += llr(present, absent, y)
        if s >= thresh:
            return True, s, used
        if s < 0.0:
            return False, s, used
    return False, s, used


def run_single_target(model: HierarchicalModel, M: int, c: float,
                      spec: lt.LocalTestSpec, truth: GroundTruth,
                      rng: np.random.Generator, *,
                      k_table: Sequence[int],
                      max_samples: int = 10 ** 9,
                      collect_trace: bool = False) -> RunResult:
    """Detect a single target with the larger-score walk.

    k_table[l] is the calibrated per-child budget for tests at level l;
    sequential and adaptive tests reuse it as their truncation unit.
    """
    if truth.M != M:
        raise ValueError("ground truth is for a different tree size")
    if truth.L != 1:
        raise ValueError("single-target run needs exactly one target")
    top = n_levels(M)
    cnt = target_count_table(truth)
    thresh = declaration_threshold(M, c)
    present0 = model.distribution(0, 1)
    absent0 = model.distribution(0, 0)
    upper = lower = 0.0
    if spec.kind == "sequential":
        upper, lower = spec.wald_boundaries()
    elif spec.kind == "active":
        upper, lower = spec.active_boundaries()

    budget = _Budget(max_samples)
    trace: Optional[Trace] = [] if collect_trace else None
    level, index = top, 0
    test_samples = 0
    leaf_samples = 0
    local_truncations = 0
    declared: Tuple[int, ...] = ()

    while not budget.exhausted:
        if level == 0:
            truth_dist = model.distribution(0, int(cnt[0][index]))
            hit, s, used = _leaf_scan(truth_dist, present0, absent0, thresh,
                                      budget, rng)
            leaf_samples += used
            if trace is not None:
                trace.append({"event": "leaf", "leaf": index, "sllr": s,
                              "declared": hit})
            if hit:
                declared = (index,)
                break
            level, index = 1, index // 2
            continue

        child = level - 1
        li, ri = 2 * index, 2 * index + 1
        truth_left = model.distribution(child, int(cnt[child][li]))
        truth_right = model.distribution(child, int(cnt[child][ri]))
        present = model.distribution(child, 1)
        absent = model.distribution(child, 0)
        k = int(k_table[level])
        if spec.kind == "fixed":
            res = lt.fixed_sample_test(truth_left, truth_right, present,
                                       absent, k, rng)
        elif spec.kind == "sequential":
            res = lt.sequential_test(truth_left, truth_right, present,
                                     absent, upper, lower,
                                     spec.cap_factor * k, rng)
        else:
            res = lt.active_test(truth_left, truth_right, present, absent,
                                 upper, lower, 2 * spec.cap_factor * k, rng)
        test_samples += res.samples_used
        budget.spend(res.samples_used)
        local_truncations += res.truncated
        if trace is not None:
            trace.append({"event": "test", "level": level, "index": index,
                          "verdict": res.verdict, "s_left": res.s_left,
                          "s_right": res.s_right})
        level, index = walk_transition(level, index, res.verdict, top)

    return RunResult(
        samples=budget.total,
        declared=declared,
        correct=declared == truth.target_leaves,
        truncated=budget.exhausted,
        test_samples=test_samples,
        leaf_samples=leaf_samples,
        local_truncations=local_truncations,
        trace=trace,
    )


def _sign_rule_run(model: HierarchicalModel, M: int, c: float,
                   spec: lt.LocalTestSpec, truth: GroundTruth,
                   rng: np.random.Generator, *,
                   k_sign: Sequence[Sequence[int]],
                   known_count: Optional[int],
                   max_samples: int,
                   collect_trace: bool) -> RunResult:
    """Shared engine for multi-target and unknown-count walks.

    known_count fixes the number of declarations to collect; None means
    the count is unknown and a root stopping test ends the search.
    """
    if model.family != "exponential":
        raise ValueError("sign-rule walks need the additive-rate family")
    if spec.kind != "fixed":
        raise ValueError("sign-rule walks use the fixed budget test")
    top = n_levels(M)
    cnt = target_count_table(truth)
    decl = [np.zeros(M >> l, dtype=np.int32) for l in range(top + 1)]
    thresh = declaration_threshold(M, c)
    log_c = math.log(c)
    present0 = model.distribution(0, 1)
    absent0 = model.distribution(0, 0)

    budget = _Budget(max_samples)
    trace: Optional[Trace] = [] if collect_trace else None
    declared: List[int] = []
    test_samples = 0
    leaf_samples = 0
    terminating_samples = 0
    walk_passes = 0

    def record_declaration(leaf: int) -> None:
        declared.append(leaf)
        for l in range(top + 1):
            decl[l][leaf >> l] += 1

    done = False
    while not done and not budget.exhausted:
        if known_count is not None and len(declared) >= known_count:
            break
        if known_count is None and len(declared) >= M:
            break
        walk_passes += 1
        level, index = top, 0
        while not budget.exhausted:
            if level == 0:
                truth_dist = model.distribution(0, int(cnt[0][index]))
                hit, s, used = _leaf_scan(truth_dist, present0, absent0,
                                          thresh, budget, rng)
                leaf_samples += used
                if trace is not None:
                    trace.append({"event": "leaf", "leaf": index, "sllr": s,
                                  "declared": hit})
                if hit:
                    record_declaration(index)
                    break
                level, index = 1, index // 2
                continue

            child = level - 1
            li, ri = 2 * index, 2 * index + 1
            cap_child = 1 << child
            d_left = int(decl[child][li])
            d_right = int(decl[child][ri])
            skip_left = d_left >= cap_child
            skip_right = d_right >= cap_child
            pair_left = pair_right = (absent0, absent0)
            truth_left = truth_right = absent0
            k_left = k_right = 1
            row = k_sign[level]
            if not skip_left:
                pair_left = (model.distribution(child, d_left + 1),
                             model.distribution(child, d_left))
                truth_left = model.distribution(child, int(cnt[child][li]))
                k_left = int(row[min(d_left, len(row) - 1)])
            if not skip_right:
                pair_right = (model.distribution(child, d_right + 1),
                              model.distribution(child, d_right))
                truth_right = model.distribution(child, int(cnt[child][ri]))
                k_right = int(row[min(d_right, len(row) - 1)])
            res = lt.sign_rule_fixed_test(truth_left, truth_right, pair_left,
                                          pair_right, k_left, k_right,
                                          skip_left, skip_right, rng)
            test_samples += res.samples_used
            budget.spend(res.samples_used)
            if trace is not None:
                trace.append({"event": "test", "level": level,
                              "index": index, "verdict": res.verdict,
                              "s_left": res.s_left, "s_right": res.s_right})
            if res.verdict == lt.H0 and level == top and known_count is None:
                # Root sees nothing new: run the stopping test.
                l_hat = len(declared)
                hi = model.distribution(top, l_hat + 1)
                lo = model.distribution(top, l_hat)
                truth_root = model.distribution(top, truth.L)
                s = 0.0
                resumed = False
                while not budget.exhausted:
                    y = sample(truth_root, rng)
                    terminating_samples += 1
                    budget.spend(1)
                    s += llr(hi, lo, y)
                    if s > 0.0:
                        resumed = True
                        break
                    if s <= log_c:
                        break
                if trace is not None:
                    trace.append({"event": "stopping", "sllr": s,
                                  "resumed": resumed})
                if not resumed:
                    done = True
                break
            level, index = walk_transition(level, index, res.verdict, top,
                                           rng)

    order = tuple(declared)
    return RunResult(
        samples=budget.total,
        declared=order,
        correct=tuple(sorted(order)) == truth.target_leaves,
        truncated=budget.exhausted,
        test_samples=test_samples,
        leaf_samples=leaf_samples,
        terminating_samples=terminating_samples,
        walk_passes=walk_passes,
        trace=trace,
    )


def run_multi_target(model: HierarchicalModel, M: int, c: float,
                     spec: lt.LocalTestSpec, truth: GroundTruth,
                     rng: np.random.Generator, *,
                     k_table: Optional[Sequence[int]] = None,
                     k_sign: Optional[Sequence[Sequence[int]]] = None,
                     max_samples: int = 10 ** 9,
                     collect_trace: bool = False) -> RunResult:
    """Detect a known number of targets.

    A single-target search runs the plain larger-score walk; two or
    more targets use per-child sign scoring with declared-count
    book-keeping and a root restart after each declaration.
    """
    if truth.M != M:
        raise ValueError("ground truth is for a different tree size")
    if truth.L == 1:
        if k_table is None:
            raise ValueError("single-target walk needs k_table")
        return run_single_target(model, M, c, spec, truth, rng,
                                 k_table=k_table, max_samples=max_samples,
                                 collect_trace=collect_trace)
    if k_sign is None:
        raise ValueError("multi-target walk needs k_sign")
    return _sign_rule_run(model, M, c, spec, truth, rng, k_sign=k_sign,
                          known_count=truth.L, max_samples=max_samples,
                          collect_trace=collect_trace)


def run_unknown_count(model: HierarchicalModel, M: int, c: float,
                      spec: lt.LocalTestSpec, truth: GroundTruth,
                      rng: np.random.Generator, *,
                      k_sign: Sequence[Sequence[int]],
                      max_samples: int = 10 ** 9,
                      collect_trace: bool = False) -> RunResult:
    """Detect an unknown number of targets, stopping via the root test."""
    if truth.M != M:
        raise ValueError("ground truth is for a different tree size")
    return _sign_rule_run(model, M, c, spec, truth, rng, k_sign=k_sign,
                          known_count=None, max_samples=max_samples,
                          collect_trace=collect_trace)

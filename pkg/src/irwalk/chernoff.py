"""Flat leaf-probing baseline with randomized score-ranked selection.

Every probe samples one leaf and updates that leaf's cumulative
log-likelihood ratio; scores are never reset.  The probed leaf is drawn
uniformly from an eligibility window over the score ranking, and a leaf
whose score crosses the declaration boundary is announced and removed
from the pool.
"""

from __future__ import annotations

import math
from typing import List, Sequence

import numpy as np

from .models import HierarchicalModel, kl, llr, sample
from .policy import RunResult, declaration_threshold
from .tree import GroundTruth, target_count_table


def imbalance_condition(model: HierarchicalModel, L: int, M: int) -> bool:
    """Whether occupied leaves are the cheaper side to confirm.

    Compares the per-target discrimination rate against the per-empty
    rate; True selects the window that probes the current front
    runners.
    """
    if not 1 <= L <= M:
        raise ValueError("need 1 <= L <= M")
    present = model.distribution(0, 1)
    absent = model.distribution(0, 0)
    if L == M:
        return True
    return kl(present, absent) / L >= kl(absent, present) / (M - L)


def eligible_leaves(scores: Sequence[float], undeclared: Sequence[bool],
                    l_rem: int, front: bool) -> List[int]:
    """Leaves the next probe may target, in ascending index order.

    Undeclared leaves are ranked by descending score with index as the
    tie-break.  With front=True the first l_rem ranks are eligible;
    otherwise the ranks behind them are, along with any front-rank leaf
    whose score is non-negative: such a leaf still looks occupied, and
    only further probes can push it over the declaration boundary.
    """
    order = sorted((j for j in range(len(scores)) if undeclared[j]),
                   key=lambda j: (-scores[j], j))
    if front:
        chosen = order[:l_rem]
    else:
        chosen = order[l_rem:]
        chosen += [j for j in order[:l_rem] if scores[j] >= 0.0]
    return sorted(chosen)


def run_chernoff(model: HierarchicalModel, M: int, c: float,
                 truth: GroundTruth, rng: np.random.Generator, *,
                 max_samples: int = 10 ** 9) -> RunResult:
    """Locate all targets by score-ranked leaf probing."""
    if truth.M != M:
        raise ValueError("ground truth is for a different tree size")
    if truth.L < 1:
        raise ValueError("baseline needs at least one target")
    thresh = declaration_threshold(M, c)
    cnt0 = target_count_table(truth)[0]
    present = model.distribution(0, 1)
    absent = model.distribution(0, 0)
    leaf_dists = [model.distribution(0, int(cnt0[j])) for j in range(M)]
    front = imbalance_condition(model, truth.L, M)

    scores = [0.0] * M
    undeclared = [True] * M
    declared: List[int] = []
    l_rem = truth.L
    samples = 0
    truncated = False

    while l_rem > 0:
        if samples >= max_samples:
            truncated = True
            break
        pool = eligible_leaves(scores, undeclared, l_rem, front)
        pick = min(int(rng.random() * len(pool)), len(pool) - 1)
        j = pool[pick]
        y = sample(leaf_dists[j], rng)
        samples += 1
        scores[j] += llr(present, absent, y)
        if scores[j] >= thresh:
            undeclared[j] = False
            declared.append(j)
            l_rem -= 1

    order = tuple(declared)
    return RunResult(
        samples=samples,
        declared=order,
        correct=tuple(sorted(order)) == truth.target_leaves,
        truncated=truncated,
        test_samples=0,
        leaf_samples=samples,
    )

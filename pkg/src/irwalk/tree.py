"""Complete binary tree addressing over a power-of-two leaf row.

Nodes are (level, index) pairs: level 0 is the leaf row, level log2(M) is the
root. Index runs left to right within a level, so node (l, i) covers leaves
[i * 2^l, (i + 1) * 2^l).
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

NodeId = Tuple[int, int]


def n_levels(M: int) -> int:
    """Number of internal levels, i.e. log2(M). M must be a power of two >= 2."""
    if M < 2 or M & (M - 1):
        raise ValueError(f"M must be a power of two >= 2, got {M}")
    return M.bit_length() - 1


def root(M: int) -> NodeId:
    return (n_levels(M), 0)


def is_leaf(node: NodeId) -> bool:
    return node[0] == 0


def parent(node: NodeId, M: int) -> NodeId:
    """Parent of a node; the root is its own parent."""
    level, index = node
    if level >= n_levels(M):
        return (level, index)
    return (level + 1, index // 2)


def children(node: NodeId) -> Tuple[NodeId, NodeId]:
    """Left and right child. Leaves have none."""
    level, index = node
    if level == 0:
        raise ValueError(f"leaf node {node} has no children")
    return ((level - 1, 2 * index), (level - 1, 2 * index + 1))


def capacity(node: NodeId) -> int:
    """Number of leaves under the node."""
    return 1 << node[0]


def leaf_span(node: NodeId) -> Tuple[int, int]:
    """Half-open range [lo, hi) of leaf indices under the node."""
    level, index = node
    return (index << level, (index + 1) << level)


@dataclass(frozen=True)
class GroundTruth:
    """True target placement for one replication."""

    M: int
    target_leaves: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        n_levels(self.M)
        leaves = tuple(sorted(self.target_leaves))
        if len(set(leaves)) != len(leaves):
            raise ValueError("duplicate target leaves")
        if leaves and (leaves[0] < 0 or leaves[-1] >= self.M):
            raise ValueError("target leaf out of range")
        object.__setattr__(self, "target_leaves", leaves)

    @property
    def L(self) -> int:
        return len(self.target_leaves)


def subtree_target_count(truth: GroundTruth, node: NodeId) -> int:
    lo, hi = leaf_span(node)
    return sum(1 for j in truth.target_leaves if lo <= j < hi)


def target_count_table(truth: GroundTruth) -> list:
    """Per-level arrays cnt[l][i] = number of targets under node (l, i)."""
    levels = n_levels(truth.M)
    cnt = [np.zeros(truth.M >> l, dtype=np.int32) for l in range(levels + 1)]
    for j in truth.target_leaves:
        for l in range(levels + 1):
            cnt[l][j >> l] += 1
    return cnt


def place_targets(M: int, L: int, rng) -> GroundTruth:
    """Uniform placement of L distinct target leaves.

    Uses a partial Fisher-Yates shuffle driven by rng.random() so the compiled
    and pure backends consume the identical stream.
    """
    if not 0 <= L <= M:
        raise ValueError(f"need 0 <= L <= M, got L={L} M={M}")
    pool = list(range(M))
    chosen = []
    for k in range(L):
        idx = k + min(int(rng.random() * (M - k)), M - k - 1)
        pool[k], pool[idx] = pool[idx], pool[k]
        chosen.append(pool[k])
    return GroundTruth(M=M, target_leaves=tuple(chosen))

"""Order-independent (stable) PC: skeleton, colliders, orientation propagation."""

from __future__ import annotations

import logging
from itertools import combinations

import numpy as np

from ..errors import ParameterError
from ..graphs import Cpdag, _meek_close
from ..scm import Dataset
from .citest import CiTestConfig, FisherZTester

logger = logging.getLogger(__name__)


def _skeleton(tester: FisherZTester, d: int, cfg: CiTestConfig):
    """Level-wise edge removal against a per-level snapshot, so the result
    does not depend on the order pairs are visited within a level."""
    adj = ~np.eye(d, dtype=bool)
    sepsets: dict[tuple[int, int], frozenset[int]] = {}
    level = 0
    while True:
        if cfg.max_condition_size is not None and level > cfg.max_condition_size:
            break
        snapshot = adj.copy()
        degrees = snapshot.sum(axis=1)
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d) if snapshot[i, j]]
        if not any(degrees[i] - 1 >= level or degrees[j] - 1 >= level for i, j in pairs):
            break
        for i, j in pairs:
            removed = False
            for a, b in ((i, j), (j, i)):
                nbrs = [int(v) for v in np.flatnonzero(snapshot[a]) if v != b]
                if len(nbrs) < level:
                    continue
                for cond in combinations(nbrs, level):
                    if tester.independent(i, j, cond):
                        adj[i, j] = adj[j, i] = False
                        sepsets[(i, j)] = sepsets[(j, i)] = frozenset(cond)
                        removed = True
                        break
                if removed:
                    break
        level += 1
    return adj, sepsets


def _orient_colliders(adj: np.ndarray, sepsets) -> tuple[np.ndarray, int]:
    """Orientation votes from unshielded triples; an edge pulled both ways is
    left undirected (conflict counted)."""
    d = adj.shape[0]
    want = np.zeros((d, d), dtype=bool)
    for k in range(d):
        nbrs = np.flatnonzero(adj[k])
        for ai in range(len(nbrs)):
            for bi in range(ai + 1, len(nbrs)):
                i, j = int(nbrs[ai]), int(nbrs[bi])
                if adj[i, j]:
                    continue
                if k not in sepsets[(i, j)]:
                    want[i, k] = True
                    want[j, k] = True
    conflicted = want & want.T
    directed = want & ~want.T
    return directed, int(conflicted.sum() // 2)


def pc(data: Dataset, cfg: CiTestConfig | None = None) -> Cpdag:
    """Stable-PC estimate of the CPDAG underlying the dataset.

    Orientation conflicts (collider votes pulling an edge both ways, or a
    Meek rule firing against an existing orientation) leave the edge as it
    is and are counted in the run log rather than raised.
    """
    cfg = cfg or CiTestConfig()
    d = data.d
    if d < 2:
        raise ParameterError("PC needs at least 2 variables")
    tester = FisherZTester(data, cfg.alpha)
    adj, sepsets = _skeleton(tester, d, cfg)
    directed, collider_conflicts = _orient_colliders(adj, sepsets)
    undirected = adj & ~(directed | directed.T)
    D, U, meek_conflicts = _meek_close(directed, undirected, on_conflict="skip")
    logger.info(
        "pc: d=%d n=%d ci_tests=%d edges=%d collider_conflicts=%d meek_conflicts=%d",
        d,
        data.n,
        tester.tests_run,
        int((D | U).sum() - U.sum() // 2),
        collider_conflicts,
        meek_conflicts,
    )
    return Cpdag(data.column_labels, D, U)

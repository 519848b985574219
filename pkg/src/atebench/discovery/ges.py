"""Greedy equivalence search over CPDAG states with a decomposable BIC score."""

from __future__ import annotations

import logging
from itertools import combinations

import numpy as np

from ..errors import ExtensionError, ParameterError, SampleSizeError
from ..graphs import Cpdag, Dag, _extend_pdag
from ..mec import cpdag_of
from ..scm import Dataset
from .score import BicScore

logger = logging.getLogger(__name__)

# strict improvement threshold; ties and float noise do not count as progress
_EPS = 1e-10


def _clique(adj: np.ndarray, nodes) -> bool:
    nodes = list(nodes)
    return all(adj[a, b] for a, b in combinations(nodes, 2))


def _blocked_path(D: np.ndarray, U: np.ndarray, src: int, dst: int, blocked) -> bool:
    """True when every semi-directed path src ~> dst passes through `blocked`."""
    d = D.shape[0]
    seen = np.zeros(d, dtype=bool)
    for b in blocked:
        seen[b] = True
    if seen[src]:
        return True
    stack = [src]
    seen[src] = True
    while stack:
        u = stack.pop()
        if u == dst:
            return False
        for v in np.flatnonzero(D[u] | U[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return True


def _recomplete(labels, D: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    adjacency = _extend_pdag(D, U, list(range(D.shape[0])))
    p = cpdag_of(Dag(labels, adjacency))
    return p.directed, p.undirected


def _forward_candidates(D, U, score: BicScore):
    d = D.shape[0]
    adj = D | D.T | U
    out = []
    for x in range(d):
        for y in range(d):
            if x == y or adj[x, y]:
                continue
            na = frozenset(np.flatnonzero(U[y] & adj[x]).tolist())
            t_pool = np.flatnonzero(U[y] & ~adj[x] & (np.arange(d) != x)).tolist()
            pa = frozenset(np.flatnonzero(D[:, y]).tolist())
            for size in range(len(t_pool) + 1):
                for t in combinations(t_pool, size):
                    base = na | set(t) | pa
                    delta = score.local(y, base | {x}) - score.local(y, base)
                    if delta > _EPS:
                        out.append((delta, x, y, t, na))
    out.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    return out


def _backward_candidates(D, U, score: BicScore):
    d = D.shape[0]
    adj = D | D.T | U
    out = []
    for x in range(d):
        for y in range(d):
            if x == y or not (U[x, y] or D[x, y]):
                continue
            na = frozenset(np.flatnonzero(U[y] & adj[x]).tolist())
            pa = frozenset(np.flatnonzero(D[:, y]).tolist()) - {x}
            for size in range(len(na) + 1):
                for h in combinations(sorted(na), size):
                    base = (na - set(h)) | pa
                    delta = score.local(y, base) - score.local(y, base | {x})
                    if delta > _EPS:
                        out.append((delta, x, y, h, na))
    out.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    return out


def _apply_insert(labels, D, U, x, y, t):
    D2, U2 = D.copy(), U.copy()
    D2[x, y] = True
    for v in t:
        U2[v, y] = U2[y, v] = False
        D2[v, y] = True
    return _recomplete(labels, D2, U2)


def _apply_delete(labels, D, U, x, y, h):
    D2, U2 = D.copy(), U.copy()
    D2[x, y] = False
    U2[x, y] = U2[y, x] = False
    for v in h:
        U2[y, v] = U2[v, y] = False
        D2[y, v] = True
        if U2[x, v]:
            U2[x, v] = U2[v, x] = False
            D2[x, v] = True
    return _recomplete(labels, D2, U2)


def ges(data: Dataset) -> Cpdag:
    """Two-phase greedy equivalence search (forward insertions, then deletions).

    Requires n >= d + 2 rows so every local regression in the score stays
    overdetermined; raises SampleSizeError otherwise.
    """
    d = data.d
    if d < 2:
        raise ParameterError("GES needs at least 2 variables")
    if data.n < d + 2:
        raise SampleSizeError(f"GES needs n >= d + 2 rows, got n={data.n}, d={d}")
    score = BicScore(data)
    labels = data.column_labels
    D = np.zeros((d, d), dtype=bool)
    U = np.zeros((d, d), dtype=bool)
    moves = 0
    while True:
        applied = False
        for delta, x, y, t, na in _forward_candidates(D, U, score):
            adj = D | D.T | U
            if not _clique(adj, na | set(t)):
                continue
            if not _blocked_path(D, U, y, x, na | set(t)):
                continue
            try:
                D, U = _apply_insert(labels, D, U, x, y, t)
            except ExtensionError:
                continue
            applied = True
            moves += 1
            break
        if not applied:
            break
    while True:
        applied = False
        for delta, x, y, h, na in _backward_candidates(D, U, score):
            if not _clique(D | D.T | U, na - set(h)):
                continue
            try:
                D, U = _apply_delete(labels, D, U, x, y, h)
            except ExtensionError:
                continue
            applied = True
            moves += 1
            break
        if not applied:
            break
    logger.info("ges: d=%d n=%d moves=%d edges=%d", d, data.n, moves, int(D.sum() + U.sum() // 2))
    return Cpdag(labels, D, U)

"""Shared brute-force oracles, deliberately independent of the package code."""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_dags(d: int):
    """Every DAG adjacency on d nodes, by filtering all 0/1 off-diagonal fills."""
    cells = [(i, j) for i in range(d) for j in range(d) if i != j]
    out = []
    for bits in itertools.product((False, True), repeat=len(cells)):
        adj = np.zeros((d, d), dtype=bool)
        for (i, j), b in zip(cells, bits):
            adj[i, j] = b
        if _acyclic_by_powers(adj):
            out.append(adj)
    return out


def _acyclic_by_powers(adj: np.ndarray) -> bool:
    # trace of A^k counts closed walks; any nonzero one means a cycle
    a = adj.astype(np.int64)
    p = a.copy()
    for _ in range(adj.shape[0]):
        if np.trace(p):
            return False
        p = p @ a
    return True


def oracle_v_structures(adj: np.ndarray) -> frozenset:
    """Unshielded colliders (i, k, j) with i < j, from the definition."""
    d = adj.shape[0]
    sk = adj | adj.T
    found = set()
    for k in range(d):
        ins = np.flatnonzero(adj[:, k])
        for i, j in itertools.combinations(ins.tolist(), 2):
            if not sk[i, j]:
                found.add((min(i, j), k, max(i, j)))
    return frozenset(found)


def oracle_mec_key(adj: np.ndarray) -> tuple:
    """Markov equivalence invariant: (skeleton, v-structures)."""
    return ((adj | adj.T).tobytes(), oracle_v_structures(adj))


def oracle_mec_classes(d: int) -> dict:
    """All DAGs on d nodes grouped into Markov equivalence classes."""
    classes: dict = {}
    for adj in brute_force_dags(d):
        classes.setdefault(oracle_mec_key(adj), []).append(adj)
    return classes


def oracle_path_effect(weights: np.ndarray, treatment: int, outcome: int) -> float:
    """Total causal effect as the sum over all directed paths of the product
    of edge weights, enumerated recursively."""
    d = weights.shape[0]

    def walk(node, acc):
        if node == outcome:
            return acc
        total = 0.0
        for nxt in range(d):
            if weights[node, nxt] != 0.0:
                total += walk(nxt, acc * weights[node, nxt])
        return total

    if treatment == outcome:
        return 1.0
    return walk(treatment, 1.0)


def random_weighted_sample(rng, size=None):
    """A (values, weights) pair with positive weights summing to one."""
    m = int(size if size is not None else rng.integers(1, 12))
    values = rng.normal(size=m) * rng.uniform(0.5, 3.0)
    weights = rng.uniform(0.1, 1.0, size=m)
    return values, weights / weights.sum()

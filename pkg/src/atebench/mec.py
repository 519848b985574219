"""CPDAG computation and full enumeration of a DAG's Markov equivalence class."""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import CyclicGraphError, MecCapacityError, ParameterError, SchemaError
from .graphs import (
    Cpdag,
    Dag,
    _meek_close,
    _pdag_v_structures,
    format_edgelist,
    load_dag,
    v_structures,
)

DEFAULT_MEC_CAP = 100_000


class MecEnumeration:
    """A DAG, its CPDAG, and every DAG Markov equivalent to it."""

    __slots__ = ("source", "cpdag", "members", "cap")

    def __init__(self, source: Dag, cpdag: Cpdag, members: list[Dag], cap: int):
        self.source = source
        self.cpdag = cpdag
        self.members = members
        self.cap = cap

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __repr__(self) -> str:
        return f"MecEnumeration(d={self.source.num_nodes}, members={len(self.members)})"


def cpdag_of(g: Dag) -> Cpdag:
    """The completed PDAG of g: v-structure edges kept directed, the rest
    oriented only where the Meek rules compel them."""
    d = g.num_nodes
    directed = np.zeros((d, d), dtype=bool)
    for i, k, j in v_structures(g):
        directed[i, k] = True
        directed[j, k] = True
    undirected = g.skeleton() & ~(directed | directed.T)
    D, U, _ = _meek_close(directed, undirected, on_conflict="raise")
    return Cpdag(g.labels, D, U)


def _first_undirected(U: np.ndarray) -> tuple[int, int] | None:
    rows, cols = np.nonzero(np.triu(U))
    if rows.size == 0:
        return None
    return int(rows[0]), int(cols[0])


def enumerate_mec(g: Dag, cap: int = DEFAULT_MEC_CAP) -> MecEnumeration:
    """All DAGs in g's Markov equivalence class, in a canonical order.

    Branches on the first undirected CPDAG edge, re-closes with the Meek
    rules, prunes inconsistent branches, and validates each leaf against the
    class skeleton and v-structure set.  Raises MecCapacityError once more
    than ``cap`` members have been found.
    """
    if cap < 1:
        raise ParameterError("cap must be >= 1")
    base = cpdag_of(g)
    target_vs = v_structures(g)
    found: list[Dag] = []
    stack: list[tuple[np.ndarray, np.ndarray]] = [(base.directed, base.undirected)]
    while stack:
        D, U = stack.pop()
        edge = _first_undirected(U)
        if edge is None:
            try:
                member = Dag(g.labels, D)
            except CyclicGraphError:
                continue
            if v_structures(member) == target_vs:
                found.append(member)
                if len(found) > cap:
                    raise MecCapacityError(cap, len(found))
            continue
        i, j = edge
        for a, b in ((i, j), (j, i)):
            D2 = D.copy()
            U2 = U.copy()
            D2[a, b] = True
            U2[a, b] = U2[b, a] = False
            D3, U3, conflicts = _meek_close(D2, U2, on_conflict="skip")
            if conflicts:
                continue
            if _pdag_v_structures(D3, U3) != target_vs:
                continue
            stack.append((D3, U3))
    found.sort(key=lambda dag: dag.adjacency.tobytes())
    members = found
    if not any(m == g for m in members):
        raise AssertionError("source DAG missing from its own equivalence class")
    return MecEnumeration(source=g, cpdag=base, members=members, cap=cap)


# ---------------------------------------------------------------------------
# persistence: directory of edge-list files plus a manifest with counts
# ---------------------------------------------------------------------------


def save_mec(enumeration: MecEnumeration, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    width = max(4, len(str(len(enumeration.members))))
    names = []
    for idx, member in enumerate(enumeration.members):
        name = f"member_{idx:0{width}d}.txt"
        with open(os.path.join(directory, name), "w", encoding="utf-8") as fh:
            fh.write(format_edgelist(member))
        names.append(name)
    manifest = {
        "member_count": len(enumeration.members),
        "files": names,
        "cap": enumeration.cap,
        "node_labels": list(enumeration.source.labels),
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mec_members(directory) -> list[Dag]:
    manifest_path = os.path.join(directory, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise SchemaError(f"{directory}: missing manifest.json") from exc
    members = [load_dag(os.path.join(directory, name)) for name in manifest["files"]]
    if len(members) != manifest.get("member_count"):
        raise SchemaError(f"{directory}: manifest count disagrees with file list")
    labels = tuple(manifest.get("node_labels", members[0].labels if members else ()))
    for m in members:
        if m.labels != labels:
            raise SchemaError(f"{directory}: inconsistent node labels across members")
    return members

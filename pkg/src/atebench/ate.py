"""Backdoor-adjustment ATE estimation: single queries and the full pair sweep."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import DegenerateDataError, ParameterError, SampleSizeError, SchemaError
from .graphs import Dag
from .kernels import RIDGE, ate_sweep_kernel, transitive_closure_batch
from .scm import Dataset

logger = logging.getLogger(__name__)

TRUE_MEC_TAG = "true-mec"


class AteQuery:
    """One ordered treatment/outcome pair with the two intervention values."""

    __slots__ = ("treatment", "outcome", "treatment_value_b", "reference_value_a")

    def __init__(
        self,
        treatment: int,
        outcome: int,
        treatment_value_b: float = 1.0,
        reference_value_a: float = 0.0,
    ):
        if treatment == outcome:
            raise ParameterError("treatment and outcome must differ")
        self.treatment = int(treatment)
        self.outcome = int(outcome)
        self.treatment_value_b = float(treatment_value_b)
        self.reference_value_a = float(reference_value_a)

    @property
    def contrast(self) -> float:
        return self.treatment_value_b - self.reference_value_a

    def _key(self):
        return (self.treatment, self.outcome, self.treatment_value_b, self.reference_value_a)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AteQuery):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"AteQuery(t={self.treatment}, y={self.outcome})"


class AteSampleSet:
    """The weighted ATE values one DAG bag induces for a single query."""

    __slots__ = ("query", "values", "weights", "source_tag")

    def __init__(self, query: AteQuery, values, weights, source_tag: str):
        v = np.asarray(values, dtype=float).copy()
        w = np.asarray(weights, dtype=float).copy()
        if v.ndim != 1 or v.shape != w.shape or v.size == 0:
            raise ParameterError("values and weights must be equal-length non-empty vectors")
        if np.any(w <= 0.0):
            raise ParameterError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError(f"weights must sum to 1, got {w.sum()!r}")
        if not np.all(np.isfinite(v)):
            raise DegenerateDataError("non-finite ATE values in sample set")
        v.setflags(write=False)
        w.setflags(write=False)
        self.query = query
        self.values = v
        self.weights = w
        self.source_tag = source_tag

    def __len__(self) -> int:
        return int(self.values.size)

    def __repr__(self) -> str:
        return f"AteSampleSet({self.query!r}, m={len(self)}, tag={self.source_tag!r})"


def backdoor_adjustment_set(g: Dag, q: AteQuery) -> set[int]:
    """Parents of the treatment: a valid backdoor set in any latent-free DAG."""
    return g.parents(q.treatment)


def estimate_ate(g: Dag, data: Dataset, q: AteQuery) -> float:
    """Linear-regression backdoor estimate of the query's ATE under graph g.

    Regresses the outcome on [1, treatment, adjustment set] and scales the
    treatment coefficient by the contrast b - a.  When the outcome is not a
    descendant of the treatment the effect is exactly 0.0, no regression run.
    """
    if g.labels != data.column_labels:
        raise SchemaError("graph and dataset labels differ")
    t, y = q.treatment, q.outcome
    if not 0 <= y < g.num_nodes:
        raise ParameterError(f"outcome index {y} out of range")
    if not g.descendants_matrix()[t, y]:
        return 0.0
    z = sorted(backdoor_adjustment_set(g, q))
    if data.n < len(z) + 2:
        raise SampleSizeError(f"need n >= {len(z) + 2} rows for |adjustment|={len(z)}, got {data.n}")
    x = data.values
    xc = x - x.mean(axis=0)
    idx = [t] + z
    a = xc[:, idx].T @ xc[:, idx]
    b = xc[:, idx].T @ xc[:, y]
    try:
        coef = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        lam = RIDGE * (1.0 + np.abs(np.diag(a)).mean())
        logger.warning(
            "rank-deficient design for treatment=%d adjustment=%s; ridge fallback", t, z
        )
        coef = np.linalg.solve(a + lam * np.eye(len(idx)), b)
    return float(coef[0]) * q.contrast


def _bag_parts(dag_bag):
    """(labels, dags, weights, tag) from a posterior sample or MEC enumeration."""
    if hasattr(dag_bag, "members"):
        dags = list(dag_bag.members)
        weights = np.full(len(dags), 1.0 / len(dags))
        tag = TRUE_MEC_TAG
    elif hasattr(dag_bag, "dags"):
        dags = list(dag_bag.dags)
        weights = np.asarray(dag_bag.weights, dtype=float)
        tag = dag_bag.method_tag
    else:
        raise ParameterError(f"not a DAG bag: {type(dag_bag).__name__}")
    if not dags:
        raise ParameterError("empty DAG bag")
    return dags[0].labels, dags, weights, tag


def _sweep_chunk(args):
    gram, stack = args
    closure = transitive_closure_batch(stack)
    return ate_sweep_kernel(gram, stack, closure)


def sweep(
    dag_bag,
    data: Dataset,
    workers: int = 1,
    treatment_value_b: float = 1.0,
    reference_value_a: float = 0.0,
) -> dict[AteQuery, AteSampleSet]:
    """ATE sample sets for every ordered pair under every DAG in the bag.

    One value per (pair, DAG); weights inherited from the bag.  The result is
    bit-identical for any workers >= 1: the per-DAG solves are independent and
    chunked results are concatenated back in canonical order.
    """
    if workers < 1:
        raise ParameterError("workers must be >= 1")
    labels, dags, weights, tag = _bag_parts(dag_bag)
    if labels != data.column_labels:
        raise SchemaError("DAG bag labels do not match dataset columns")
    d = len(labels)
    m = len(dags)
    stack = np.stack([g.adjacency for g in dags])
    x = data.values
    xc = x - x.mean(axis=0)
    gram = np.ascontiguousarray(xc.T @ xc)
    if workers == 1 or m < 2 * workers:
        unit = _sweep_chunk((gram, stack))
    else:
        bounds = np.linspace(0, m, workers + 1).astype(int)
        chunks = [(gram, stack[bounds[k]:bounds[k + 1]]) for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            unit = np.concatenate(list(pool.map(_sweep_chunk, chunks)))
    bad = np.argwhere(~np.isfinite(unit))
    if bad.size:
        g0, t0, y0 = bad[0]
        raise DegenerateDataError(
            f"ATE solve failed even with ridge for dag={g0}, treatment={t0}, outcome={y0}"
        )
    contrast = treatment_value_b - reference_value_a
    out: dict[AteQuery, AteSampleSet] = {}
    for t in range(d):
        for y in range(d):
            if t == y:
                continue
            q = AteQuery(t, y, treatment_value_b, reference_value_a)
            out[q] = AteSampleSet(q, unit[:, t, y] * contrast, weights, tag)
    return out


# ---------------------------------------------------------------------------
# columnar persistence: the contract between the sweep and the metrics stage
# ---------------------------------------------------------------------------

ATE_CSV_HEADER = ["treatment", "outcome", "dag_index", "ate_value", "weight"]


def save_ate_samples(samples: dict[AteQuery, AteSampleSet], labels, path) -> None:
    """Rows ordered by (treatment index, outcome index, dag_index)."""
    labels = tuple(labels)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATE_CSV_HEADER)
        for q in sorted(samples, key=lambda q: (q.treatment, q.outcome)):
            s = samples[q]
            for k in range(len(s)):
                writer.writerow(
                    [
                        labels[q.treatment],
                        labels[q.outcome],
                        k,
                        repr(float(s.values[k])),
                        repr(float(s.weights[k])),
                    ]
                )


def load_ate_samples(
    path,
    labels,
    source_tag: str,
    treatment_value_b: float = 1.0,
    reference_value_a: float = 0.0,
) -> dict[AteQuery, AteSampleSet]:
    labels = tuple(labels)
    index = {lab: k for k, lab in enumerate(labels)}
    by_pair: dict[tuple[int, int], list[tuple[int, float, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = row
                if header != ATE_CSV_HEADER:
                    raise SchemaError(
                        f"{path}: expected header {ATE_CSV_HEADER}, got {header}"
                    )
                continue
            if len(row) != 5:
                raise SchemaError(f"{path}:{lineno}: expected 5 columns")
            t_lab, y_lab, k, v, w = row
            if t_lab not in index or y_lab not in index:
                raise SchemaError(f"{path}:{lineno}: unknown node label")
            try:
                entry = (int(k), float(v), float(w))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: malformed numeric field") from exc
            by_pair.setdefault((index[t_lab], index[y_lab]), []).append(entry)
    if header is None:
        raise SchemaError(f"{path}: missing header row")
    out: dict[AteQuery, AteSampleSet] = {}
    for (t, y), entries in by_pair.items():
        entries.sort()
        if [e[0] for e in entries] != list(range(len(entries))):
            raise SchemaError(f"{path}: dag_index gap for pair ({labels[t]}, {labels[y]})")
        q = AteQuery(t, y, treatment_value_b, reference_value_a)
        out[q] = AteSampleSet(
            q, [e[1] for e in entries], [e[2] for e in entries], source_tag
        )
    return out

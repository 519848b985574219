"""Numerical kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time: the compiled path is used when
numba imports cleanly and the ATEBENCH_DISABLE_NUMBA environment variable
is unset (values "" and "0" also leave it enabled).  Each backend is fully
deterministic; across backends results agree numerically but are not
guaranteed bit-for-bit identical.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit, types
    from numba.typed import Dict as _TypedDict

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    njit = types = _TypedDict = None
    HAS_NUMBA = False

RIDGE = 1e-8


def _disabled_by_env() -> bool:
    return os.environ.get("ATEBENCH_DISABLE_NUMBA", "") not in ("", "0")


NUMBA_ENABLED = HAS_NUMBA and not _disabled_by_env()


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def _compile(fn):
    if NUMBA_ENABLED:
        return njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# small dense linear solves (shared by the sweep and the sampler)
# ---------------------------------------------------------------------------


def _solve_multi(a, b):
    """Gaussian elimination with partial pivoting, multi-RHS.

    Inputs are copied, never mutated.  Returns (x, ok); ok is False when a
    pivot underflows the relative threshold (caller retries with a ridge).
    """
    k = a.shape[0]
    r = b.shape[1]
    u = a.copy()
    x = b.copy()
    scale = 0.0
    for i in range(k):
        for j in range(k):
            m = abs(u[i, j])
            if m > scale:
                scale = m
    if scale == 0.0:
        return x, k == 0
    tiny = scale * 1e-13
    for col in range(k):
        piv = col
        best = abs(u[col, col])
        for row in range(col + 1, k):
            m = abs(u[row, col])
            if m > best:
                best = m
                piv = row
        if best <= tiny:
            return x, False
        if piv != col:
            for c in range(k):
                tmp = u[col, c]
                u[col, c] = u[piv, c]
                u[piv, c] = tmp
            for c in range(r):
                tmp = x[col, c]
                x[col, c] = x[piv, c]
                x[piv, c] = tmp
        inv_p = 1.0 / u[col, col]
        for row in range(col + 1, k):
            factor = u[row, col] * inv_p
            if factor != 0.0:
                u[row, col] = 0.0
                for c in range(col + 1, k):
                    u[row, c] -= factor * u[col, c]
                for c in range(r):
                    x[row, c] -= factor * x[col, c]
    for col in range(k - 1, -1, -1):
        inv_p = 1.0 / u[col, col]
        for c in range(r):
            acc = x[col, c]
            for row in range(col + 1, k):
                acc -= u[col, row] * x[row, c]
            x[col, c] = acc * inv_p
    return x, True


_solve_multi = _compile(_solve_multi)


# ---------------------------------------------------------------------------
# reachability
# ---------------------------------------------------------------------------


def _reach(adj):
    """Floyd-Warshall closure: paths of length >= 1."""
    d = adj.shape[0]
    out = adj.copy()
    for k in range(d):
        for i in range(d):
            if out[i, k]:
                for j in range(d):
                    if out[k, j]:
                        out[i, j] = True
    return out


_reach = _compile(_reach)


def _closure_batch_loops(stack):
    m = stack.shape[0]
    d = stack.shape[1]
    out = np.zeros((m, d, d), np.bool_)
    for g in range(m):
        out[g] = _reach(stack[g])
    return out


_closure_batch_loops = _compile(_closure_batch_loops)


def _closure_one_numpy(adj):
    out = adj.copy()
    while True:
        nxt = out | (out @ out)
        if np.array_equal(nxt, out):
            return out
        out = nxt


def transitive_closure_batch(stack) -> np.ndarray:
    """(m, d, d) bool adjacency stack -> (m, d, d) bool reachability stack."""
    stack = np.ascontiguousarray(stack, dtype=bool)
    if NUMBA_ENABLED:
        return _closure_batch_loops(stack)
    out = np.empty_like(stack)
    for g in range(stack.shape[0]):
        out[g] = _closure_one_numpy(stack[g])
    return out


# ---------------------------------------------------------------------------
# the adjustment sweep
# ---------------------------------------------------------------------------


def _sweep_loops(gram, stack, closure, out):
    m = stack.shape[0]
    d = stack.shape[1]
    for g in range(m):
        for t in range(d):
            npa = 0
            for i in range(d):
                if stack[g, i, t]:
                    npa += 1
            k = npa + 1
            idx = np.empty(k, np.int64)
            idx[0] = t
            p = 1
            for i in range(d):
                if stack[g, i, t]:
                    idx[p] = i
                    p += 1
            a = np.empty((k, k))
            b = np.empty((k, d))
            for r in range(k):
                for c in range(k):
                    a[r, c] = gram[idx[r], idx[c]]
                for c in range(d):
                    b[r, c] = gram[idx[r], c]
            x, ok = _solve_multi(a, b)
            if not ok:
                lam = 0.0
                for r in range(k):
                    lam += abs(a[r, r])
                lam = RIDGE * (1.0 + lam / k)
                for r in range(k):
                    a[r, r] += lam
                x, ok = _solve_multi(a, b)
            for y in range(d):
                if y == t or not closure[g, t, y]:
                    out[g, t, y] = 0.0
                elif ok:
                    out[g, t, y] = x[0, y]
                else:
                    out[g, t, y] = np.nan


_sweep_loops = _compile(_sweep_loops)


def _sweep_numpy(gram, stack, closure, out):
    m, d, _ = stack.shape
    for g in range(m):
        adj = stack[g]
        for t in range(d):
            pa = np.flatnonzero(adj[:, t])
            idx = np.concatenate(([t], pa))
            a = gram[np.ix_(idx, idx)]
            b = gram[idx, :]
            try:
                x = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                lam = RIDGE * (1.0 + np.abs(np.diag(a)).mean())
                try:
                    x = np.linalg.solve(a + lam * np.eye(len(idx)), b)
                except np.linalg.LinAlgError:
                    x = np.full_like(b, np.nan)
            row = np.where(closure[g, t], x[0], 0.0)
            row[t] = 0.0
            out[g, t] = row


def ate_sweep_kernel(gram, stack, closure) -> np.ndarray:
    """Unit-contrast effects for every (graph, treatment, outcome) triple.

    gram is the centered Gram matrix of the dataset.  For each graph g and
    treatment t the regressors are t plus its parents in g; out[g, t, y] is
    the coefficient on t when y is regressed on them, forced to exactly 0.0
    when y is not a descendant of t, and NaN only if even the ridge-adjusted
    solve fails.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    stack = np.ascontiguousarray(stack, dtype=bool)
    closure = np.ascontiguousarray(closure, dtype=bool)
    m, d, _ = stack.shape
    out = np.empty((m, d, d))
    if NUMBA_ENABLED:
        _sweep_loops(gram, stack, closure, out)
    else:
        _sweep_numpy(gram, stack, closure, out)
    return out


# ---------------------------------------------------------------------------
# weighted 1-D Wasserstein distance
# ---------------------------------------------------------------------------


def _wd_merge(xs, wx, ys, wy):
    nx = xs.shape[0]
    ny = ys.shape[0]
    i = 0
    j = 0
    fx = 0.0
    fy = 0.0
    prev = xs[0] if xs[0] < ys[0] else ys[0]
    total = 0.0
    while i < nx or j < ny:
        if j >= ny or (i < nx and xs[i] <= ys[j]):
            t = xs[i]
        else:
            t = ys[j]
        total += abs(fx - fy) * (t - prev)
        prev = t
        while i < nx and xs[i] == t:
            fx += wx[i]
            i += 1
        while j < ny and ys[j] == t:
            fy += wy[j]
            j += 1
    return total


_wd_merge = _compile(_wd_merge)


def _wd_numpy(xs, wx, ys, wy):
    grid = np.concatenate([xs, ys])
    grid.sort(kind="mergesort")
    deltas = np.diff(grid)
    cx = np.concatenate([[0.0], np.cumsum(wx)])
    cy = np.concatenate([[0.0], np.cumsum(wy)])
    ix = np.searchsorted(xs, grid[:-1], side="right")
    iy = np.searchsorted(ys, grid[:-1], side="right")
    return float(np.sum(np.abs(cx[ix] - cy[iy]) * deltas))


def weighted_wasserstein(xs, wx, ys, wy) -> float:
    """First Wasserstein distance between two weighted atom sets.

    Supports must already be sorted ascending and each weight vector must
    sum to one; validation belongs to the caller.
    """
    xs = np.ascontiguousarray(xs, dtype=float)
    wx = np.ascontiguousarray(wx, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    wy = np.ascontiguousarray(wy, dtype=float)
    if NUMBA_ENABLED:
        return float(_wd_merge(xs, wx, ys, wy))
    return _wd_numpy(xs, wx, ys, wy)


# ---------------------------------------------------------------------------
# structure sampler chain
# ---------------------------------------------------------------------------


def _local_bic(gram, n_rows, node, mask, cache):
    key = (node << 52) | mask
    if key in cache:
        return cache[key]
    d = gram.shape[0]
    npa = 0
    for i in range(d):
        if (mask >> i) & 1:
            npa += 1
    syy = gram[node, node]
    rss = syy
    if npa > 0:
        idx = np.empty(npa, np.int64)
        p = 0
        for i in range(d):
            if (mask >> i) & 1:
                idx[p] = i
                p += 1
        a = np.empty((npa, npa))
        b = np.empty((npa, 1))
        for r in range(npa):
            for c in range(npa):
                a[r, c] = gram[idx[r], idx[c]]
            b[r, 0] = gram[idx[r], node]
        x, ok = _solve_multi(a, b)
        if not ok:
            lam = 0.0
            for r in range(npa):
                lam += abs(a[r, r])
            lam = RIDGE * (1.0 + lam / npa)
            for r in range(npa):
                a[r, r] += lam
            x, ok = _solve_multi(a, b)
        for r in range(npa):
            rss -= b[r, 0] * x[r, 0]
    floor = 1e-12 * (syy if syy > 1.0 else 1.0)
    if rss < floor:
        rss = floor
    score = -0.5 * n_rows * math.log(rss / n_rows) - 0.5 * (npa + 1) * math.log(n_rows)
    cache[key] = score
    return score


_local_bic = _compile(_local_bic)


def _reverse_ok(adj, i, j):
    """True when reversing i -> j keeps the graph acyclic: no alternative
    directed path i ~> j survives once the edge itself is ignored."""
    d = adj.shape[0]
    stack = np.empty(d, np.int64)
    visited = np.zeros(d, np.bool_)
    top = 0
    stack[top] = i
    top += 1
    visited[i] = True
    while top > 0:
        top -= 1
        u = stack[top]
        for v in range(d):
            if adj[u, v] and not (u == i and v == j):
                if v == j:
                    return False
                if not visited[v]:
                    visited[v] = True
                    stack[top] = v
                    top += 1
    return True


_reverse_ok = _compile(_reverse_ok)


def _nth_move(adj, reach, pick):
    """Enumerate valid single-edge moves in a fixed order.

    pick < 0 counts them; pick >= 0 returns (count_so_far, kind, i, j) for
    the pick-th move.  Kinds: 0 add i->j, 1 delete i->j, 2 reverse i->j.
    """
    d = adj.shape[0]
    count = 0
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            if adj[i, j]:
                if count == pick:
                    return count, 1, i, j
                count += 1
                if _reverse_ok(adj, i, j):
                    if count == pick:
                        return count, 2, i, j
                    count += 1
            elif not adj[j, i] and not reach[j, i]:
                if count == pick:
                    return count, 0, i, j
                count += 1
    return count, -1, -1, -1


_nth_move = _compile(_nth_move)


def _mcmc_loop(gram, n_rows, steps, burn_in, thin, uniforms, samples_out, cache):
    d = gram.shape[0]
    adj = np.zeros((d, d), np.bool_)
    masks = np.zeros(d, np.int64)
    local = np.empty(d)
    for k in range(d):
        local[k] = _local_bic(gram, n_rows, k, 0, cache)
    accepted = 0
    rec = 0
    for s in range(1, steps + 1):
        reach = _reach(adj)
        n_moves, _, _, _ = _nth_move(adj, reach, -1)
        if n_moves > 0:
            pick = int(uniforms[s - 1, 0] * n_moves)
            if pick >= n_moves:
                pick = n_moves - 1
            _, kind, mi, mj = _nth_move(adj, reach, pick)
            new_i = 0.0
            new_j = 0.0
            if kind == 0:
                new_j = _local_bic(gram, n_rows, mj, masks[mj] | (1 << mi), cache)
                delta = new_j - local[mj]
                adj[mi, mj] = True
            elif kind == 1:
                new_j = _local_bic(gram, n_rows, mj, masks[mj] & ~(1 << mi), cache)
                delta = new_j - local[mj]
                adj[mi, mj] = False
            else:
                new_j = _local_bic(gram, n_rows, mj, masks[mj] & ~(1 << mi), cache)
                new_i = _local_bic(gram, n_rows, mi, masks[mi] | (1 << mj), cache)
                delta = (new_j - local[mj]) + (new_i - local[mi])
                adj[mi, mj] = False
                adj[mj, mi] = True
            reach2 = _reach(adj)
            n_moves2, _, _, _ = _nth_move(adj, reach2, -1)
            log_alpha = delta + math.log(n_moves) - math.log(n_moves2)
            u = uniforms[s - 1, 1]
            if u < 1e-300:
                u = 1e-300
            if math.log(u) < log_alpha:
                accepted += 1
                if kind == 0:
                    masks[mj] |= 1 << mi
                    local[mj] = new_j
                elif kind == 1:
                    masks[mj] &= ~(1 << mi)
                    local[mj] = new_j
                else:
                    masks[mj] &= ~(1 << mi)
                    masks[mi] |= 1 << mj
                    local[mj] = new_j
                    local[mi] = new_i
            else:
                if kind == 0:
                    adj[mi, mj] = False
                elif kind == 1:
                    adj[mi, mj] = True
                else:
                    adj[mj, mi] = False
                    adj[mi, mj] = True
        if s > burn_in and (s - burn_in) % thin == 0:
            samples_out[rec] = adj
            rec += 1
    return accepted


_mcmc_loop = _compile(_mcmc_loop)


def make_score_cache():
    """Backend-appropriate mapping from (node, parent-mask) keys to scores."""
    if NUMBA_ENABLED:
        return _TypedDict.empty(key_type=types.int64, value_type=types.float64)
    return {}


def mcmc_chain(gram, n_rows: int, steps: int, burn_in: int, thin: int, uniforms, cache=None):
    """Metropolis-Hastings chain over DAGs targeting exp(BIC).

    uniforms must be a (steps, 2) array of pre-drawn U(0,1) draws: column 0
    selects the move, column 1 decides acceptance.  Returns (samples,
    accepted) where samples is the (n_kept, d, d) bool stack recorded after
    burn-in at the thinning stride.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    d = gram.shape[0]
    uniforms = np.ascontiguousarray(uniforms, dtype=float)
    if uniforms.shape != (steps, 2):
        raise ValueError(f"uniforms must have shape ({steps}, 2)")
    if d > 50:
        raise ValueError("sampler parent-set masks support at most 50 nodes")
    n_kept = max((steps - burn_in) // thin, 0)
    samples = np.zeros((n_kept, d, d), np.bool_)
    if cache is None:
        cache = make_score_cache()
    accepted = _mcmc_loop(gram, n_rows, steps, burn_in, thin, uniforms, samples, cache)
    return samples, int(accepted)

"""Maximum flow for bipartite supply/demand networks with float capacities.

The network is: source -> left i (capacity ``supply[i]``), left i -> right j
(unbounded, one arc per listed pair), right j -> sink (capacity ``demand[j]``).
This is the shape needed by the defect form of Hall's theorem: the maximum
flow equals ``supply.sum() - max_A (supply(A) - demand(N(A)))``.

``scipy.sparse.csgraph.maximum_flow`` only accepts int32 capacities, which is
too coarse for 1e-9 accuracy, hence the small Dinic implementation below.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _dinic(n_left, n_right, supply, demand, arc_l, arc_r, tol):
    n = n_left + n_right + 2
    s = 0
    t = n - 1
    m = n_left + n_right + arc_l.shape[0]
    # forward edge k has id 2k, its reverse 2k+1
    eto = np.empty(2 * m, np.int64)
    cap = np.empty(2 * m, np.float64)
    efrom = np.empty(2 * m, np.int64)
    k = 0
    for i in range(n_left):
        efrom[2 * k], eto[2 * k], cap[2 * k] = s, 1 + i, supply[i]
        efrom[2 * k + 1], eto[2 * k + 1], cap[2 * k + 1] = 1 + i, s, 0.0
        k += 1
    for j in range(n_right):
        efrom[2 * k], eto[2 * k], cap[2 * k] = 1 + n_left + j, t, demand[j]
        efrom[2 * k + 1], eto[2 * k + 1], cap[2 * k + 1] = t, 1 + n_left + j, 0.0
        k += 1
    for a in range(arc_l.shape[0]):
        u = 1 + arc_l[a]
        v = 1 + n_left + arc_r[a]
        efrom[2 * k], eto[2 * k], cap[2 * k] = u, v, np.inf
        efrom[2 * k + 1], eto[2 * k + 1], cap[2 * k + 1] = v, u, 0.0
        k += 1

    # CSR adjacency over edge ids
    deg = np.zeros(n + 1, np.int64)
    for e in range(2 * m):
        deg[efrom[e] + 1] += 1
    for v in range(n):
        deg[v + 1] += deg[v]
    adj = np.empty(2 * m, np.int64)
    fill = deg[:-1].copy()
    for e in range(2 * m):
        u = efrom[e]
        adj[fill[u]] = e
        fill[u] += 1

    level = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    total = 0.0
    while True:
        level[:] = -1
        level[s] = 0
        qh = 0
        qt = 1
        queue[0] = s
        while qh < qt:
            u = queue[qh]
            qh += 1
            for p in range(deg[u], deg[u + 1]):
                e = adj[p]
                v = eto[e]
                if level[v] < 0 and cap[e] > tol:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            break
        for v in range(n):
            it[v] = deg[v]
        depth = 0
        u = s
        while True:
            if u == t:
                f = np.inf
                for d in range(depth):
                    if cap[path[d]] < f:
                        f = cap[path[d]]
                cut = depth
                for d in range(depth):
                    e = path[d]
                    cap[e] -= f
                    cap[e ^ 1] += f
                    if cap[e] <= tol and d < cut:
                        cut = d
                total += f
                depth = cut
                u = s if depth == 0 else eto[path[depth - 1]]
                continue
            advanced = False
            while it[u] < deg[u + 1]:
                e = adj[it[u]]
                v = eto[e]
                if cap[e] > tol and level[v] == level[u] + 1:
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if advanced:
                continue
            # dead end: prune u and retreat
            level[u] = -1
            if depth == 0:
                break
            depth -= 1
            u = efrom[path[depth]]
            it[u] += 1
    return total


def bipartite_max_flow(supply, demand, arc_l, arc_r) -> float:
    """Maximum flow through the listed left->right arcs."""
    supply = np.ascontiguousarray(supply, dtype=np.float64)
    demand = np.ascontiguousarray(demand, dtype=np.float64)
    arc_l = np.ascontiguousarray(arc_l, dtype=np.int64)
    arc_r = np.ascontiguousarray(arc_r, dtype=np.int64)
    if arc_l.size == 0:
        return 0.0
    scale = max(float(supply.sum()), float(demand.sum()), 1.0)
    return float(_dinic(supply.size, demand.size, supply, demand, arc_l, arc_r, 1e-15 * scale))

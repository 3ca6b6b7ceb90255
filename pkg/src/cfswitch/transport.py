"""Exact solver for small balanced transportation problems.

Primal transportation simplex on the spanning-tree basis: north-west corner
start, dual potentials from the tree, Bland's rule for entering and leaving
cells (no cycling under degeneracy).
"""
from __future__ import annotations

import numpy as np

from .errors import NumericError


def _potentials(C, basis, m, n):
    adj = [[] for _ in range(m + n)]
    for (i, j) in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.full(m + n, np.nan)  # u_i for rows, v_j for columns
    pot[0] = 0.0
    stack = [0]
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                if node < m:  # row -> column: v_j = c_ij - u_i
                    pot[nb] = C[node, nb - m] - pot[node]
                else:  # column -> row
                    pot[nb] = C[nb, node - m] - pot[node]
                stack.append(nb)
    return pot[:m], pot[m:], adj


def _tree_path(adj, start, goal):
    """Node path from start to goal in the basis tree."""
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transport(C, a, b, max_iter: int = 10000):
    """Minimise <C, P> over couplings P >= 0 with row sums a and column sums b.

    Returns (cost, plan). ``a`` and ``b`` must have equal totals.
    """
    C = np.asarray(C, dtype=float)
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    m, n = C.shape
    if a.shape != (m,) or b.shape != (n,):
        raise ValueError("marginals do not match the cost matrix")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
        raise ValueError("unbalanced transportation problem")
    b *= a.sum() / b.sum()

    plan = np.zeros((m, n))
    basis = []
    i = j = 0
    s, d = a.copy(), b.copy()
    while True:
        x = min(s[i], d[j])
        plan[i, j] = x
        basis.append((i, j))
        s[i] -= x
        d[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and s[i] <= d[j]):
            i += 1
        else:
            j += 1

    scale = max(1.0, float(np.abs(C).max()))
    for _ in range(max_iter):
        u, v, adj = _potentials(C, basis, m, n)
        reduced = C - u[:, None] - v[None, :]
        in_basis = np.zeros((m, n), dtype=bool)
        for cell in basis:
            in_basis[cell] = True
        candidates = np.argwhere((reduced < -1e-12 * scale) & ~in_basis)
        if len(candidates) == 0:
            return float(np.sum(plan * C)), plan
        ei, ej = map(int, candidates[0])  # Bland: lowest index enters
        path = _tree_path(adj, m + ej, ei)
        cells = []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cells.append((q, p - m) if p >= m else (p, q - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(plan[c] for c in minus)
        leaving = min((c for c in minus if plan[c] == theta), key=lambda c: c[0] * n + c[1])
        for c in minus:
            plan[c] -= theta
        for c in plus:
            plan[c] += theta
        plan[ei, ej] += theta
        plan[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ei, ej))
    raise NumericError("transportation simplex did not converge")

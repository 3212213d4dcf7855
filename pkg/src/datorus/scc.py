"""Iterative Tarjan strongly connected components on a CSR graph.

Components are numbered in the order Tarjan completes them, which is a
reverse topological order of the condensation: every edge between distinct
components goes from a higher id to a lower one.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _tarjan(indptr, indices):
    n = indptr.shape[0] - 1
    index = np.full(n, -1, np.int64)
    low = np.zeros(n, np.int64)
    on_stack = np.zeros(n, np.bool_)
    comp = np.full(n, -1, np.int64)
    stack = np.empty(n, np.int64)        # Tarjan's node stack
    call = np.empty(n, np.int64)         # explicit DFS call stack
    edge_pos = np.empty(n, np.int64)     # next edge to explore per frame
    sp = 0
    cp = 0
    counter = 0
    n_comp = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        call[0] = root
        edge_pos[0] = indptr[root]
        cp = 1
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp] = root
        sp += 1
        on_stack[root] = True
        while cp > 0:
            v = call[cp - 1]
            e = edge_pos[cp - 1]
            if e < indptr[v + 1]:
                edge_pos[cp - 1] = e + 1
                w = indices[e]
                if index[w] < 0:
                    index[w] = counter
                    low[w] = counter
                    counter += 1
                    stack[sp] = w
                    sp += 1
                    on_stack[w] = True
                    call[cp] = w
                    edge_pos[cp] = indptr[w]
                    cp += 1
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                cp -= 1
                if low[v] == index[v]:
                    while True:
                        sp -= 1
                        w = stack[sp]
                        on_stack[w] = False
                        comp[w] = n_comp
                        if w == v:
                            break
                    n_comp += 1
                if cp > 0:
                    u = call[cp - 1]
                    if low[v] < low[u]:
                        low[u] = low[v]
    return comp, n_comp


def strongly_connected_components(indptr, indices) -> tuple[np.ndarray, int]:
    """Component label per node and the number of components."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if indptr.shape[0] <= 1:
        return np.zeros(0, np.int64), 0
    return _tarjan(indptr, indices)

import numpy as np
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components

from datorus.scc import strongly_connected_components


def _csr(n, edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = sp.csr_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    m.sum_duplicates()
    m.sort_indices()
    return m


def _same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 60))
    m = draw(st.integers(0, 4 * n))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                          min_size=m, max_size=m))
    return n, edges


@given(graphs())
def test_matches_scipy(g):
    n, edges = g
    m = _csr(n, edges)
    comp, k = strongly_connected_components(m.indptr.astype(np.int64), m.indices.astype(np.int64))
    k_ref, ref = connected_components(m, directed=True, connection="strong")
    assert k == k_ref
    assert _same_partition(comp, ref)


@given(graphs())
def test_reverse_topological_numbering(g):
    n, edges = g
    m = _csr(n, edges)
    comp, _ = strongly_connected_components(m.indptr.astype(np.int64), m.indices.astype(np.int64))
    for a, b in edges:
        assert comp[a] >= comp[b]


def test_synthetic_fixture():
    # two 3-cycles joined by a bridge, plus an isolated node and a self-loop node
    edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (7, 7)]
    m = _csr(8, edges)
    comp, k = strongly_connected_components(m.indptr.astype(np.int64), m.indices.astype(np.int64))
    assert k == 4
    assert len({comp[0], comp[1], comp[2]}) == 1
    assert len({comp[3], comp[4], comp[5]}) == 1
    assert comp[0] > comp[3]


def test_long_path_no_recursion_limit():
    n = 1_000_000
    src = np.arange(n - 1)
    m = _csr(n, np.column_stack([src, src + 1]))
    comp, k = strongly_connected_components(m.indptr.astype(np.int64), m.indices.astype(np.int64))
    assert k == n
    assert comp[0] == n - 1 and comp[-1] == 0


def test_long_cycle_single_component():
    n = 500_000
    src = np.arange(n)
    m = _csr(n, np.column_stack([src, (src + 1) % n]))
    comp, k = strongly_connected_components(m.indptr.astype(np.int64), m.indices.astype(np.int64))
    assert k == 1 and np.all(comp == 0)


def test_random_large_against_scipy():
    rng = np.random.default_rng(0)
    n = 20_000
    e = rng.integers(0, n, size=(30_000, 2))
    m = _csr(n, e)
    comp, k = strongly_connected_components(m.indptr.astype(np.int64), m.indices.astype(np.int64))
    k_ref, ref = connected_components(m, directed=True, connection="strong")
    assert k == k_ref and _same_partition(comp, ref)

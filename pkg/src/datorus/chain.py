"""Box-cover transition graphs, SCC condensation and recurrent-set refinement.

Boxes are addressed by the dense linear index (ix * n + iy) * n + iz at a
given depth (n = 2**depth).  Graphs are stored in CSR form over the *active*
boxes, with targets given as positions in the sorted active list.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .scc import strongly_connected_components
from .torus import MAX_DEPTH, SampleScheme, box_centers, box_sample_offsets, box_triple

MAX_GRAPH_DEPTH = 9
MEMORY_LIMIT = 3 * 2 ** 30
EDGE_MAGIC = b"DAEDGES1"


class ChainError(RuntimeError):
    pass


@njit(cache=True)
def _edge_pass(images, pos, n, bloat, fill, indptr, out, witness, leak):
    """Count (fill=False) or write (fill=True) the out-edges of every box.

    images: (n_active, S, 3) image points in [0, 1); pos: dense box -> active
    position or -1.  A box is hit when its closed cube lies within ``bloat``
    of an image point on some lift; duplicates are removed with a marker.
    Hits on inactive boxes are not edges but set ``leak`` for the source.
    """
    n_act = images.shape[0]
    S = images.shape[1]
    marker = np.full(n_act, -1, np.int64)
    counts = np.zeros(n_act, np.int64)
    r = int(np.ceil(bloat * n)) + 1
    h = 1.0 / n
    b2 = bloat * bloat
    for i in range(n_act):
        k = indptr[i] if fill else 0
        for s in range(S):
            px = images[i, s, 0]
            py = images[i, s, 1]
            pz = images[i, s, 2]
            jx0 = int(np.floor(px * n))
            jy0 = int(np.floor(py * n))
            jz0 = int(np.floor(pz * n))
            for jx in range(jx0 - r, jx0 + r + 1):
                lo = jx * h
                dx = lo - px if px < lo else (px - lo - h if px > lo + h else 0.0)
                if dx * dx > b2:
                    continue
                for jy in range(jy0 - r, jy0 + r + 1):
                    lo = jy * h
                    dy = lo - py if py < lo else (py - lo - h if py > lo + h else 0.0)
                    if dx * dx + dy * dy > b2:
                        continue
                    for jz in range(jz0 - r, jz0 + r + 1):
                        lo = jz * h
                        dz = lo - pz if pz < lo else (pz - lo - h if pz > lo + h else 0.0)
                        if dx * dx + dy * dy + dz * dz > b2:
                            continue
                        b = ((jx % n) * n + (jy % n)) * n + (jz % n)
                        t = pos[b]
                        if t < 0:
                            leak[i] = True
                            continue
                        if marker[t] == i:
                            continue
                        marker[t] = i
                        if fill:
                            out[k] = t
                            witness[k] = s
                            k += 1
                        else:
                            counts[i] += 1
        if fill:
            # sort targets of this box, carrying witnesses along
            a = indptr[i]
            order = np.argsort(out[a:k])
            out[a:k] = out[a:k][order]
            witness[a:k] = witness[a:k][order]
    return counts


@dataclass
class TransitionGraph:
    depth: int
    active: np.ndarray           # sorted linear box indices, int64
    indptr: np.ndarray           # CSR over active positions
    indices: np.ndarray          # target positions, int32
    bloat: float
    samples_per_box: int
    seed: int
    witness: np.ndarray | None = field(default=None, repr=False)  # sample id per edge
    leaky: np.ndarray | None = field(default=None, repr=False)    # image reaches an inactive box

    @property
    def n_boxes(self) -> int:
        return len(self.active)

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    def successors(self, box: int) -> np.ndarray:
        """Linear indices of the targets of a box (given by linear index)."""
        i = int(np.searchsorted(self.active, box))
        if i >= len(self.active) or self.active[i] != box:
            raise KeyError(box)
        return self.active[self.indices[self.indptr[i]:self.indptr[i + 1]]]

    def edge_pairs(self) -> np.ndarray:
        """(n_edges, 2) array of linear box indices."""
        src = np.repeat(np.arange(self.n_boxes), np.diff(self.indptr))
        return np.column_stack([self.active[src], self.active[self.indices]])

    def position(self, boxes) -> np.ndarray:
        """Active positions of linear indices (-1 where not active)."""
        b = np.asarray(boxes, dtype=np.int64)
        i = np.clip(np.searchsorted(self.active, b), 0, max(len(self.active) - 1, 0))
        return np.where(self.active[i] == b, i, -1)


def sample_points(depth: int, active: np.ndarray, scheme: SampleScheme) -> np.ndarray:
    """Sample points (n_active, S, 3) of the given boxes."""
    h = 1.0 / (1 << depth)
    off = box_sample_offsets(scheme, len(active), depth)
    corner = box_triple(depth, active).astype(float)
    return (corner[:, None, :] + off) * h


def lipschitz_estimate(f, n: int = 4096, seed: int = 0) -> float:
    """Max sampled operator norm of Df, including the surgery support if any."""
    rng = np.random.default_rng(seed)
    x = rng.random((n, 3))
    if hasattr(f, "rho_out") and getattr(f.params, "enabled", False):
        from .surgery import chart_random, chart_to_torus
        x = np.concatenate([x, chart_to_torus(f, chart_random(f, n, rng))])
    return float(np.max(np.linalg.norm(f.jacobian(x), ord=2, axis=(1, 2))))


def default_bloat(f, depth: int, scheme: SampleScheme, lip: float | None = None) -> float:
    h = 1.0 / (1 << depth)
    lip = lipschitz_estimate(f) if lip is None else lip
    return 0.5 * np.sqrt(3) * h + lip * h / scheme.k


def memory_estimate(depth: int, n_active: int, samples: int, bloat: float) -> int:
    """Rough peak bytes of a graph build."""
    n = 1 << depth
    reach = (2 * bloat * n + 2) ** 3 * 0.6
    edges = n_active * min(reach * max(1, samples // 4), n_active)
    return int(8 * n ** 3 + n_active * samples * 24 + edges * 16)


def build_transition_graph(f, depth: int, scheme: SampleScheme | None = None,
                           bloat: float | None = None, seed: int = 0,
                           active=None, memory_limit: int = MEMORY_LIMIT,
                           chunk: int = 1 << 16) -> TransitionGraph:
    """Edge b -> b' iff some sample image of b lies within ``bloat`` of box b'."""
    scheme = scheme or SampleScheme(k=2, m=0, seed=seed)
    if not 1 <= depth <= min(MAX_GRAPH_DEPTH, MAX_DEPTH):
        raise ValueError(f"depth {depth} outside [1, {MAX_GRAPH_DEPTH}] (memory guard)")
    n = 1 << depth
    if active is None:
        active = np.arange(n ** 3, dtype=np.int64)
    active = np.unique(np.asarray(active, dtype=np.int64))
    if bloat is None:
        bloat = default_bloat(f, depth, scheme)
    if bloat < 0:
        raise ValueError("bloat must be non-negative")
    est = memory_estimate(depth, len(active), scheme.count, bloat)
    if est > memory_limit:
        raise ValueError(f"memory guard exceeded: estimated {est / 2**30:.2f} GiB "
                         f"> {memory_limit / 2**30:.2f} GiB")
    pos = np.full(n ** 3, -1, np.int64)
    pos[active] = np.arange(len(active))

    counts = np.zeros(len(active), np.int64)
    images = []
    for a in range(0, len(active), chunk):
        pts = sample_points(depth, active[a:a + chunk], scheme)
        img = f.forward(pts.reshape(-1, 3)).reshape(pts.shape)
        images.append(img)
    images = np.concatenate(images) if images else np.zeros((0, scheme.count, 3))
    dummy = np.zeros(0, np.int64)
    leak = np.zeros(len(active), np.bool_)
    counts = _edge_pass(images, pos, n, float(bloat), False, dummy, dummy,
                        np.zeros(0, np.int16), leak)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    out = np.empty(indptr[-1], np.int64)
    wit = np.empty(indptr[-1], np.int16)
    _edge_pass(images, pos, n, float(bloat), True, indptr, out, wit, leak)
    return TransitionGraph(depth, active, indptr, out.astype(np.int32), float(bloat),
                           scheme.count, seed, wit, leak)


@dataclass
class SccDecomposition:
    graph: TransitionGraph
    component: np.ndarray        # component id per active position
    n_components: int
    recurrent_component: np.ndarray   # bool per component
    cond_src: np.ndarray         # condensation edges (component ids)
    cond_dst: np.ndarray
    terminal_components: list

    @property
    def recurrent_mask(self) -> np.ndarray:
        return self.recurrent_component[self.component]

    @property
    def recurrent(self) -> np.ndarray:
        """Linear indices of recurrent boxes."""
        return self.graph.active[self.recurrent_mask]

    def boxes_of(self, comp: int) -> np.ndarray:
        return self.graph.active[self.component == comp]

    def component_of_box(self, box: int) -> int:
        p = self.graph.position([box])[0]
        return int(self.component[p]) if p >= 0 else -1

    def recurrent_components(self) -> list[int]:
        return [int(c) for c in np.nonzero(self.recurrent_component)[0]]


def scc_condense(g: TransitionGraph) -> SccDecomposition:
    comp, k = strongly_connected_components(g.indptr, g.indices)
    src = np.repeat(np.arange(g.n_boxes), np.diff(g.indptr))
    dst = g.indices.astype(np.int64)
    size = np.bincount(comp, minlength=k)
    rec = size > 1
    loops = src[src == dst]
    rec[comp[loops]] = True
    cs, cd = comp[src], comp[dst]
    cross = cs != cd
    pairs = np.unique(cs[cross] * k + cd[cross]) if k else np.zeros(0, np.int64)
    csrc, cdst = pairs // max(k, 1), pairs % max(k, 1)
    has_out = np.zeros(k, bool)
    has_out[csrc] = True
    terminal = [int(c) for c in np.nonzero(~has_out)[0]]
    return SccDecomposition(g, comp, int(k), rec, csrc, cdst, terminal)


def quasi_attractor_candidates(s: SccDecomposition) -> list[int]:
    """Recurrent components from which no other recurrent component is reachable.

    On a restricted box set, components with an image leaving the set are
    excluded: their missing edges make terminality unverifiable.
    """
    k = s.n_components
    reach = np.zeros(k, bool)      # reaches some recurrent component other than itself
    # Tarjan ids are a reverse topological order: successors have smaller ids
    order = np.argsort(s.cond_src, kind="stable")
    csrc, cdst = s.cond_src[order], s.cond_dst[order]
    start = np.searchsorted(csrc, np.arange(k + 1))
    for c in range(k):
        succ = cdst[start[c]:start[c + 1]]
        if len(succ):
            reach[c] = bool(np.any(s.recurrent_component[succ] | reach[succ]))
    ok = s.recurrent_component & ~reach
    if s.graph.leaky is not None and s.graph.leaky.any():
        ok &= np.bincount(s.component[s.graph.leaky], minlength=k) == 0
    return [int(c) for c in np.nonzero(ok)[0]]


def _reverse_csr(g: TransitionGraph):
    src = np.repeat(np.arange(g.n_boxes), np.diff(g.indptr))
    order = np.argsort(g.indices, kind="stable")
    rptr = np.concatenate([[0], np.cumsum(np.bincount(g.indices, minlength=g.n_boxes))])
    return rptr, src[order]


def attracting_neighborhoods(g: TransitionGraph, s: SccDecomposition, target: int) -> np.ndarray:
    """Forward-closed box set grown from a terminal component.

    Starts from the forward closure of the target, then repeatedly adds every
    box all of whose out-edges already land in the set.  Returns linear box
    indices; every edge leaving the set lands back in it.
    """
    if target not in s.terminal_components and target not in quasi_attractor_candidates(s):
        raise ValueError("target component is not terminal")
    inside = s.component == target
    # forward closure (trivial for a terminal component, kept for safety)
    frontier = list(np.nonzero(inside)[0])
    while frontier:
        v = frontier.pop()
        for w in g.indices[g.indptr[v]:g.indptr[v + 1]]:
            if not inside[w]:
                inside[w] = True
                frontier.append(int(w))
    rptr, rsrc = _reverse_csr(g)
    src = np.repeat(np.arange(g.n_boxes), np.diff(g.indptr))
    missing = np.bincount(src[~inside[g.indices]], minlength=g.n_boxes)
    outdeg = np.diff(g.indptr)
    queue = [int(v) for v in np.nonzero(~inside & (missing == 0) & (outdeg > 0))[0]]
    while queue:
        v = queue.pop()
        if inside[v]:
            continue
        inside[v] = True
        for u in rsrc[rptr[v]:rptr[v + 1]]:
            if inside[u]:
                continue
            missing[u] -= 1
            if missing[u] == 0:
                queue.append(int(u))
    return g.active[inside]


def _neighbor_offsets():
    r = np.arange(-1, 2)
    o = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    return o[np.any(o != 0, axis=1)]


def isolation_status(s: SccDecomposition, target: int) -> dict:
    """Whether a non-recurrent buffer separates ``target`` from other recurrent boxes.

    Two boxes are adjacent when they share at least a corner (periodically).
    """
    g = s.graph
    n = 1 << g.depth
    tgt = s.boxes_of(target)
    others = g.active[s.recurrent_mask & (s.component != target)]
    if len(others) == 0:
        return {"isolated": True, "n_other_recurrent": 0, "n_touching": 0}
    mark = np.zeros(n ** 3, bool)
    mark[tgt] = True
    t = box_triple(g.depth, others)
    touching = np.zeros(len(others), bool)
    for o in _neighbor_offsets():
        nb = (t + o) % n
        touching |= mark[(nb[:, 0] * n + nb[:, 1]) * n + nb[:, 2]]
    return {"isolated": not bool(touching.any()), "n_other_recurrent": int(len(others)),
            "n_touching": int(touching.sum())}


@dataclass
class DepthResult:
    depth: int
    graph: TransitionGraph
    scc: SccDecomposition
    candidates: list
    isolation: dict


def analyse_depth(f, depth: int, scheme: SampleScheme, bloat: float | None, seed: int,
                  active=None, lip: float | None = None) -> DepthResult:
    if bloat is None:
        bloat = default_bloat(f, depth, scheme, lip)
    g = build_transition_graph(f, depth, scheme, bloat, seed, active)
    s = scc_condense(g)
    cand = quasi_attractor_candidates(s)
    iso = {int(c): isolation_status(s, c) for c in cand}
    return DepthResult(depth, g, s, cand, iso)


def children(depth: int, boxes) -> np.ndarray:
    """Linear indices at depth + 1 of the 8 children of each box."""
    t = box_triple(depth, boxes)
    n2 = 1 << (depth + 1)
    out = []
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                c = 2 * t + np.array([dx, dy, dz])
                out.append((c[:, 0] * n2 + c[:, 1]) * n2 + c[:, 2])
    return np.sort(np.concatenate(out))


def refine_recurrent(f, start_depth: int, end_depth: int, scheme: SampleScheme | None = None,
                     bloat_scale: float = 1.0, seed: int = 0,
                     lip: float | None = None) -> list[DepthResult]:
    """Subdivision: keep recurrent boxes, split each into 8, rebuild, repeat."""
    if not start_depth < end_depth <= MAX_GRAPH_DEPTH:
        raise ValueError("need start_depth < end_depth <= 9")
    scheme = scheme or SampleScheme(k=2, m=0, seed=seed)
    lip = lipschitz_estimate(f) if lip is None else lip
    results = []
    active = None
    for d in range(start_depth, end_depth + 1):
        bloat = bloat_scale * default_bloat(f, d, scheme, lip)
        r = analyse_depth(f, d, scheme, bloat, seed, active, lip)
        rec = r.scc.recurrent
        if len(rec) == 0:
            raise ChainError("lost the recurrent set - increase bloat or samples")
        results.append(r)
        active = children(d, rec)
    return results


# --- export ----------------------------------------------------------------

def write_edges_bin(g: TransitionGraph, path) -> None:
    """Binary edge list.

    Header (little-endian): 8-byte magic 'DAEDGES1', uint32 depth, uint32
    samples per box, uint64 seed, float64 bloat, uint64 edge count.  Body:
    edge count pairs of int64 (source, target) linear box indices.
    """
    pairs = g.edge_pairs().astype("<i8")
    with open(path, "wb") as fh:
        fh.write(EDGE_MAGIC)
        fh.write(struct.pack("<IIQdQ", g.depth, g.samples_per_box, g.seed, g.bloat, len(pairs)))
        fh.write(pairs.tobytes())


def read_edges_bin(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(8) != EDGE_MAGIC:
            raise ValueError("not an edge file")
        depth, spb, seed, bloat, m = struct.unpack("<IIQdQ", fh.read(32))
        pairs = np.frombuffer(fh.read(16 * m), dtype="<i8").reshape(m, 2)
    return {"depth": depth, "samples_per_box": spb, "seed": seed, "bloat": bloat}, pairs


def write_boxes_csv(s: SccDecomposition, path, labels: dict | None = None) -> None:
    """One row per active box: index, triple, centre, component, recurrent, label."""
    g = s.graph
    t = box_triple(g.depth, g.active)
    c = box_centers(g.depth, t)
    rec = s.recurrent_mask
    labels = labels or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["box", "ix", "iy", "iz", "cx", "cy", "cz", "component", "recurrent", "label"])
        for i in range(g.n_boxes):
            comp = int(s.component[i])
            w.writerow([int(g.active[i]), *t[i].tolist(), *(repr(float(v)) for v in c[i]),
                        comp, int(rec[i]), labels.get(comp, "")])

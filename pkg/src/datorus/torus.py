"""Quotient geometry of the 3-torus R^3/Z^3.

Everything here works on plain float64 arrays with a trailing axis of
length 3; the small dataclasses are conveniences for the scalar API.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

MAX_DEPTH = 12

# all 27 integer shifts with entries in {-1, 0, 1}
LIFT_SHIFTS = np.array(list(product((-1, 0, 1), repeat=3)), dtype=float)


def wrap(p) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1)."""
    a = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite torus coordinate")
    w = a - np.floor(a)
    # x - floor(x) rounds to 1.0 for tiny negative x
    w[w >= 1.0] = 0.0
    return w + 0.0  # normalise -0.0


def nearest_lift(p, q) -> np.ndarray:
    """Displacement v with wrap(p + v) = q and minimal Euclidean length.

    The metric is separable, so the minimum over the 27 neighbouring lifts is
    attained componentwise.  Ties at exactly 1/2 resolve to +1/2, i.e. every
    component lies in (-1/2, 1/2].
    """
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    d = d - np.round(d)
    d[d <= -0.5] += 1.0
    return d


def torus_distance(p, q) -> np.ndarray:
    return np.linalg.norm(nearest_lift(p, q), axis=-1)


def torus_distance_bruteforce(p, q) -> float:
    """Minimum over the 27 adjacent lifts; slow reference implementation."""
    d = wrap(q) - wrap(p)
    return float(np.min(np.linalg.norm(d[None, :] + LIFT_SHIFTS, axis=1)))


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        w = wrap([self.x, self.y, self.z])
        object.__setattr__(self, "x", float(w[0]))
        object.__setattr__(self, "y", float(w[1]))
        object.__setattr__(self, "z", float(w[2]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def __add__(self, v: "LiftVector") -> "TorusPoint":
        return TorusPoint(*(self.array + v.array))


@dataclass(frozen=True)
class LiftVector:
    dx: float
    dy: float
    dz: float

    @property
    def array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz])

    @classmethod
    def between(cls, p: TorusPoint, q: TorusPoint) -> "LiftVector":
        return cls(*nearest_lift(p.array, q.array))


def _check_depth(depth: int) -> int:
    if not (1 <= int(depth) <= MAX_DEPTH):
        raise ValueError(f"depth {depth} outside [1, {MAX_DEPTH}]")
    return int(depth)


@dataclass(frozen=True, order=True)
class BoxId:
    depth: int
    ix: int
    iy: int
    iz: int

    def __post_init__(self):
        _check_depth(self.depth)
        n = 1 << self.depth
        for i in (self.ix, self.iy, self.iz):
            if not 0 <= i < n:
                raise ValueError(f"box index {i} outside [0, {n})")

    @property
    def index(self) -> int:
        return int(box_index(self.depth, np.array([self.ix, self.iy, self.iz])))

    @classmethod
    def from_index(cls, depth: int, index: int) -> "BoxId":
        ix, iy, iz = box_triple(depth, np.asarray(index))
        return cls(depth, int(ix), int(iy), int(iz))


def box_index(depth: int, triple) -> np.ndarray:
    """Linear box index (ix*n + iy)*n + iz for integer triples (..., 3)."""
    t = np.asarray(triple, dtype=np.int64)
    n = 1 << depth
    return (t[..., 0] * n + t[..., 1]) * n + t[..., 2]


def box_triple(depth: int, index) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64)
    n = 1 << depth
    return np.stack([idx // (n * n), (idx // n) % n, idx % n], axis=-1)


def box_of_point(p, depth: int):
    """BoxId for a single point, or an (n, 3) integer array for a batch."""
    depth = _check_depth(depth)
    n = 1 << depth
    a = wrap(p)
    t = np.minimum(np.floor(a * n).astype(np.int64), n - 1)
    if t.ndim == 1:
        return BoxId(depth, int(t[0]), int(t[1]), int(t[2]))
    return t


def box_centers(depth: int, triples) -> np.ndarray:
    return (np.asarray(triples, dtype=float) + 0.5) / (1 << depth)


def center(b: BoxId) -> TorusPoint:
    return TorusPoint(*box_centers(b.depth, [b.ix, b.iy, b.iz]))


@dataclass(frozen=True)
class SampleScheme:
    """k^3 cell-centred grid plus m seeded pseudo-random points per box."""
    k: int = 2
    m: int = 0
    seed: int = 0

    @property
    def count(self) -> int:
        return self.k ** 3 + self.m


def box_sample_offsets(scheme: SampleScheme, n_boxes: int, depth: int) -> np.ndarray:
    """Offsets in units of the box side, shape (n_boxes, count, 3), in [0, 1)."""
    g = (np.arange(scheme.k) + 0.5) / scheme.k
    grid = np.array(list(product(g, g, g))).reshape(1, -1, 3)
    grid = np.broadcast_to(grid, (n_boxes, scheme.k ** 3, 3))
    if scheme.m == 0:
        return np.ascontiguousarray(grid)
    rng = np.random.default_rng([scheme.seed, depth])
    rand = rng.random((n_boxes, scheme.m, 3))
    return np.concatenate([grid, rand], axis=1)


def sample_box(b: BoxId, scheme: SampleScheme) -> list[TorusPoint]:
    h = 1.0 / (1 << b.depth)
    rng = np.random.default_rng([scheme.seed, b.depth, b.index])
    g = (np.arange(scheme.k) + 0.5) / scheme.k
    pts = [np.array(c) for c in product(g, g, g)]
    pts += list(rng.random((scheme.m, 3)))
    corner = np.array([b.ix, b.iy, b.iz], dtype=float)
    return [TorusPoint(*((corner + o) * h)) for o in pts]


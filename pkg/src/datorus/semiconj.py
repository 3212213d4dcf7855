"""Shadowing semiconjugacy h with h o f = A o h, computed pointwise.

With g(y) = lift f(y) - A lift(y) split in the adapted frame,

    w_s(x) = - sum_{n>=1} A_s^(n-1) g_s(f^-n x)
    w_u(x) =   sum_{n>=0} A_u^-(n+1) g_u(f^n x)

and h(x) = x + P w(x).  Truncating both sums at N leaves the one-step residual
h(f x) - A h(x) = A_s^N g_s(f^-N x) - A_u^-N g_u(f^N x), which is what the
tail bound controls.
"""
from __future__ import annotations

import csv
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anosov import periodic_orbits
from .surgery import DAMap, chart_random, chart_to_torus, invariant_arc
from .torus import box_centers, box_triple, nearest_lift, torus_distance, wrap


class RunningMax:
    """Monotone max accumulator that is safe to update from several threads."""

    def __init__(self) -> None:
        self._value = 0.0
        self._lock = threading.Lock()

    def update(self, values) -> float:
        v = float(np.max(values, initial=0.0))
        with self._lock:
            if v > self._value:
                self._value = v
            return self._value

    @property
    def value(self) -> float:
        with self._lock:
            return self._value


@dataclass
class ShadowEvaluator:
    map: DAMap
    n_trunc: int = 80
    tail_bound: float = field(init=False)
    sup_g: float = field(init=False)          # G, ambient units
    a_priori_eps: float = field(init=False)
    _eps: RunningMax = field(init=False, repr=False, default_factory=RunningMax)

    def __post_init__(self) -> None:
        m = self.map.model
        c, lam = m.lambda_c_mod, m.lambda_u
        if not c < 1 < lam:
            raise ValueError("series needs lambda_c_mod < 1 < lambda_u")
        if self.n_trunc < 1:
            raise ValueError("n_trunc must be positive")
        enabled = self.map.params.enabled
        self.sup_g = float(np.linalg.norm(m.P, 2) * self.map.sup_correction) if enabled else 0.0
        G, N = self.sup_g, self.n_trunc
        self.tail_bound = G * (c ** N / (1 - c) + lam ** -N / (1 - 1 / lam))
        self.a_priori_eps = G / (1 - c) + G / (1 - 1 / lam) + self.tail_bound

    @property
    def eps_measured(self) -> float:
        return self._eps.value

    def _g(self, y) -> np.ndarray:
        """Adapted components of f(y) - A(y) on the nearest lift."""
        m = self.map.model
        return m.to_adapted(nearest_lift(m.forward(y), self.map.forward(y)))

    def displacement(self, x) -> np.ndarray:
        """Ambient lift of h(x) - x."""
        x = np.atleast_2d(wrap(x))
        m = self.map.model
        w = np.zeros_like(x)
        if not self.map.params.enabled:
            return w
        As = m.A_s
        # stable half: backward orbit
        y = x
        Apow = np.eye(2)
        for _ in range(self.n_trunc):
            y = self.map.inverse(y)
            w[:, :2] -= self._g(y)[:, :2] @ Apow.T
            Apow = Apow @ As
        # unstable half: forward orbit; vanishes when the surgery keeps u untouched
        y = x
        for n in range(self.n_trunc):
            g = self._g(y)[:, 2]
            if np.any(g):
                w[:, 2] += g * m.lambda_u ** -(n + 1)
            y = self.map.forward(y)
        return m.from_adapted(w)

    def eval_h(self, x) -> np.ndarray:
        x = np.atleast_2d(wrap(x))
        d = self.displacement(x)
        eps = self._eps.update(np.linalg.norm(d, axis=1))
        if eps > self.a_priori_eps * (1 + 1e-9) + 1e-15:
            raise RuntimeError(f"|h - id| = {eps:.3e} exceeds the a priori bound "
                               f"{self.a_priori_eps:.3e}")
        return wrap(x + d)

    def dump_csv(self, path, x) -> None:
        """Write (x, h(x)) rows for plotting."""
        x = np.atleast_2d(wrap(x))
        hx = self.eval_h(x)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "y", "z", "hx", "hy", "hz"])
            for a, b in zip(x, hx):
                wr.writerow([repr(float(v)) for v in (*a, *b)])


def semiconjugacy_residual(e: ShadowEvaluator, n_samples: int, seed: int = 0,
                           focus: float = 0.5, workers: int = 1,
                           chunk: int = 2048) -> tuple[float, float]:
    """Max of d(A h(x), h(f x)) and the running |h - id| over seeded samples.

    A fraction ``focus`` of the samples is drawn inside the surgery support,
    where the truncation residual actually lives.  Chunks may be evaluated on
    a thread pool; the reduction is a max, so the result is order independent.
    """
    rng = np.random.default_rng(seed)
    n_in = int(round(focus * n_samples)) if e.map.params.enabled else 0
    x = rng.random((n_samples - n_in, 3))
    if n_in:
        x = np.concatenate([x, chart_to_torus(e.map, chart_random(e.map, n_in, rng))])

    def one(block):
        hx = e.eval_h(block)
        hfx = e.eval_h(e.map.forward(block))
        return float(np.max(torus_distance(e.map.model.forward(hx), hfx), initial=0.0))

    blocks = [x[i:i + chunk] for i in range(0, len(x), chunk)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            res = list(pool.map(one, blocks))
    else:
        res = [one(b) for b in blocks]
    return max(res, default=0.0), e.eps_measured


@dataclass
class CollapseWitness:
    x: np.ndarray
    z: np.ndarray
    distance: float
    h_distance: float
    u_gap: float          # difference of adapted u-coordinates of x and z

    @property
    def ratio(self) -> float:
        return self.distance / max(self.h_distance, 1e-300)


def collapse_witness(e: ShadowEvaluator, search_radius: float = 0.01,
                     n_probe: int = 401) -> CollapseWitness | None:
    """Best pair x != z on the weak-unstable arc of q that h (almost) identifies.

    Requires d(x, z) > 10 tol and d(h x, h z) < tol with tol = 100 tail_bound;
    among admissible pairs the one with the largest d(x, z) is returned.
    """
    f = e.map
    if not f.params.enabled:
        return None
    arc = invariant_arc(f, "wu", 2 * search_radius, n_nodes=n_probe, max_pieces=120)
    pts = arc.points[f.model.adapted_norm(arc.lift - f.q) <= search_radius]
    if len(pts) < 2:
        return None
    hp = e.eval_h(pts)
    tol = max(100 * e.tail_bound, 1e-14)
    best = None
    for i in range(len(pts) - 1):
        d = torus_distance(pts[i], pts[i + 1:])
        dh = torus_distance(hp[i], hp[i + 1:])
        ok = np.nonzero((d > 10 * tol) & (dh < tol))[0]
        if len(ok) == 0:
            continue
        j = ok[np.argmax(d[ok])]
        if best is None or d[j] > best[2]:
            best = (i, i + 1 + j, float(d[j]), float(dh[j]))
    if best is None:
        return None
    i, j, d, dh = best
    u = f.chart(pts[[i, j]])[:, 2]
    return CollapseWitness(pts[i], pts[j], d, dh, float(abs(u[0] - u[1])))


@dataclass
class Localization:
    verdict: str                  # PASS / FAIL
    orbit_period: int | None
    orbit: np.ndarray | None
    worst_distance: float
    tolerance: float
    offending: list = field(default_factory=list)   # linear box indices


def localize_class_to_periodic_fiber(e: ShadowEvaluator, boxes, depth: int,
                                     max_period: int = 6, terminal: bool = False,
                                     tol: float | None = None) -> Localization:
    """Check that h maps every box centre of a chain class near one A-periodic orbit."""
    if terminal:
        raise ValueError("localization applies to non-terminal classes only")
    idx = np.asarray(boxes, dtype=np.int64).ravel()
    if len(idx) == 0:
        raise ValueError("empty class")
    diag = np.sqrt(3) / (1 << depth)
    tol = 2 * diag + e.tail_bound if tol is None else tol
    hc = e.eval_h(box_centers(depth, box_triple(depth, idx)))
    best = None
    for per, orb in periodic_orbits(e.map.model, max_period):
        d = np.min(np.stack([torus_distance(hc, o) for o in orb]), axis=0)
        if best is None or d.max() < best[2].max():
            best = (per, orb, d)
    per, orb, d = best
    worst = float(d.max())
    if worst <= tol:
        return Localization("PASS", per, orb, worst, tol)
    return Localization("FAIL", per, orb, worst, tol, offending=idx[d > tol].tolist())

"""Orbit statistics: Lyapunov spectra, cs-exponents, Birkhoff averages, basins, entropy.

Every routine takes a map object exposing ``forward(x)`` and ``jacobian(x)``
on (n, 3) arrays; maps that also carry a linear ``model`` are handled in its
adapted frame, which makes the linear cocycle exactly block-conformal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .torus import box_of_point, box_triple, wrap

BURN_IN = 0.1

TWO_PI = 2 * np.pi
OBSERVABLES: dict[str, Callable] = {
    "one": lambda x: np.ones(x.shape[:-1]),
    "sin_x": lambda x: np.sin(TWO_PI * x[..., 0]),
    "cos_x": lambda x: np.cos(TWO_PI * x[..., 0]),
    "sin_y": lambda x: np.sin(TWO_PI * x[..., 1]),
    "cos_y": lambda x: np.cos(TWO_PI * x[..., 1]),
    "sin_z": lambda x: np.sin(TWO_PI * x[..., 2]),
    "cos_z": lambda x: np.cos(TWO_PI * x[..., 2]),
}
COORDINATE_OBSERVABLES = [k for k in OBSERVABLES if k != "one"]


def box_bump(depth: int, index: int) -> Callable:
    """Smoothed indicator of a dyadic box: product of cos^2 bumps, 1 at the centre."""
    n = 1 << depth
    c = (box_triple(depth, index) + 0.5) / n

    def phi(x):
        d = x - c
        d -= np.round(d)
        t = np.clip(np.abs(d) * n, 0, 1)        # 0 at centre, 1 one box-width away
        return np.prod(np.cos(0.5 * np.pi * t) ** 2, axis=-1)
    return phi


def observable(name_or_fn) -> Callable:
    if callable(name_or_fn):
        return name_or_fn
    if name_or_fn in OBSERVABLES:
        return OBSERVABLES[name_or_fn]
    if str(name_or_fn).startswith("box:"):
        _, d, i = name_or_fn.split(":")
        return box_bump(int(d), int(i))
    raise ValueError(f"unknown observable {name_or_fn!r}")


def _frame(f):
    model = getattr(f, "model", f)
    P = getattr(model, "P", None)
    if P is None:
        return np.eye(3), np.eye(3)
    return P, model.P_inv


@dataclass
class OrbitDiagnostics:
    exponents: np.ndarray        # (n_orbits, 3), descending
    logdet_average: np.ndarray   # (n_orbits,)
    transient: int
    n_iters: int
    seed: int
    x0: np.ndarray
    observable_averages: dict = field(default_factory=dict)

    @property
    def conservation_error(self) -> float:
        return float(np.max(np.abs(self.exponents.sum(axis=1) - self.logdet_average)))


def lyapunov_spectrum(f, x, n: int, seed: int = 0, jacobian: Callable | None = None,
                      observables=()) -> OrbitDiagnostics:
    """QR cocycle exponents for one or several starting points (vectorised).

    The frame is re-orthonormalised at every step; the first 10% of steps are
    discarded.  ``jacobian`` overrides ``f.jacobian`` (ambient coordinates).
    """
    if n < 1000:
        raise ValueError("need n >= 1000 iterations")
    x = np.atleast_2d(wrap(x))
    m = len(x)
    jac = jacobian or f.jacobian
    P, Pi = _frame(f)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(m, 3, 3)))
    burn = int(BURN_IN * n)
    acc = np.zeros((m, 3))
    logdet = np.zeros(m)
    obs = {name: observable(name) for name in observables}
    sums = {name: np.zeros(m) for name in obs}
    for k in range(n):
        J = Pi @ jac(x) @ P
        Q, R = np.linalg.qr(J @ Q)
        d = np.diagonal(R, axis1=1, axis2=2)
        if k >= burn:
            acc += np.log(np.abs(d))
            logdet += np.log(np.abs(np.linalg.det(J)))
            for name, phi in obs.items():
                sums[name] += phi(x)
        x = f.forward(x)
    steps = n - burn
    ex = -np.sort(-acc / steps, axis=1)
    avg = {name: s / steps for name, s in sums.items()}
    return OrbitDiagnostics(ex, logdet / steps, burn, n, seed, x, avg)


def _cs_block(f, x) -> np.ndarray:
    """2x2 derivative on the invariant plane tangent to the linear stable leaves."""
    if hasattr(f, "s_block"):
        return f.s_block(f.chart(x))[0]
    P, Pi = _frame(f)
    return (Pi @ f.jacobian(x) @ P)[:, :2, :2]


def unstable_arc(f, base, half_length: float = 0.01, n_back: int = 8,
                 hmax: float = 2e-4, max_points: int = 200_000) -> np.ndarray:
    """Local unstable arc through ``base`` as an ordered point list.

    A short e_u-segment centred at f^-n_back(base) is pushed forward n_back
    times with midpoint refinement, so the result is a piece of the unstable
    curve through base of half-length about ``half_length``.
    """
    model = getattr(f, "model", f)
    lam = model.lambda_u
    inv = getattr(f, "inverse", None)
    y = np.atleast_2d(wrap(base))
    if inv is None:
        n_back = 0
    for _ in range(n_back):
        y = inv(y)
    t0 = half_length * lam ** -n_back
    ts = np.linspace(-t0, t0, 65)
    seg = lambda t: wrap(y[0] + np.outer(t, model.e_u))
    pts = seg(ts)
    imgs = pts
    for k in range(n_back):
        imgs = f.forward(imgs)
        while True:
            d = imgs[1:] - imgs[:-1]
            gaps = np.linalg.norm(d - np.round(d), axis=1)
            bad = np.nonzero(gaps > hmax)[0]
            if len(bad) == 0 or len(ts) > max_points:
                break
            mids = 0.5 * (ts[bad] + ts[bad + 1])
            new = seg(mids)
            for _ in range(k + 1):
                new = f.forward(new)
            ts = np.insert(ts, bad + 1, mids)
            imgs = np.insert(imgs, bad + 1, new, axis=0)
    return imgs


def _resample_arc(pts: np.ndarray, n: int) -> np.ndarray:
    d = pts[1:] - pts[:-1]
    d -= np.round(d)
    lift = np.concatenate([pts[:1], pts[0] + np.cumsum(d, axis=0)])
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(d, axis=1))])
    t = np.linspace(0, cum[-1], n)
    return wrap(np.column_stack([np.interp(t, cum, lift[:, i]) for i in range(3)]))


@dataclass
class CsExponentResult:
    fraction_negative: float
    exponents: np.ndarray        # largest cs-exponent per sample
    points: np.ndarray
    n_iters: int
    worst_index: int

    @property
    def worst(self) -> float:
        return float(self.exponents[self.worst_index])


def cs_exponent_on_unstable_arc(f, base, n_points: int = 1000, n_iters: int = 100_000,
                                half_length: float = 0.01) -> CsExponentResult:
    """Fraction of points on a local unstable arc with negative top cs-exponent.

    A 2-frame in the invariant cs-plane is transported by Df and
    re-orthonormalised by Gram-Schmidt at each step; 10% burn-in.
    """
    arc = unstable_arc(f, base, half_length)
    if len(arc) < 2:
        raise RuntimeError("unstable arc growth failed")
    x = _resample_arc(arc, n_points)
    m = len(x)
    v1 = np.tile([1.0, 0.0], (m, 1))
    v2 = np.tile([0.0, 1.0], (m, 1))
    burn = int(BURN_IN * n_iters)
    acc = np.zeros(m)
    for k in range(n_iters):
        J = _cs_block(f, x)
        w1 = np.einsum("nij,nj->ni", J, v1)
        w2 = np.einsum("nij,nj->ni", J, v2)
        r11 = np.linalg.norm(w1, axis=1)
        v1 = w1 / r11[:, None]
        w2 -= np.sum(w2 * v1, axis=1)[:, None] * v1
        v2 = w2 / np.linalg.norm(w2, axis=1)[:, None]
        if k >= burn:
            acc += np.log(r11)
        x = f.forward(x)
    ex = acc / (n_iters - burn)
    return CsExponentResult(float(np.mean(ex < 0)), ex, _resample_arc(arc, n_points),
                            n_iters, int(np.argmax(ex)))


def birkhoff_average(f, x, obs, n: int) -> float | np.ndarray:
    """(1/n) sum_{i<n} phi(f^i x); vectorised over rows of x."""
    phi = observable(obs)
    x = np.atleast_2d(wrap(x))
    s = np.zeros(len(x))
    for _ in range(n):
        s += phi(x)
        x = f.forward(x)
    out = s / n
    return float(out[0]) if len(out) == 1 else out


@dataclass
class SrbEvidence:
    max_pairwise_l1: float       # sum |p - q| over bins
    histograms: np.ndarray       # (n_starts, bins), normalised
    averages: dict               # observable -> array over starts
    starts: np.ndarray
    depth: int
    n: int
    seed: int

    @property
    def max_total_variation(self) -> float:
        return 0.5 * self.max_pairwise_l1


def srb_evidence(f, n_starts: int = 10, n: int = 1_000_000, depth: int = 4, seed: int = 0,
                 chunk: int = 10_000) -> SrbEvidence:
    """Empirical box histograms and coordinate Birkhoff averages from random starts."""
    rng = np.random.default_rng(seed)
    x = rng.random((n_starts, 3))
    starts = x.copy()
    nb = 1 << depth
    hist = np.zeros((n_starts, nb ** 3), np.int64)
    sums = {k: np.zeros(n_starts) for k in COORDINATE_OBSERVABLES}
    buf = np.empty((chunk, n_starts, 3))
    done = 0
    while done < n:
        c = min(chunk, n - done)
        for i in range(c):
            buf[i] = x
            x = f.forward(x)
        pts = buf[:c]
        t = np.minimum((pts * nb).astype(np.int64), nb - 1)
        idx = (t[..., 0] * nb + t[..., 1]) * nb + t[..., 2]
        for j in range(n_starts):
            hist[j] += np.bincount(idx[:, j], minlength=nb ** 3)
        for k in COORDINATE_OBSERVABLES:
            sums[k] += OBSERVABLES[k](pts).sum(axis=0)
        done += c
    p = hist / n
    worst = 0.0
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            worst = max(worst, float(np.abs(p[i] - p[j]).sum()))
    return SrbEvidence(worst, p, {k: v / n for k, v in sums.items()}, starts, depth, n, seed)


def dilate(depth: int, boxes) -> np.ndarray:
    """Boxes together with all their (periodic) corner neighbours."""
    n = 1 << depth
    t = box_triple(depth, np.asarray(boxes, dtype=np.int64))
    r = np.arange(-1, 2)
    offs = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    nb = (t[:, None, :] + offs[None]) % n
    return np.unique((nb[..., 0] * n + nb[..., 1]) * n + nb[..., 2])


def basin_fraction(f, attractor_boxes, depth: int, n_samples: int = 10_000,
                   n_iters: int = 10_000, seed: int = 0, dwell: float = 0.9) -> float:
    """Share of random starts whose last 10% of iterates dwell >= 90% in the dilated set."""
    n = 1 << depth
    mark = np.zeros(n ** 3, bool)
    mark[dilate(depth, attractor_boxes)] = True
    rng = np.random.default_rng(seed)
    x = rng.random((n_samples, 3))
    tail = max(1, int(BURN_IN * n_iters))
    hits = np.zeros(n_samples, np.int64)
    for k in range(n_iters):
        x = f.forward(x)
        if k >= n_iters - tail:
            t = box_of_point(x, depth)
            hits += mark[(t[:, 0] * n + t[:, 1]) * n + t[:, 2]]
    return float(np.mean(hits >= dwell * tail))


@dataclass
class EntropyBounds:
    lower: float
    graph_estimate: float
    converged: bool


def entropy_bounds(f, g, steps: int = 200) -> EntropyBounds:
    """Factor lower bound log(lambda_u) and log spectral radius of the box graph."""
    model = getattr(f, "model", f)
    lower = float(np.log(model.lambda_u))
    nbox = g.n_boxes
    A = sp.csr_matrix((np.ones(g.n_edges), g.indices, g.indptr), shape=(nbox, nbox))
    v = np.full(nbox, 1.0 / nbox)
    est = []
    for _ in range(steps):
        w = A.T @ v        # left iteration: mass flows along edges
        s = w.sum()
        if s == 0:
            return EntropyBounds(lower, float("-inf"), True)
        est.append(s / v.sum())
        v = w / s
    rho = est[-1]
    tail = np.array(est[-10:])
    converged = bool(np.ptp(tail) <= 1e-6 * rho)
    return EntropyBounds(lower, float(np.log(rho)), converged)

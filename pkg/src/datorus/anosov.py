"""Linear hyperbolic toral automorphism with one expanding direction and a
complex contracting pair.

The adapted frame (e_s1, e_s2, e_u) is chosen so that the matrix acts on the
stable plane as a similarity: scaling by ``lambda_c_mod`` composed with a
rotation.  All cone and norm checks use the Euclidean norm of adapted
coordinates, ``|P^{-1} v|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .torus import wrap

DEFAULT_MATRIX = ((1, 1, 0), (0, 0, 1), (1, 0, 0))


class SpectrumError(ValueError):
    pass


def _int_matrix(m) -> np.ndarray:
    a = np.array(m, dtype=object)
    if a.shape != (3, 3):
        raise ValueError("matrix must be 3x3")
    return np.array([[int(v) for v in row] for row in a], dtype=object)


def _imatmul(a, b):
    return np.array([[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)]
                     for i in range(3)], dtype=object)


def int_matrix_power(m, n: int) -> np.ndarray:
    out = np.array([[int(i == j) for j in range(3)] for i in range(3)], dtype=object)
    base = _int_matrix(m)
    while n:
        if n & 1:
            out = _imatmul(out, base)
        base = _imatmul(base, base)
        n >>= 1
    return out


def int_det(m) -> int:
    a = _int_matrix(m)
    return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))


def int_adjugate(m) -> np.ndarray:
    a = _int_matrix(m)
    adj = np.empty((3, 3), dtype=object)
    for i in range(3):
        for j in range(3):
            r = [x for x in range(3) if x != j]
            c = [x for x in range(3) if x != i]
            minor = a[r[0]][c[0]] * a[r[1]][c[1]] - a[r[0]][c[1]] * a[r[1]][c[0]]
            adj[i][j] = (-1) ** (i + j) * minor
    return adj


def char_poly(m) -> tuple[int, int, int, int]:
    """Integer coefficients (1, c2, c1, c0) of det(t I - m)."""
    a = _int_matrix(m)
    tr = a[0][0] + a[1][1] + a[2][2]
    m2 = (a[0][0] * a[1][1] - a[0][1] * a[1][0]
          + a[0][0] * a[2][2] - a[0][2] * a[2][0]
          + a[1][1] * a[2][2] - a[1][2] * a[2][1])
    return 1, -tr, m2, -int_det(a)


def _poly(c, t):
    return ((c[0] * t + c[1]) * t + c[2]) * t + c[3]


def _dpoly(c, t):
    return (3 * c[0] * t + 2 * c[1]) * t + c[2]


def expanding_root(coeffs, tol: float = 1e-14) -> float:
    """Real root > 1 of a monic cubic by bracketed bisection, polished by Newton."""
    lo, hi = 1.0, 1.0 + max(abs(c) for c in coeffs[1:])
    if _poly(coeffs, lo) >= 0 or _poly(coeffs, hi) <= 0:
        raise SpectrumError("unsupported spectrum: no bracketed expanding root")
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if _poly(coeffs, mid) < 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    for _ in range(50):
        step = _poly(coeffs, t) / _dpoly(coeffs, t)
        t -= step
        if abs(step) <= tol * max(1.0, abs(t)):
            break
    return t


@dataclass(frozen=True, eq=False)
class AnosovModel:
    matrix: np.ndarray          # integer base matrix
    power: int
    lambda_u: float
    lambda_c_mod: float
    theta_c: float
    e_u: np.ndarray
    e_s1: np.ndarray
    e_s2: np.ndarray
    adapted_transform: np.ndarray   # columns e_s1, e_s2, e_u
    M: np.ndarray = field(repr=False)        # matrix**power, float
    M_inv: np.ndarray = field(repr=False)
    P_inv: np.ndarray = field(repr=False)
    A_s: np.ndarray = field(repr=False)      # 2x2 stable block in the adapted frame

    @property
    def P(self) -> np.ndarray:
        return self.adapted_transform

    def to_adapted(self, v) -> np.ndarray:
        return np.asarray(v) @ self.P_inv.T

    def from_adapted(self, c) -> np.ndarray:
        return np.asarray(c) @ self.P.T

    def adapted_norm(self, v) -> np.ndarray:
        return np.linalg.norm(self.to_adapted(v), axis=-1)

    # the map-protocol used by chain graphs and orbit diagnostics
    def forward(self, x) -> np.ndarray:
        return wrap(np.asarray(x, dtype=float) @ self.M.T)

    def inverse(self, x) -> np.ndarray:
        return wrap(np.asarray(x, dtype=float) @ self.M_inv.T)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.M, x.shape[:-1] + (3, 3)).copy()

    def jacobian_adapted(self, x) -> np.ndarray:
        """Derivative in the adapted frame, P^{-1} Df P."""
        J = self.P_inv @ self.M @ self.P
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(J, x.shape[:-1] + (3, 3)).copy()

    @property
    def entropy(self) -> float:
        return float(np.log(self.lambda_u))


def eigen_split(matrix=DEFAULT_MATRIX, power: int = 1) -> AnosovModel:
    if power < 1:
        raise ValueError("power must be >= 1")
    base = _int_matrix(matrix)
    if abs(int_det(base)) != 1:
        raise SpectrumError("matrix is not unimodular")
    Mi = int_matrix_power(base, power)
    coeffs = char_poly(Mi)
    roots = np.roots([float(c) for c in coeffs])
    if np.any(np.abs(np.abs(roots) - 1.0) < 1e-10):
        raise SpectrumError("not hyperbolic")
    cplx = roots[np.abs(roots.imag) > 1e-10]
    real = roots[np.abs(roots.imag) <= 1e-10].real
    if len(cplx) != 2:
        if len(np.unique(np.round(real, 8))) < len(real):
            raise SpectrumError("unsupported spectrum: repeated real roots")
        raise SpectrumError("unsupported spectrum: need a complex contracting pair")
    if abs(cplx[0]) >= 1 or real[0] <= 1:
        raise SpectrumError("unsupported spectrum: need one positive expanding root")

    lam = expanding_root(coeffs)
    M = np.array(Mi, dtype=float)
    det = int_det(Mi)
    c_mod = float(np.sqrt(abs(det) / lam))

    # unstable direction: null vector of M - lam I
    _, _, vh = np.linalg.svd(M - lam * np.eye(3))
    e_u = vh[-1] / np.linalg.norm(vh[-1])
    if e_u[np.argmax(np.abs(e_u))] < 0:
        e_u = -e_u

    # complex eigenvector; rotate its phase so real and imaginary parts are orthogonal
    mu = cplx[np.argmax(cplx.imag)]
    _, _, vh = np.linalg.svd(M.astype(complex) - mu * np.eye(3))
    v = vh[-1].conj()
    a, b = v.real, v.imag
    phi = 0.5 * np.arctan2(-2 * a @ b, a @ a - b @ b)
    v = v * np.exp(1j * phi)
    v = v * np.sqrt(2) / np.linalg.norm(v)
    e_s1, e_s2 = v.real.copy(), v.imag.copy()

    P = np.column_stack([e_s1, e_s2, e_u])
    P_inv = np.linalg.inv(P)
    block = P_inv @ M @ P
    A_s = block[:2, :2].copy()
    theta = float(np.arctan2(A_s[0, 1], A_s[0, 0]))
    M_inv = np.array(int_adjugate(Mi), dtype=float) * det  # inverse of a unimodular matrix
    return AnosovModel(
        matrix=np.array(base, dtype=np.int64), power=power, lambda_u=lam,
        lambda_c_mod=c_mod, theta_c=theta, e_u=e_u, e_s1=e_s1, e_s2=e_s2,
        adapted_transform=P, M=M, M_inv=M_inv, P_inv=P_inv, A_s=A_s)


def apply_linear(m: AnosovModel, p) -> np.ndarray:
    return m.forward(p)


# --- periodic points -------------------------------------------------------

def _period_group(B) -> tuple[int, list[tuple[int, int, int]]]:
    """Residues w mod D with x = w / D solving B x in Z^3, D = |det B|.

    x = B^{-1} v = adj(B) v / det(B); the solutions form the subgroup of
    (Z/D)^3 generated by the columns of adj(B).
    """
    D = int_det(B)
    if D == 0:
        raise SpectrumError("degenerate period: eigenvalue is a root of unity")
    adj = int_adjugate(B)
    sgn = 1 if D > 0 else -1
    D = abs(D)
    gens = [tuple((sgn * adj[i][j]) % D for i in range(3)) for j in range(3)]
    seen = {(0, 0, 0)}
    frontier = [(0, 0, 0)]
    while frontier:
        nxt = []
        for w in frontier:
            for g in gens:
                c = tuple((w[i] + g[i]) % D for i in range(3))
                if c not in seen:
                    seen.add(c)
                    nxt.append(c)
        frontier = nxt
    return D, sorted(seen)


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def periodic_points(m: AnosovModel, period: int) -> list[tuple[np.ndarray, int]]:
    """All x in [0,1)^3 with M^period x = x mod Z^3, with exact minimal period."""
    if not 1 <= period <= 8:
        raise ValueError("period must be in [1, 8]")
    Mi = int_matrix_power(m.matrix.tolist(), m.power)
    Mp = int_matrix_power(Mi, period)
    B = Mp - np.array([[int(i == j) for j in range(3)] for i in range(3)], dtype=object)
    D, residues = _period_group(B)
    out = []
    for w in residues:
        minimal = period
        for d in _divisors(period):
            Md = int_matrix_power(Mi, d)
            img = tuple(sum(Md[i][k] * w[k] for k in range(3)) % D for i in range(3))
            if img == w:
                minimal = d
                break
        pt = np.array([float(Fraction(wi, D)) for wi in w])
        out.append((pt, minimal))
    return out


def periodic_orbits(m: AnosovModel, max_period: int) -> list[tuple[int, np.ndarray]]:
    """Distinct periodic orbits of minimal period <= max_period as (period, points)."""
    orbits = []
    seen: set = set()
    for n in range(1, max_period + 1):
        for pt, per in periodic_points(m, n):
            if per != n:
                continue
            key = tuple(np.round(pt, 12))
            if key in seen:
                continue
            orb = [pt]
            for _ in range(per - 1):
                orb.append(m.forward(orb[-1]))
            for o in orb:
                seen.add(tuple(np.round(o, 12)))
            orbits.append((per, np.array(orb)))
    return orbits


def lattice_index(m: AnosovModel, period: int) -> int:
    Mp = int_matrix_power(int_matrix_power(m.matrix.tolist(), m.power), period)
    B = Mp - np.array([[int(i == j) for j in range(3)] for i in range(3)], dtype=object)
    return abs(int_det(B))


# --- cones -----------------------------------------------------------------

@dataclass(frozen=True)
class ConeField:
    theta_u: float = 0.15
    theta_cs: float = 0.15
    L_crossing: float | None = None

    def __post_init__(self):
        for t in (self.theta_u, self.theta_cs):
            if not 0 < t < np.pi / 4:
                raise ValueError("cone half-angles must lie in (0, pi/4)")


def cone_angle(m: AnosovModel, v, which: str) -> np.ndarray:
    """Adapted-metric angle between v and E^u ('u') or E^s ('cs')."""
    c = m.to_adapted(v)
    s = np.linalg.norm(c[..., :2], axis=-1)
    u = np.abs(c[..., 2])
    if which == "u":
        return np.arctan2(s, u)
    if which == "cs":
        return np.arctan2(u, s)
    raise ValueError(f"unknown cone {which!r}")


def cone_membership(m: AnosovModel, cones: ConeField, v, which: str, tol: float = 1e-12):
    v = np.asarray(v, dtype=float)
    if np.any(np.linalg.norm(v, axis=-1) == 0):
        raise ValueError("zero vector has no direction")
    half = cones.theta_u if which == "u" else cones.theta_cs
    return cone_angle(m, v, which) <= half + tol


def cone_vectors(theta: float, n_azimuth: int, which: str, rng=None, n_interior: int = 0):
    """Unit vectors in adapted coordinates on (and optionally inside) a cone."""
    az = np.linspace(0.0, 2 * np.pi, n_azimuth, endpoint=False)
    ang = np.full_like(az, theta)
    if n_interior and rng is not None:
        az = np.concatenate([az, rng.uniform(0, 2 * np.pi, n_interior)])
        ang = np.concatenate([ang, theta * np.sqrt(rng.random(n_interior))])
    if which == "u":
        return np.column_stack([np.sin(ang) * np.cos(az), np.sin(ang) * np.sin(az), np.cos(ang)])
    # cs cone: tilt out of the stable plane by ang, azimuth inside the plane
    return np.column_stack([np.cos(ang) * np.cos(az), np.cos(ang) * np.sin(az), np.sin(ang)])


def crossing_length(m: AnosovModel, radius: float, n_probe: int = 200, span: int = 2000,
                    seed: int = 0) -> float:
    """Longest E^u segment missing a stable disc of the given adapted radius.

    A unit-speed line x0 + t e_u meets the stable leaf through p + k (k in Z^3)
    at t = -u(x0 - p + k); the hit counts if the stable offset there is within
    ``radius``.  Returns the largest gap between consecutive hits over random
    offsets, restricted to the u-window where the lattice enumeration is
    complete.  Returns inf if a window has fewer than two hits.
    """
    a = int(np.argmax(np.abs(m.e_u)))
    normP = np.linalg.norm(m.P, 2)
    s_max = radius + np.linalg.norm(m.P_inv, 2) * np.sqrt(3)
    W = int(np.ceil(s_max * normP)) + 1
    t = np.arange(-span, span + 1)
    centres = m.e_u[None, :] * (t / m.e_u[a])[:, None]
    others = [j for j in range(3) if j != a]
    off = np.arange(-W, W + 1)
    g1, g2 = np.meshgrid(off, off, indexing="ij")
    pts = np.empty((len(t), g1.size, 3))
    pts[:, :, a] = t[:, None]
    pts[:, :, others[0]] = np.round(centres[:, others[0]])[:, None] + g1.ravel()[None, :]
    pts[:, :, others[1]] = np.round(centres[:, others[1]])[:, None] + g2.ravel()[None, :]
    k = pts.reshape(-1, 3)
    ck = m.to_adapted(k)
    keep = np.linalg.norm(ck[:, :2], axis=1) <= s_max
    ck = ck[keep]
    u_window = (span - normP * s_max) / abs(m.e_u[a]) - 2.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in rng.random((n_probe, 3)):
        cd = m.to_adapted(d)
        hit = np.linalg.norm(ck[:, :2] + cd[:2], axis=1) <= radius
        tt = np.sort(-(ck[hit, 2] + cd[2]))
        tt = tt[np.abs(tt) <= u_window]
        if len(tt) < 2:
            return float("inf")
        worst = max(worst, float(np.max(np.diff(tt))))
    return worst


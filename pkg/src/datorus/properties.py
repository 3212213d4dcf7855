"""Numerical checks of the seven structural properties of the modified map."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .anosov import ConeField, cone_vectors, crossing_length, periodic_orbits
from .semiconj import ShadowEvaluator, semiconjugacy_residual
from .surgery import DAMap, chart_grid, chart_random, chart_to_torus, cs_growth
from .torus import nearest_lift, torus_distance

SCHEMA_VERSION = "1.0"

TITLES = {
    "P1": "index change at q: product of the two weak eigenvalues > 1; r keeps a complex cs pair",
    "P2": "unstable cone invariant and uniformly expanded",
    "P3": "linear stable foliation preserved",
    "P4": "cs-cone contracted outside the surgery ball",
    "P5": "semiconjugacy to the linear model, close to the identity",
    "P6": "u-curves of bounded length cross every cs-disc of radius 2 delta",
    "P7": "cs-growth bounded by 1 + beta everywhere",
}


@dataclass
class PropertyRecord:
    name: str
    status: str                  # PASS / FAIL / N/A
    value: float | None          # worst measured constant
    threshold: str
    worst_point: list | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != "FAIL"


@dataclass
class PropertyReport:
    records: list
    schema_version: str = SCHEMA_VERSION

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.records)

    def __getitem__(self, name: str) -> PropertyRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            d["title"] = TITLES.get(r.name, "")
            recs.append(d)
        return {"schema_version": self.schema_version, "all_pass": self.all_pass,
                "properties": recs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _samples(f: DAMap, n: int, rng) -> np.ndarray:
    """Half Lebesgue-uniform, half concentrated in the surgery support."""
    if not f.params.enabled:
        return rng.random((n, 3))
    k = n // 2
    return np.concatenate([rng.random((n - k, 3)), chart_to_torus(f, chart_random(f, k, rng))])


def reference_orbit(f: DAMap) -> np.ndarray | None:
    """A periodic orbit of the linear model (period <= 2) other than q."""
    for per, orb in periodic_orbits(f.model, 2):
        if np.min(torus_distance(orb, f.q)) > 1e-9:
            return orb
    return None


def _p1(f: DAMap) -> PropertyRecord:
    if not f.params.enabled:
        return PropertyRecord("P1", "N/A", None, "surgery disabled: no index-1 saddle at q")
    J = f.eval_jacobian(f.q)
    ev = np.linalg.eigvals(J)
    mods = np.sort(np.abs(ev))
    prod = float(mods[0] * mods[1])
    expected = np.poly([f.params.mu_s, f.params.mu_w, f.model.lambda_u])
    coef_err = float(np.max(np.abs(np.poly(J) - expected)))
    details = {"eigenvalues_q": sorted(np.real_if_close(ev).real.tolist()),
               "charpoly_error": coef_err}
    ok = prod > 1 and coef_err < 1e-10
    orb = reference_orbit(f)
    if orb is not None:
        Ja = np.eye(3)
        for p in orb:
            Ja = f.jacobian_adapted(p)[0] @ Ja
        cs = Ja[:2, :2]
        disc = float(np.trace(cs) ** 2 - 4 * np.linalg.det(cs))
        dist = float(np.min(f.model.adapted_norm(nearest_lift(f.q, orb))))
        details |= {"r_orbit": orb.tolist(), "r_cs_discriminant": disc,
                    "r_distance_to_q": dist}
        ok = ok and disc < 0 and dist >= f.params.delta
    return PropertyRecord("P1", _status(ok), prod, "> 1", f.q.tolist(), details)


def _p2(f: DAMap, cones: ConeField, x, Ja) -> PropertyRecord:
    V = cone_vectors(cones.theta_u, 24, "u")
    img = Ja @ V.T                                    # (n, 3, k)
    norms = np.linalg.norm(img, axis=1)
    expansion = norms.min(axis=1)
    ang = np.arccos(np.clip(np.abs(img[:, 2, :]) / norms, -1, 1)).max(axis=1)
    i = int(np.argmin(expansion))
    ok = bool(np.all(ang < cones.theta_u) and expansion.min() > 1)
    return PropertyRecord("P2", _status(ok), float(expansion.min()), "> 1 and image angle < theta_u",
                          x[i].tolist(), {"max_image_angle": float(ang.max()),
                                          "theta_u": cones.theta_u})


def _p3(f: DAMap, x, rng) -> PropertyRecord:
    # partner on the same linear stable leaf: shift along E^s only
    s = rng.normal(size=(len(x), 2)) * f.params.delta
    xp = x + s @ f.model.P[:, :2].T
    du = f.model.to_adapted(nearest_lift(f.forward(x), f.forward(xp)))[:, 2]
    i = int(np.argmax(np.abs(du)))
    err = float(np.abs(du[i]))
    return PropertyRecord("P3", _status(err < 1e-12), err, "< 1e-12", x[i].tolist())


def _p4(f: DAMap, cones: ConeField, x, Ja) -> PropertyRecord:
    outside = f.model.adapted_norm(nearest_lift(f.q, x)) >= f.params.delta
    Jo = Ja[outside]
    worst_cone = cs_growth(Jo, cones.theta_cs)
    flat = np.linalg.norm(Jo @ cone_vectors(0.0, 48, "cs").T, axis=1).max(axis=1)
    i = int(np.argmax(worst_cone))
    val = float(worst_cone[i])
    return PropertyRecord("P4", _status(val < 1), val, "< 1 over the cs-cone",
                          x[outside][i].tolist(),
                          {"on_stable_plane": float(flat.max()), "n_outside": int(outside.sum())})


def _p5(f: DAMap, n: int, seed: int, n_trunc: int) -> PropertyRecord:
    e = ShadowEvaluator(f, n_trunc)
    res, eps = semiconjugacy_residual(e, n, seed)
    bound = e.tail_bound * (f.model.lambda_u + 1)
    ok = res <= bound + 1e-15 and eps < f.params.delta / 10
    return PropertyRecord("P5", _status(ok), res, "residual <= tail_bound (lambda_u + 1)", None,
                          {"eps_measured": eps, "tail_bound": e.tail_bound,
                           "eps_limit": f.params.delta / 10, "n_trunc": n_trunc})


def _p6(f: DAMap, cones: ConeField) -> PropertyRecord:
    L = crossing_length(f.model, 2 * f.params.delta, n_probe=100)
    return PropertyRecord("P6", _status(bool(np.isfinite(L))), L, "finite", None,
                          {"disc_radius": 2 * f.params.delta,
                           "configured_L": cones.L_crossing})


def _p7(f: DAMap, cones: ConeField, x, Ja) -> PropertyRecord:
    g = cs_growth(Ja, cones.theta_cs)
    pts = x
    if f.params.enabled:
        grid = chart_to_torus(f, chart_grid(f, 32))
        g = np.concatenate([g, cs_growth(f.jacobian_adapted(grid), cones.theta_cs)])
        pts = np.concatenate([x, grid])
    i = int(np.argmax(g))
    val = float(g[i])
    return PropertyRecord("P7", _status(val <= 1 + f.params.beta), val,
                          f"<= 1 + beta = {1 + f.params.beta:g}", pts[i].tolist(),
                          {"build_grid_max": f.validation.get("max_cs_growth_grid")})


def verify_da_properties(f: DAMap, cones: ConeField | None = None, n_samples: int = 20_000,
                         seed: int = 0, n_trunc: int = 80, n_semiconj: int = 2000) -> PropertyReport:
    cones = cones or ConeField()
    rng = np.random.default_rng(seed)
    x = _samples(f, n_samples, rng)
    Ja = f.jacobian_adapted(x)
    recs = [_p1(f), _p2(f, cones, x, Ja), _p3(f, x, rng), _p4(f, cones, x, Ja),
            _p5(f, n_semiconj, seed, n_trunc), _p6(f, cones), _p7(f, cones, x, Ja)]
    return PropertyReport(recs)


def locality_error(f: DAMap, n: int = 100_000, seed: int = 0) -> tuple[float, int]:
    """Max d(f(x), A(x)) over seeded samples at adapted distance >= delta from q."""
    rng = np.random.default_rng(seed)
    x = np.empty((0, 3))
    while len(x) < n:
        y = rng.random((n, 3))
        y = y[f.model.adapted_norm(nearest_lift(f.q, y)) >= f.params.delta]
        x = np.concatenate([x, y])[:n]
    return float(np.max(torus_distance(f.forward(x), f.model.forward(x)))), len(x)


def finite_difference_jacobian(f, x, step: float = 1e-6) -> np.ndarray:
    """Central differences of the lifted map (n, 3, 3)."""
    x = np.atleast_2d(x)
    J = np.empty((len(x), 3, 3))
    base = f.forward(x)
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        plus = nearest_lift(base, f.forward(x + e))
        minus = nearest_lift(base, f.forward(x - e))
        J[:, :, j] = (plus - minus) / (2 * step)
    return J


def jacobian_error(f, n: int = 1000, seed: int = 0, step: float = 1e-6) -> float:
    """Max entry error of the analytic Jacobian vs central differences at random points."""
    x = np.random.default_rng(seed).random((n, 3))
    return float(np.max(np.abs(f.jacobian(x) - finite_difference_jacobian(f, x, step))))

"""Derived-from-Anosov modification of the linear model near a fixed point q.

In adapted chart coordinates c = (s, u) around a lift of q the map is

    f(s, u) = (L(rho) s, lambda_u u),   rho = sqrt(|s|^2 + (kappa u)^2),

where L is a C^2 path of 2x2 matrices parameterised by log(rho): L = M (the
target matrix with eigenvalues mu_s, mu_w) for rho <= rho_in and L = A_s for
rho >= rho_out.  The u-component is never touched, so the planes u = const
(the stable foliation of the linear map) are mapped to planes exactly.

The path first deforms M into a multiple of the identity and then rotates
into A_s.  Because L depends on log(rho), the extra derivative term
(dL/dtau)(s s^T)/(Lambda rho^2) is bounded by |dL/dtau| / Lambda independently
of the scale, which is what keeps the centre-stable growth below 1 + beta.
The small aspect ratio kappa (support long in u, thin in s) keeps the
u-to-s coupling small enough for the unstable cones to survive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .anosov import AnosovModel
from .torus import nearest_lift, torus_distance, wrap


class SurgeryError(ValueError):
    pass


@dataclass(frozen=True)
class SurgeryParams:
    q: tuple = (0.0, 0.0, 0.0)
    delta: float = 0.08
    mu_s: float = 0.88
    mu_w: float = 1.20
    beta: float = 0.25
    enabled: bool = True
    aspect: float = 0.05        # kappa: s-radius of the support / delta
    log_range: float = 8.0      # Lambda: e-folds of rho over which L varies
    shrink_fraction: float = 0.25  # share of log_range spent before rotating

    def validate(self) -> None:
        if not self.enabled:
            return
        if not (0 < self.mu_s < 1 < self.mu_w):
            raise SurgeryError("need 0 < mu_s < 1 < mu_w (stable index 1 at q)")
        if self.mu_s * self.mu_w <= 1:
            raise SurgeryError(
                f"mu_s * mu_w = {self.mu_s * self.mu_w:.4g} must exceed 1")
        if self.mu_w > 1 + self.beta:
            raise SurgeryError("mu_w exceeds the 1 + beta growth budget")
        if not (0 < self.aspect < 1 and self.delta > 0 and self.log_range > 0):
            raise SurgeryError("delta, aspect and log_range must be positive (aspect < 1)")
        if not 0 < self.shrink_fraction < 1:
            raise SurgeryError("shrink_fraction must lie in (0, 1)")


RAMP = 0.25  # fraction of each phase spent accelerating / decelerating


def _smooth(x, a: float = RAMP):
    """C^2 monotone step 0 -> 1 on [0, 1] whose speed plateaus at 1/(1 - a).

    Its derivative ramps up and down with a cubic smoothstep, so the peak
    speed is much lower than that of a polynomial step of the same order.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    v = 1.0 / (1.0 - a)
    lo, hi = x / a, (1.0 - x) / a
    ramp = lambda y: y ** 3 - 0.5 * y ** 4
    return np.where(x < a, v * a * ramp(lo),
                    np.where(x > 1 - a, 1.0 - v * a * ramp(hi), v * (x - 0.5 * a)))


def _dsmooth(x, a: float = RAMP):
    x = np.asarray(x, dtype=float)
    v = 1.0 / (1.0 - a)
    y = np.clip(np.minimum(x, 1.0 - x) / a, 0.0, 1.0)
    inside = (x > 0) & (x < 1)
    return np.where(inside, v * (3 * y ** 2 - 2 * y ** 3), 0.0)


def _rot(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)


def _drot(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([-s, c], -1), np.stack([-c, -s], -1)], -2)


@dataclass(frozen=True, eq=False)
class DAMap:
    model: AnosovModel
    params: SurgeryParams
    correction_matrix: np.ndarray          # M - A_s at q, adapted (e_s1, e_s2) frame
    target: np.ndarray = field(repr=False)  # M = diag(mu_s, mu_w)
    q: np.ndarray = field(repr=False)
    rho_out: float = 0.0
    rho_in: float = 0.0
    k_iso: float = 0.0
    c_mod: float = 0.0
    phi_target: float = 0.0
    max_L_norm: float = 0.0
    validation: dict = field(default_factory=dict, repr=False)

    # --- matrix path -----------------------------------------------------

    def path(self, tau):
        """L(tau) and dL/dtau for tau in [0, 1] (0 = core, 1 = outside)."""
        tau = np.asarray(tau, dtype=float)
        t1 = self.params.shrink_fraction
        x1 = tau / t1
        x2 = (tau - t1) / (1 - t1)
        s1, d1 = _smooth(x1), _dsmooth(x1) / t1
        s2, d2 = _smooth(x2), _dsmooth(x2) / (1 - t1)
        ms, mw, k0 = self.params.mu_s, self.params.mu_w, self.k_iso
        # phase 1: diag(mu_s, mu_w) -> k0 I
        a = ms + s1 * (k0 - ms)
        b = mw + s1 * (k0 - mw)
        # phase 2: k I -> c R(phi_target)
        k = k0 + s2 * (self.c_mod - k0)
        phi = s2 * self.phi_target
        R = _rot(phi)
        L = np.where((tau <= t1)[..., None, None],
                     np.stack([np.stack([a, 0 * a], -1), np.stack([0 * b, b], -1)], -2),
                     k[..., None, None] * R)
        dL1 = np.stack([np.stack([(k0 - ms) * d1, 0 * d1], -1),
                        np.stack([0 * d1, (k0 - mw) * d1], -1)], -2)
        dL2 = ((self.c_mod - k0) * d2)[..., None, None] * R \
            + (k * self.phi_target * d2)[..., None, None] * _drot(phi)
        dL = np.where((tau <= t1)[..., None, None], dL1, dL2)
        return L, dL

    # --- chart -----------------------------------------------------------

    def chart(self, x):
        """Adapted coordinates (s1, s2, u) of the nearest lift of x around q."""
        d = nearest_lift(self.q, wrap(x))
        return d @ self.model.P_inv.T

    def radius(self, c):
        kap = self.params.aspect
        return np.sqrt(c[..., 0] ** 2 + c[..., 1] ** 2 + (kap * c[..., 2]) ** 2)

    def _tau(self, rho):
        lr = self.params.log_range
        with np.errstate(divide="ignore"):
            t = (np.log(np.maximum(rho, 1e-300)) - np.log(self.rho_in)) / lr
        return np.clip(t, 0.0, 1.0)

    def correction(self, c):
        """Chart displacement g_s = (L(rho) - A_s) s, zero outside the support."""
        g = np.zeros(c.shape[:-1] + (2,))
        if not self.params.enabled:
            return g
        rho = self.radius(c)
        mask = rho < self.rho_out
        if np.any(mask):
            cm = c[mask]
            L, _ = self.path(self._tau(rho[mask]))
            s = cm[:, :2]
            g[mask] = np.einsum("nij,nj->ni", L, s) - s @ self.model.A_s.T
        return g

    def support_mask(self, x):
        return self.radius(self.chart(x)) < self.rho_out

    # --- map protocol ----------------------------------------------------

    def forward(self, x):
        x = wrap(np.atleast_2d(np.asarray(x, dtype=float)))
        y = x @ self.model.M.T
        if self.params.enabled:
            c = self.chart(x)
            rho = self.radius(c)
            mask = rho < self.rho_out
            if np.any(mask):
                g = self.correction(c[mask])
                y[mask] += g @ self.model.P[:, :2].T
        return wrap(y)

    def s_block(self, c):
        """Chart derivative pieces (J_ss, J_su) of the s-component."""
        n = c.shape[:-1]
        Jss = np.broadcast_to(self.model.A_s, n + (2, 2)).copy()
        Jsu = np.zeros(n + (2,))
        if not self.params.enabled:
            return Jss, Jsu
        rho = self.radius(c)
        mask = rho < self.rho_out
        if np.any(mask):
            cm = c[mask]
            r = rho[mask]
            tau = self._tau(r)
            L, dL = self.path(tau)
            s = cm[:, :2]
            inside = (tau > 0) & (tau < 1)
            with np.errstate(divide="ignore", over="ignore"):
                w = np.where(inside, 1.0 / (self.params.log_range * r ** 2), 0.0)
            dLs = np.einsum("nij,nj->ni", dL, s)
            Jss[mask] = L + w[:, None, None] * dLs[:, :, None] * s[:, None, :]
            Jsu[mask] = (w * self.params.aspect ** 2 * cm[:, 2])[:, None] * dLs
        return Jss, Jsu

    def jacobian_adapted(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = self.chart(x)
        Jss, Jsu = self.s_block(c)
        J = np.zeros(c.shape[:-1] + (3, 3))
        J[..., :2, :2] = Jss
        J[..., :2, 2] = Jsu
        J[..., 2, 2] = self.model.lambda_u
        return J

    def jacobian(self, x):
        Ja = self.jacobian_adapted(x)
        return self.model.P @ Ja @ self.model.P_inv

    def inverse(self, y, tol: float = 1e-12, max_steps: int = 50):
        """Newton inversion in the chart, starting from the linear preimage."""
        y = wrap(np.atleast_2d(np.asarray(y, dtype=float)))
        x0 = self.model.inverse(y)
        if not self.params.enabled:
            return x0
        c0 = self.chart(x0)
        reach = 1.05 * self.max_L_norm / self.c_mod
        cand = self.radius(c0) < reach * self.rho_out
        if not np.any(cand):
            return x0
        cc = c0[cand]
        u = cc[:, 2]
        target = cc[:, :2] @ self.model.A_s.T
        s = cc[:, :2].copy()

        F = resid_sub(self, s, u, target)
        scale = np.maximum(np.linalg.norm(target, axis=1), self.rho_in)
        for _ in range(max_steps):
            nF = np.linalg.norm(F, axis=1)
            active = nF > 1e-15 * np.maximum(scale, 1e-3)
            if not np.any(active):
                break
            Jss, _ = self.s_block(np.column_stack([s[active], u[active]]))
            step = np.linalg.solve(Jss, F[active][..., None])[..., 0]
            t = np.ones(active.sum())
            s_new = s[active] - step
            F_new = resid_sub(self, s_new, u[active], target[active])
            # damp steps that do not reduce the residual
            for _ in range(30):
                bad = np.linalg.norm(F_new, axis=1) > np.linalg.norm(F[active], axis=1)
                if not np.any(bad):
                    break
                t[bad] *= 0.5
                s_new[bad] = s[active][bad] - t[bad, None] * step[bad]
                F_new[bad] = resid_sub(self, s_new[bad], u[active][bad], target[active][bad])
            s[active] = s_new
            F[active] = F_new
        err = np.linalg.norm(F, axis=1)
        if np.any(err > tol * 1e-2 + 1e-15):
            worst = int(np.argmax(err))
            raise SurgeryError(
                f"Newton inversion failed to converge (residual {err[worst]:.3e} at chart {cc[worst]})")
        out = x0.copy()
        lift = np.column_stack([s, u]) @ self.model.P.T
        out[cand] = wrap(self.q + lift)
        return out

    # --- scalar conveniences ---------------------------------------------

    def eval_forward(self, p):
        return self.forward(p)[0]

    def eval_jacobian(self, p):
        return self.jacobian(p)[0]

    def eval_inverse(self, p):
        return self.inverse(p)[0]

    @property
    def sup_correction(self) -> float:
        """sup |f - A| in adapted norm, i.e. max over rho of rho * |L(rho) - A_s|."""
        if not self.params.enabled:
            return 0.0
        lr = np.linspace(np.log(self.rho_in), np.log(self.rho_out), 4001)
        L, _ = self.path(self._tau(np.exp(lr)))
        norms = np.linalg.norm(L - self.model.A_s, ord=2, axis=(1, 2))
        return float(np.max(np.exp(lr) * norms))


def resid_sub(f: DAMap, s, u, target):
    full = np.column_stack([s, u])
    return s @ f.model.A_s.T + f.correction(full) - target


def _assemble(model: AnosovModel, params: SurgeryParams) -> DAMap:
    q = wrap(np.asarray(params.q, dtype=float))
    if np.max(torus_distance(model.forward(q), q)) > 1e-12:
        raise SurgeryError("surgery centre q must be a fixed point of the linear model")
    target = np.diag([params.mu_s, params.mu_w])
    c_mod = model.lambda_c_mod
    phi = float(np.arctan2(model.A_s[0, 1], model.A_s[0, 0]))
    rho_out = params.aspect * params.delta
    f = DAMap(model=model, params=params, correction_matrix=target - model.A_s,
              target=target, q=q, rho_out=rho_out,
              rho_in=rho_out * np.exp(-params.log_range),
              k_iso=max(params.mu_s, c_mod), c_mod=c_mod, phi_target=phi)
    tau = np.linspace(0, 1, 2001)
    L, _ = f.path(tau)
    object.__setattr__(f, "max_L_norm", float(np.max(np.linalg.norm(L, ord=2, axis=(1, 2)))))
    return f


def chart_grid(f: DAMap, n: int = 64, rho_lo: float | None = None) -> np.ndarray:
    """Structured chart samples filling the support: log-radius x azimuth x tilt."""
    lo = np.log(rho_lo if rho_lo is not None else f.rho_in * 0.5)
    lr = np.linspace(lo, np.log(f.rho_out), n)
    az = np.linspace(0, 2 * np.pi, n, endpoint=False)
    tilt = np.linspace(-np.pi / 2, np.pi / 2, n)
    R, Z, T = np.meshgrid(np.exp(lr), az, tilt, indexing="ij")
    s1 = R * np.cos(T) * np.cos(Z)
    s2 = R * np.cos(T) * np.sin(Z)
    u = R * np.sin(T) / f.params.aspect
    return np.stack([s1, s2, u], -1).reshape(-1, 3)


def chart_random(f: DAMap, n: int, rng) -> np.ndarray:
    """Random chart points in the support, log-uniform in rho."""
    r = np.exp(rng.uniform(np.log(f.rho_in * 0.5), np.log(f.rho_out), n))
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    c = v * r[:, None]
    c[:, 2] /= f.params.aspect
    return c


def chart_to_torus(f: DAMap, c) -> np.ndarray:
    return wrap(f.q + np.asarray(c) @ f.model.P.T)


def cs_growth(Ja, theta_cs: float, n_azimuth: int = 24) -> np.ndarray:
    """Sampled max of |Df v| / |v| over the cs-cone (adapted frame Jacobians)."""
    from .anosov import cone_vectors
    worst = np.zeros(Ja.shape[0])
    for ang in (0.0, 0.5 * theta_cs, theta_cs):
        V = cone_vectors(ang, n_azimuth, "cs")
        for sgn in (1, -1):
            W = V.copy()
            W[:, 2] *= sgn
            img = Ja @ W.T
            worst = np.maximum(worst, np.sqrt(np.max(np.sum(img * img, axis=1), axis=1)))
    return worst


def _validate(f: DAMap, theta_cs: float = 0.15, n_grid: int = 64, n_newton: int = 10_000,
              seed: int = 0) -> dict:
    c = chart_grid(f, n_grid)
    Jss, _ = f.s_block(c)
    det = np.linalg.det(Jss) * f.model.lambda_u
    if np.any(det <= 0):
        raise SurgeryError("not a diffeomorphism: reduce correction strength")
    x = chart_to_torus(f, c)
    growth = cs_growth(f.jacobian_adapted(x), theta_cs)
    if np.max(growth) > 1 + f.params.beta:
        raise SurgeryError(f"beta budget exceeded: cs growth {np.max(growth):.4f}")
    rng = np.random.default_rng(seed)
    pts = np.concatenate([chart_to_torus(f, chart_random(f, n_newton // 2, rng)),
                          rng.random((n_newton - n_newton // 2, 3))])
    y = f.forward(pts)
    back = f.inverse(y)
    if np.max(torus_distance(back, pts)) > 1e-10:
        raise SurgeryError("not a diffeomorphism: Newton inversion disagrees with forward map")
    return {"min_det": float(det.min()), "max_cs_growth_grid": float(growth.max())}


def build_da_map(model: AnosovModel, params: SurgeryParams | None = None,
                 retries: int = 3, theta_cs: float = 0.15) -> DAMap:
    """Assemble and validate the modified map.

    If the grid checks fail, the log-range of the matrix path is stretched by
    25% and the build retried, up to ``retries`` times.
    """
    params = params or SurgeryParams()
    params.validate()
    if params.enabled:
        ext = np.linalg.norm(model.P, 2) * np.hypot(params.delta, params.aspect * params.delta)
        if ext >= 0.5:
            raise SurgeryError("delta too large: support does not fit in one fundamental domain")
    last = None
    for attempt in range(retries + 1):
        f = _assemble(model, params)
        if not params.enabled:
            return f
        try:
            info = _validate(f, theta_cs)
            object.__setattr__(f, "validation", info | {"attempts": attempt + 1})
            return f
        except SurgeryError as exc:
            last = exc
            if "Newton" in str(exc):
                raise
            params = replace(params, log_range=params.log_range * 1.25)
            warnings.warn(f"surgery check failed ({exc}); retrying with log_range "
                          f"{params.log_range:.3g}")
    raise last


# --- invariant arcs through q ---------------------------------------------

@dataclass
class Arc:
    points: np.ndarray       # torus coordinates, (n, 3)
    lift: np.ndarray         # continuous lift starting at the lift of q
    length: float
    partial: bool
    exit_length: float | None = None   # arclength inside B(q, delta) before first exit


def _grow_branch(f: DAMap, direction, eig: float, backward: bool, length: float,
                 hmax: float, max_pieces: int, max_points: int = 200_000,
                 need_length: bool = True, until_exit: bool = False):
    """Grow one branch of the 1-d invariant manifold of q along an eigendirection.

    Uses fundamental domains: in the core the map is linear, so the segment
    q + t v, t in [t0, t0 * g] (g the per-step growth factor) is a
    fundamental domain; its images under f^{+-n} tile the branch.
    """
    if backward:
        step = f.inverse
    else:
        # the cs-leaf u = 0 of q is exactly invariant; without re-projection the
        # rounding error in u is amplified by lambda_u at every step
        def step(y):
            c = f.chart(f.forward(y))
            c[:, 2] = 0.0
            return chart_to_torus(f, c)
    g = 1 / eig if backward else eig
    t0 = 0.25 * f.rho_in
    v = np.asarray(direction, dtype=float)

    def seed(t):
        return wrap(f.q + np.outer(t, v))

    # straight part from q to t0 is exactly invariant
    lift = [f.q.copy(), f.q + t0 * v]
    total = t0 * np.linalg.norm(v)
    params = np.linspace(t0, t0 * g, 65)
    imgs = seed(params)
    partial = False
    for n in range(max_pieces):
        if n > 0:
            imgs = step(imgs)
        while True:
            gaps = torus_distance(imgs[:-1], imgs[1:])
            bad = np.nonzero(gaps > hmax)[0]
            if len(bad) == 0:
                break
            if len(params) > max_points:
                partial = True
                break
            mids = 0.5 * (params[bad] + params[bad + 1])
            new = seed(mids)
            for _ in range(n):
                new = step(new)
            params = np.insert(params, bad + 1, mids)
            imgs = np.insert(imgs, bad + 1, new, axis=0)
        if partial:
            break
        start = lift[-1]
        inc = nearest_lift(imgs[:-1], imgs[1:])
        piece = start + np.concatenate([np.zeros((1, 3)), np.cumsum(inc, axis=0)])
        # the piece must start where the previous one ended
        lift.extend(piece[1:])
        total += float(np.sum(np.linalg.norm(inc, axis=1)))
        exited = np.max(f.model.adapted_norm(piece - f.q)) >= f.params.delta
        if total >= length and (exited or not until_exit):
            break
    else:
        partial = need_length and total < length
    return np.array(lift), total, partial


def _exit_length(f: DAMap, lift: np.ndarray) -> float | None:
    d = f.model.adapted_norm(lift - f.q)
    seg = np.linalg.norm(np.diff(lift, axis=0), axis=1)
    out = np.nonzero(d >= f.params.delta)[0]
    if len(out) == 0:
        return None
    return float(np.sum(seg[:out[0]]))


def _resample(lift: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(lift, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0, cum[-1], n)
    return np.column_stack([np.interp(t, cum, lift[:, k]) for k in range(3)])


def invariant_arc(f: DAMap, which: str, arclength: float, n_nodes: int = 2001,
                  max_pieces: int = 400, until_exit: bool = False) -> Arc:
    """Stable ('s', eigenvalue mu_s) or weak-unstable ('wu', mu_w) arc of q.

    With ``until_exit`` each branch keeps growing past ``arclength / 2`` until
    it leaves B(q, delta), so that ``exit_length`` is defined.
    """
    if not f.params.enabled:
        raise SurgeryError("surgery disabled: q has no index-1 splitting")
    if which == "s":
        col, eig, backward = 0, f.params.mu_s, True
        if not eig < 1:
            raise SurgeryError("stable eigenvalue must be < 1")
    elif which == "wu":
        col, eig, backward = 1, f.params.mu_w, False
    else:
        raise ValueError(which)
    v = f.model.P[:, col]
    hmax = max(arclength / n_nodes, 1e-9)
    branches = []
    partial = False
    exit_len = []
    for sgn in (1.0, -1.0):
        lift, total, part = _grow_branch(f, sgn * v, eig, backward, arclength / 2, hmax,
                                         max_pieces, need_length=(which == "s"),
                                         until_exit=until_exit)
        branches.append(lift)
        partial |= part
        exit_len.append(_exit_length(f, lift))
    full = np.concatenate([branches[1][::-1], branches[0][1:]])
    if partial:
        warnings.warn(f"{which}-arc of q stopped early; numerical reliability limit reached")
    seg = np.linalg.norm(np.diff(full, axis=0), axis=1)
    length = float(seg.sum())
    res = _resample(full, n_nodes)
    exits = [e for e in exit_len if e is not None]
    return Arc(points=wrap(res), lift=res, length=length, partial=partial,
               exit_length=min(exits) if len(exits) == 2 else None)


def stable_arc_of_q(f: DAMap, arclength: float, n_nodes: int = 2001,
                    until_exit: bool = False) -> Arc:
    return invariant_arc(f, "s", arclength, n_nodes, until_exit=until_exit)

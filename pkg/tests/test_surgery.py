import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from datorus.properties import finite_difference_jacobian, jacobian_error, locality_error
from datorus.surgery import (RAMP, SurgeryError, SurgeryParams, _dsmooth, _smooth, build_da_map,
                             chart_grid, chart_random, chart_to_torus, cs_growth, invariant_arc,
                             stable_arc_of_q)
from datorus.torus import nearest_lift, torus_distance


def _outside(f, rng, n):
    x = rng.random((n, 3))
    return x[f.model.adapted_norm(nearest_lift(f.q, x)) >= f.params.delta]


@pytest.mark.parametrize("kw, msg", [
    (dict(mu_s=0.8, mu_w=1.2), "must exceed 1"),
    (dict(mu_s=1.1), "mu_s"),
    (dict(mu_w=1.3, beta=0.25), r"1 \+ beta"),
    (dict(aspect=0.0), "positive"),
    (dict(shrink_fraction=1.0), "shrink_fraction"),
])
def test_params_rejected(model, kw, msg):
    with pytest.raises(SurgeryError, match=msg):
        build_da_map(model, SurgeryParams(**kw))


def test_delta_too_large(model):
    with pytest.raises(SurgeryError, match="delta too large"):
        build_da_map(model, SurgeryParams(delta=0.6, aspect=0.5))


def test_centre_must_be_fixed(model):
    with pytest.raises(SurgeryError, match="fixed point"):
        build_da_map(model, SurgeryParams(q=(1 / 3, 1 / 3, 2 / 3)))


def test_disabled_is_linear(model, linear_map, rng):
    x = rng.random((5000, 3))
    assert np.array_equal(linear_map.forward(x), model.forward(x))
    assert np.allclose(linear_map.jacobian(x), model.M, atol=1e-12)
    assert linear_map.sup_correction == 0.0


def test_locality_exact(da_map, rng):
    x = _outside(da_map, rng, 50_000)
    assert np.array_equal(da_map.forward(x), da_map.model.forward(x))
    err, n = locality_error(da_map, n=20_000, seed=3)
    assert err == 0.0 and n == 20_000


def test_support_is_small(da_map, rng):
    x = rng.random((20_000, 3))
    inside = da_map.support_mask(x)
    far = da_map.model.adapted_norm(nearest_lift(da_map.q, x[inside]))
    assert np.all(far < da_map.params.delta)


def test_jacobian_at_q(da_map):
    p = da_map.params
    ev = np.sort(np.linalg.eigvals(da_map.eval_jacobian(da_map.q)).real)
    assert np.allclose(ev, sorted([p.mu_s, p.mu_w, da_map.model.lambda_u]), atol=1e-12)


def test_forward_fixes_q(da_map):
    assert torus_distance(da_map.eval_forward(da_map.q), da_map.q) < 1e-15


def test_path_endpoints(da_map):
    L, dL = da_map.path(np.array([0.0, 1.0]))
    assert np.allclose(L[0], np.diag([da_map.params.mu_s, da_map.params.mu_w]), atol=1e-15)
    assert np.allclose(L[1], da_map.model.A_s, atol=1e-14)
    assert np.allclose(dL, 0, atol=1e-14)


@given(st.floats(0, 1))
def test_smooth_profile(x):
    assert 0 <= _smooth(x) <= 1
    assert 0 <= _dsmooth(x) <= 1 / (1 - RAMP) + 1e-12


def test_smooth_profile_monotone_and_c1():
    x = np.linspace(-0.2, 1.2, 20_001)
    s = _smooth(x)
    assert np.all(np.diff(s) >= -1e-15)
    assert s[0] == 0 and s[-1] == 1
    # numerical derivative agrees with the analytic one
    h = x[1] - x[0]
    num = np.gradient(s, h)
    assert np.max(np.abs(num - _dsmooth(x))) < 1e-3
    assert np.max(_dsmooth(x)) == pytest.approx(1 / (1 - RAMP), rel=1e-6)


def test_inverse_roundtrip(da_map, rng):
    x = np.concatenate([rng.random((3000, 3)),
                        chart_to_torus(da_map, chart_random(da_map, 3000, rng))])
    assert np.max(torus_distance(da_map.inverse(da_map.forward(x)), x)) < 1e-12
    assert np.max(torus_distance(da_map.forward(da_map.inverse(x)), x)) < 1e-12


def test_jacobian_matches_fd_globally(da_map):
    assert jacobian_error(da_map, n=2000, seed=1) < 1e-6


def test_jacobian_matches_fd_in_support(da_map, rng):
    """Central differences with steps scaled to the local radius."""
    f = da_map
    c = chart_random(f, 2000, rng)
    x = chart_to_torus(f, c)
    rho = f.radius(c)
    fd = np.empty((len(x), 3, 3))
    for j in range(3):
        h = 1e-5 * rho / (f.params.aspect if j == 2 else 1.0)
        e = np.zeros_like(c)
        e[:, j] = h
        d = nearest_lift(f.forward(chart_to_torus(f, c - e)), f.forward(chart_to_torus(f, c + e)))
        fd[:, :, j] = f.model.to_adapted(d) / (2 * h[:, None])
    err = np.max(np.abs(fd - f.jacobian_adapted(x)), axis=(1, 2))
    assert err.max() < 1e-4
    assert np.median(err) < 1e-7


def test_fd_helper_on_linear(linear_map, rng):
    x = rng.random((10, 3))
    assert np.allclose(finite_difference_jacobian(linear_map, x), linear_map.model.M, atol=1e-8)


def test_diffeomorphism_checks(da_map):
    c = chart_grid(da_map, 32)
    Jss, _ = da_map.s_block(c)
    assert np.min(np.linalg.det(Jss)) > 0
    assert da_map.validation["min_det"] > 0
    assert da_map.validation["max_cs_growth_grid"] <= 1 + da_map.params.beta


def test_cs_growth_bounded_on_grid(da_map):
    x = chart_to_torus(da_map, chart_grid(da_map, 24))
    g = cs_growth(da_map.jacobian_adapted(x), 0.15)
    assert g.max() <= 1 + da_map.params.beta


def test_retry_without_budget_raises(model):
    with pytest.raises(SurgeryError):
        build_da_map(model, SurgeryParams(log_range=3.0), retries=0)


def test_retry_stretches_log_range(model):
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        f = build_da_map(model, SurgeryParams(log_range=3.0), retries=6)
    assert f.params.log_range > 3.0
    assert f.validation["attempts"] > 1
    assert any("retrying" in str(x.message) for x in w)


def test_sup_correction_oracle(da_map, rng):
    """Brute-force max of |f - A| over support samples stays below the closed form."""
    x = chart_to_torus(da_map, chart_random(da_map, 200_000, rng))
    d = da_map.model.adapted_norm(nearest_lift(da_map.model.forward(x), da_map.forward(x)))
    assert d.max() <= da_map.sup_correction * (1 + 1e-9)
    assert d.max() >= 0.5 * da_map.sup_correction


def test_stable_arc_in_core_is_straight(da_map):
    f = da_map
    arc = stable_arc_of_q(f, 0.2 * f.rho_in, n_nodes=201)
    off = f.model.to_adapted(arc.lift - f.q)
    assert np.max(np.abs(off[:, 1:])) < 1e-15
    assert arc.length >= 0.2 * f.rho_in
    assert np.max(np.linalg.norm(off, axis=1)) < f.rho_in


def test_stable_arc_is_invariant(da_map):
    f = da_map
    arc = stable_arc_of_q(f, 1e-3, n_nodes=501)
    assert not arc.partial and arc.length >= 1e-3
    img = f.forward(arc.points)
    spacing = np.max(np.linalg.norm(np.diff(arc.lift, axis=0), axis=1))
    d = torus_distance(img[:, None, :], arc.points[None, :, :]).min(axis=1)
    assert d.max() <= spacing


def test_stable_arc_resolution_independent(da_map):
    a = stable_arc_of_q(da_map, 1e-3, n_nodes=501)
    b = stable_arc_of_q(da_map, 1e-3, n_nodes=1001)
    assert a.length == pytest.approx(b.length, rel=1e-3)


def test_weak_unstable_arc_is_short_and_cs(da_map):
    f = da_map
    arc = invariant_arc(f, "wu", 1e-3, n_nodes=401)
    # the branch ends at the new cs sinks, well inside the support
    assert arc.length < f.rho_out
    assert np.max(np.abs(f.chart(arc.points)[:, 2])) < 1e-15


def test_arcs_need_surgery(linear_map, da_map):
    with pytest.raises(SurgeryError):
        stable_arc_of_q(linear_map, 0.1)
    with pytest.raises(ValueError):
        invariant_arc(da_map, "x", 0.1)

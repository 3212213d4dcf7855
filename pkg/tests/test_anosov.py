import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from datorus.anosov import (DEFAULT_MATRIX, ConeField, SpectrumError, char_poly, cone_angle,
                            cone_membership, cone_vectors, crossing_length, eigen_split,
                            int_adjugate, int_det, int_matrix_power, lattice_index,
                            periodic_orbits, periodic_points)
from datorus.torus import torus_distance

# frozen from an independent np.roots / np.linalg.eig computation
LAMBDA_U = 1.4655712318767680
LAMBDA_C = 0.826031357654187


def test_char_poly_exact():
    assert char_poly(DEFAULT_MATRIX) == (1, -1, 0, -1)


def test_eigen_split_values(model):
    assert model.lambda_u == pytest.approx(LAMBDA_U, abs=1e-12)
    assert model.lambda_c_mod == pytest.approx(LAMBDA_C, abs=1e-12)
    assert model.lambda_u * model.lambda_c_mod ** 2 == pytest.approx(1.0, abs=1e-12)
    ev = np.linalg.eigvals(np.array(DEFAULT_MATRIX, float))
    assert np.max(np.abs(ev)) == pytest.approx(model.lambda_u, abs=1e-12)


def test_eigenvectors(model):
    M = model.M
    assert np.allclose(M @ model.e_u, model.lambda_u * model.e_u, atol=1e-12)
    # E^s is invariant and A acts there with modulus lambda_c
    Es = np.column_stack([model.e_s1, model.e_s2])
    img = M @ Es
    coef = np.linalg.lstsq(Es, img, rcond=None)[0]
    assert np.allclose(Es @ coef, img, atol=1e-12)
    assert np.allclose(coef, model.A_s, atol=1e-12)
    assert np.allclose(np.abs(np.linalg.eigvals(model.A_s)), model.lambda_c_mod, atol=1e-12)
    # the block is a scaled rotation in the adapted frame
    assert np.allclose(model.A_s @ model.A_s.T, model.lambda_c_mod ** 2 * np.eye(2), atol=1e-12)


def test_adapted_frame_block_diagonal(model):
    J = model.jacobian_adapted(np.zeros(3))
    assert np.allclose(J[:2, 2], 0, atol=1e-12) and np.allclose(J[2, :2], 0, atol=1e-12)
    assert J[2, 2] == pytest.approx(model.lambda_u, abs=1e-12)


def test_forward_inverse_and_jacobian(model, rng):
    x = rng.random((1000, 3))
    assert np.max(torus_distance(model.inverse(model.forward(x)), x)) < 1e-13
    J = model.jacobian(x)
    assert J.shape == (1000, 3, 3) and np.array_equal(J[0], model.M)


def test_entropy(model):
    assert model.entropy == pytest.approx(np.log(LAMBDA_U), abs=1e-12)


@pytest.mark.parametrize("bad", [
    ((2, 0, 0), (0, 1, 0), (0, 0, 1)),          # det 2
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),          # identity: not hyperbolic
    ((2, 1, 0), (1, 1, 0), (0, 0, 1)),          # eigenvalue 1
    ((0, 0, 1), (1, 0, -1), (0, 1, 0)),         # expanding complex pair
])
def test_bad_matrices_raise(bad):
    with pytest.raises(SpectrumError):
        eigen_split(bad)


def test_all_real_spectrum_rejected():
    # companion of x^3 - 4x^2 + x + 1: three real roots
    with pytest.raises(SpectrumError):
        eigen_split(((0, 0, -1), (1, 0, -1), (0, 1, 4)))


def test_power_two(model):
    m2 = eigen_split(DEFAULT_MATRIX, 2)
    assert m2.lambda_u == pytest.approx(LAMBDA_U ** 2, abs=1e-12)
    with pytest.raises(ValueError):
        eigen_split(DEFAULT_MATRIX, 0)


def test_integer_helpers():
    M = [list(r) for r in DEFAULT_MATRIX]
    assert int_det(M) == 1
    adj = int_adjugate(M)
    prod = np.array(M, dtype=object) @ np.array(adj, dtype=object)
    assert (prod == np.eye(3, dtype=int) * int_det(M)).all()
    P = int_matrix_power(M, 20)
    assert (np.array(P, dtype=object) ==
            np.linalg.matrix_power(np.array(M, dtype=object), 20)).all()


@pytest.mark.parametrize("n", range(1, 7))
def test_periodic_point_counts(model, n):
    pts = periodic_points(model, n)
    # oracle: |det(A^n - I)| from a floating point determinant, rounded
    An = np.linalg.matrix_power(np.array(DEFAULT_MATRIX, float), n)
    oracle = int(round(abs(np.linalg.det(An - np.eye(3)))))
    assert len(pts) == oracle == lattice_index(model, n)
    for p, per in pts:
        y = p
        for _ in range(n):
            y = model.forward(y)
        assert torus_distance(y, p) < 1e-12
        assert n % per == 0


def test_known_period_two_orbit(model):
    orbs = dict((tuple(np.round(o[0], 9)), (p, o)) for p, o in periodic_orbits(model, 2))
    pts = {tuple(np.round(o, 9)) for p, orb in orbs.values() for o in orb if p == 2}
    assert (round(1 / 3, 9), round(1 / 3, 9), round(2 / 3, 9)) in pts
    assert (round(2 / 3, 9), round(2 / 3, 9), round(1 / 3, 9)) in pts


def test_orbits_disjoint(model):
    orbs = periodic_orbits(model, 5)
    allpts = np.concatenate([o for _, o in orbs])
    d = torus_distance(allpts[:, None, :], allpts[None, :, :])
    np.fill_diagonal(d, 1.0)
    assert d.min() > 1e-9
    counts = {n: sum(p for p, _ in orbs if n % p == 0) for n in range(1, 6)}
    for n, c in counts.items():
        assert c == lattice_index(model, n)


def test_cone_field_validation():
    with pytest.raises(ValueError):
        ConeField(theta_u=0.0)
    with pytest.raises(ValueError):
        ConeField(theta_cs=1.0)


def test_cone_membership(model):
    cones = ConeField()
    assert cone_membership(model, cones, model.e_u, "u")
    assert not cone_membership(model, cones, model.e_s1, "u")
    assert cone_membership(model, cones, model.e_s2, "cs")
    with pytest.raises(ValueError):
        cone_membership(model, cones, np.zeros(3), "u")
    with pytest.raises(ValueError):
        cone_angle(model, model.e_u, "weird")


@given(st.floats(0.01, 0.7), st.integers(3, 40))
def test_cone_vectors_on_boundary(theta, k):
    V = cone_vectors(theta, k, "u")
    assert np.allclose(np.linalg.norm(V, axis=1), 1)
    assert np.allclose(np.arctan2(np.linalg.norm(V[:, :2], axis=1), V[:, 2]), theta)
    W = cone_vectors(theta, k, "cs")
    assert np.allclose(np.arctan2(np.abs(W[:, 2]), np.linalg.norm(W[:, :2], axis=1)), theta)


def test_linear_cones_invariant(model):
    cones = ConeField()
    Ja = model.jacobian_adapted(np.zeros(3))
    img = cone_vectors(cones.theta_u, 64, "u") @ Ja.T
    ang = np.arctan2(np.linalg.norm(img[:, :2], axis=1), np.abs(img[:, 2]))
    assert ang.max() < cones.theta_u
    assert np.linalg.norm(img, axis=1).min() > 1


def test_crossing_length_finite_and_monotone(model):
    L1 = crossing_length(model, 0.16, n_probe=40)
    L2 = crossing_length(model, 0.32, n_probe=40)
    assert np.isfinite(L1) and np.isfinite(L2)
    assert L2 <= L1 + 1e-9


def test_periodic_points_bounds(model):
    with pytest.raises(ValueError):
        periodic_points(model, 0)
    with pytest.raises(ValueError):
        periodic_points(model, 9)


def test_period_counts_generic_matrix():
    # a second hyperbolic matrix with a complex contracting pair, cross-checked by brute force
    m = eigen_split(((0, 1, 0), (0, 0, 1), (1, 1, 0)))
    assert m.lambda_u == pytest.approx(1.324717957244746, abs=1e-12)
    for n in (1, 2, 3):
        pts = periodic_points(m, n)
        D = lattice_index(m, n)
        grid = np.array(list(itertools.product(range(D), repeat=3))) / D
        Mn = np.linalg.matrix_power(m.M, n)
        ok = torus_distance(grid @ Mn.T, grid) < 1e-9
        assert ok.sum() == len(pts)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoflow.errors import AmbientTooSmall, DimensionError, DimensionMismatch, RankDeficient
from geoflow.subspace import (
    DEFAULT_SUBSPACE_DIM,
    Subspace,
    feasible_dim,
    fit_subspace,
    orthogonal_complement,
    principal_angles,
    projection_distance,
    random_subspace,
)


def test_default_dimension_is_256():
    assert DEFAULT_SUBSPACE_DIM == 256


def test_fit_recovers_known_plane(rng):
    # samples spread along e1 (large) and e2 (smaller), tiny noise elsewhere
    n = 200
    X = np.zeros((n, 5))
    X[:, 0] = 10.0 * rng.standard_normal(n)
    X[:, 1] = 3.0 * rng.standard_normal(n)
    X[:, 2:] = 1e-3 * rng.standard_normal((n, 3))
    X += [5.0, -2.0, 1.0, 0.0, 0.0]
    sub = fit_subspace(X, 2)
    E = np.eye(5)[:, :2]
    assert projection_distance(sub.basis, E) < 1e-3
    np.testing.assert_allclose(sub.mean, X.mean(axis=0))


def test_fit_is_orthonormal_and_sign_canonical(rng):
    sub = fit_subspace(rng.standard_normal((40, 12)), 5)
    assert np.max(np.abs(sub.basis.T @ sub.basis - np.eye(5))) <= 1e-10
    idx = np.argmax(np.abs(sub.basis), axis=0)
    assert np.all(sub.basis[idx, np.arange(5)] > 0)


def test_fit_without_centering_stores_zero_mean(rng):
    sub = fit_subspace(rng.standard_normal((10, 6)) + 3.0, 2, center=False)
    np.testing.assert_array_equal(sub.mean, np.zeros(6))


def test_fit_rejects_bad_dimensions(rng):
    X = rng.standard_normal((10, 6))
    for N in (0, 6, 7):
        with pytest.raises(DimensionError):
            fit_subspace(X, N)
    with pytest.raises(DimensionError):
        fit_subspace(X[:1], 2)


def test_fit_rank_deficient(rng):
    X = rng.standard_normal((20, 2)) @ rng.standard_normal((2, 8))
    with pytest.raises(RankDeficient):
        fit_subspace(X, 3)


def test_feasible_dim_caps(rng):
    X = rng.standard_normal((20, 3)) @ rng.standard_normal((3, 40))
    assert feasible_dim(256, X) == 3
    assert feasible_dim(256, rng.standard_normal((5, 40))) == 4
    assert feasible_dim(256, rng.standard_normal((100, 10))) == 5
    assert feasible_dim(2, rng.standard_normal((100, 10))) == 2


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def test_fit_scale_invariant(c, seed):
    X = np.random.default_rng(seed).standard_normal((30, 10))
    a, b = fit_subspace(X, 3), fit_subspace(c * X, 3)
    np.testing.assert_allclose(a.basis, b.basis, atol=1e-9)


def test_subspace_validation():
    with pytest.raises(DimensionError):
        Subspace(np.ones((3, 1)))
    with pytest.raises(DimensionError):
        Subspace(np.eye(3))
    with pytest.raises(DimensionMismatch):
        Subspace(np.eye(3)[:, :1], mean=np.zeros(2))


def test_complement_is_orthogonal(rng):
    P = random_subspace(rng, 9, 3)
    R = orthogonal_complement(P)
    assert R.shape == (9, 6)
    assert np.max(np.abs(R.T @ P.basis)) < 1e-12
    assert np.max(np.abs(R.T @ R - np.eye(6))) < 1e-12


def test_planar_rotation_30_degrees():
    e = np.eye(4)
    Ps = Subspace(e[:, :1])
    Pt = Subspace((np.cos(np.pi / 6) * e[:, 0] + np.sin(np.pi / 6) * e[:, 1])[:, None])
    np.testing.assert_allclose(principal_angles(Ps, Pt).omegas, [np.pi / 6], atol=1e-12)


def test_identical_subspaces_zero_angles(rng):
    P = random_subspace(rng, 16, 5)
    assert np.max(principal_angles(P, P).omegas) < 1e-12


def test_angles_match_independent_svd(rng):
    Ps, Pt = random_subspace(rng, 32, 8), random_subspace(rng, 32, 8)
    s = np.linalg.svd(Ps.basis.T @ Pt.basis, compute_uv=False)
    expected = np.sort(np.arccos(np.clip(s, -1.0, 1.0)))
    np.testing.assert_allclose(principal_angles(Ps, Pt).omegas, expected, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(0, 6))
def test_angles_symmetric_sorted_bounded(seed, N, extra):
    rng = np.random.default_rng(seed)
    D = 2 * N + extra
    Ps, Pt = random_subspace(rng, D, N), random_subspace(rng, D, N)
    a = principal_angles(Ps, Pt).omegas
    b = principal_angles(Pt, Ps).omegas
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert np.all(np.diff(a) >= 0)
    assert a[0] >= 0 and a[-1] <= np.pi / 2


def test_paired_factorization(rng):
    Ps, Pt = random_subspace(rng, 20, 6), random_subspace(rng, 20, 6)
    pa = principal_angles(Ps, Pt)
    W = pa.omegas
    np.testing.assert_allclose(Ps.basis.T @ Pt.basis, pa.U1 @ np.diag(np.cos(W)) @ pa.V.T, atol=1e-12)
    np.testing.assert_allclose(pa.complement.T @ Pt.basis, -pa.U2 @ np.diag(np.sin(W)) @ pa.V.T, atol=1e-12)
    assert np.max(np.abs(pa.U2.T @ pa.U2 - np.eye(6))) < 1e-12


def test_partially_shared_subspaces_fill_u2():
    # share e1, differ in the second direction: one zero angle, U2 column free
    e = np.eye(6)
    Ps = Subspace(e[:, [0, 1]])
    Pt = Subspace(np.column_stack([e[:, 0], (e[:, 1] + e[:, 2]) / np.sqrt(2)]))
    pa = principal_angles(Ps, Pt)
    np.testing.assert_allclose(pa.omegas, [0.0, np.pi / 4], atol=1e-12)
    assert np.max(np.abs(pa.U2.T @ pa.U2 - np.eye(2))) < 1e-12


def test_pair_checks(rng):
    with pytest.raises(DimensionMismatch):
        principal_angles(random_subspace(rng, 8, 2), random_subspace(rng, 8, 3))
    with pytest.raises(AmbientTooSmall):
        principal_angles(random_subspace(rng, 5, 3), random_subspace(rng, 5, 3))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from geoflow.checks import planar_rotation_pair
from geoflow.errors import DegenerateVector, DimensionMismatch, DomainError
from geoflow.gfk import (
    build_kernel,
    flow_subspace,
    gfk_distance,
    gfk_inner,
    identity_kernel,
    lambda_diagonals,
    pairwise_distances,
    quadrature_Q,
)
from geoflow.subspace import Subspace, projection_distance, random_subspace


def _pair(seed, D=16, N=4):
    rng = np.random.default_rng(seed)
    return random_subspace(rng, D, N), random_subspace(rng, D, N)


def _flow_integral(k, a, b, n=2001):
    """2 * int_0^1 a^T Pi Pi^T b dnu by Simpson over the library's own flow."""
    nus = np.linspace(0.0, 1.0, n)
    vals = np.array([(a @ flow_subspace(k, nu)) @ (flow_subspace(k, nu).T @ b) for nu in nus])
    w = np.full(n, 2.0 / 3.0)
    w[1::2] = 4.0 / 3.0
    w[0] = w[-1] = 1.0 / 3.0
    return 2.0 * float(vals @ w) / (n - 1)


def test_identical_subspaces_give_twice_projector():
    Ps, _ = _pair(0)
    k = build_kernel(Ps, Ps)
    assert np.max(np.abs(k.Q - 2.0 * Ps.projector())) <= 1e-8
    np.testing.assert_allclose(k.lambda1, 2.0)
    np.testing.assert_allclose(k.lambda2, 0.0, atol=1e-12)
    np.testing.assert_allclose(k.lambda3, 0.0, atol=1e-12)


def test_orthogonal_subspaces():
    e = np.eye(4)
    k = build_kernel(Subspace(e[:, :2]), Subspace(e[:, 2:]))
    np.testing.assert_allclose(k.omegas, [np.pi / 2] * 2, atol=1e-12)
    np.testing.assert_allclose(k.lambda1, 1.0, atol=1e-12)
    np.testing.assert_allclose(k.lambda2, -2.0 / np.pi, atol=1e-12)
    np.testing.assert_allclose(k.lambda3, 1.0, atol=1e-12)


def test_lambda_analytic_values():
    l1, l2, l3 = lambda_diagonals(np.array([0.0, np.pi / 2]))
    np.testing.assert_allclose(l1, [2.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(l2, [0.0, -2.0 / np.pi], atol=1e-12)
    np.testing.assert_allclose(l3, [0.0, 1.0], atol=1e-12)


def test_small_angle_series_continuous():
    # on either side of the series switch the two branches agree
    w = np.array([0.5e-4 * (1 - 1e-9), 0.5e-4 * (1 + 1e-9)])
    for lam in lambda_diagonals(w):
        assert abs(lam[0] - lam[1]) < 1e-12


def test_lambda_ranges():
    w = np.linspace(0.0, np.pi / 2, 1001)
    l1, l2, l3 = lambda_diagonals(w)
    assert np.all((l1 >= 1 - 1e-15) & (l1 <= 2 + 1e-15))
    assert np.all((l3 >= -1e-15) & (l3 <= 1 + 1e-15))
    # (cos x - 1)/x has an interior minimum on (0, pi), below its endpoint value -2/pi
    res = minimize_scalar(lambda x: (np.cos(x) - 1) / x, bounds=(1.0, 3.0), method="bounded",
                          options={"xatol": 1e-12})
    assert res.fun < -2 / np.pi
    assert np.all((l2 >= res.fun - 1e-12) & (l2 <= 1e-15))
    assert l2.min() == pytest.approx(res.fun, abs=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_closed_form_matches_quadrature(seed):
    Ps, Pt = _pair(seed)
    assert np.max(np.abs(build_kernel(Ps, Pt).Q - quadrature_Q(Ps, Pt, 2001))) <= 1e-8


def test_trapezoid_converges_monotonically():
    Ps, Pt = _pair(7)
    Q = build_kernel(Ps, Pt).Q
    errs = [np.max(np.abs(Q - quadrature_Q(Ps, Pt, n, "trapezoid"))) for n in (101, 201, 501, 1001, 2001)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # second-order rule: halving h cuts the error about fourfold
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_trapezoid_error_within_analytic_bound():
    # |E| <= h^2/12 * max|f''|, and every entry of 2*Pi Pi^T has |f''| <= 2 * 4 * max(w)^2
    Ps, Pt = _pair(3)
    k = build_kernel(Ps, Pt)
    h = 1.0 / 2000
    bound = h**2 / 12 * 8.0 * float(np.max(k.omegas)) ** 2
    assert np.max(np.abs(k.Q - quadrature_Q(Ps, Pt, 2001, "trapezoid"))) <= bound


def test_quadrature_identical_subspaces():
    Ps, _ = _pair(1)
    for n in (3, 11, 2001):
        assert np.max(np.abs(quadrature_Q(Ps, Ps, n) - 2 * Ps.projector())) <= 1e-10


def test_quadrature_rejects_even_points():
    Ps, Pt = _pair(0)
    with pytest.raises(DomainError):
        quadrature_Q(Ps, Pt, 100)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.integers(0, 5))
def test_kernel_symmetric_psd(seed, N, extra):
    Ps, Pt = _pair(seed, 2 * N + extra, N)
    Q = build_kernel(Ps, Pt).Q
    assert np.max(np.abs(Q - Q.T)) <= 1e-10
    assert np.linalg.eigvalsh(Q).min() >= -1e-8


def test_flow_endpoints_and_orthonormality():
    Ps, Pt = _pair(4)
    k = build_kernel(Ps, Pt)
    P0, P1, Ph = flow_subspace(k, 0.0), flow_subspace(k, 1.0), flow_subspace(k, 0.5)
    np.testing.assert_allclose(P0, Ps.basis @ k.U1, atol=1e-14)
    assert projection_distance(P0, Ps.basis) <= 1e-8
    assert projection_distance(P1, Pt.basis) <= 1e-8
    for P in (P0, P1, Ph):
        assert np.max(np.abs(P.T @ P - np.eye(4))) <= 1e-9


@pytest.mark.parametrize("nu", [-0.1, 1.5, float("nan")])
def test_flow_rejects_out_of_range(nu):
    k = build_kernel(*_pair(0))
    with pytest.raises(DomainError):
        flow_subspace(k, nu)


def test_inner_product_examples(rng):
    Ps, Pt = _pair(5)
    k = build_kernel(Ps, Pt)
    x = rng.standard_normal(16)
    assert gfk_inner(k, x, x) >= 0
    ks = build_kernel(Ps, Ps)
    u, v = Ps.basis @ rng.standard_normal(4), Ps.basis @ rng.standard_normal(4)
    assert gfk_inner(ks, u, v) == pytest.approx(2 * u @ v, abs=1e-10)
    a, b = rng.standard_normal(16), rng.standard_normal(16)
    assert gfk_inner(k, a, b) == pytest.approx(gfk_inner(k, b, a), abs=1e-12)
    assert abs(gfk_inner(k, a, b) - _flow_integral(k, a, b)) <= 1e-8


def test_inner_dimension_check():
    k = build_kernel(*_pair(0))
    with pytest.raises(DimensionMismatch):
        gfk_inner(k, np.ones(15), np.ones(16))


def test_distance_examples(rng):
    Ps, Pt = _pair(6)
    k = build_kernel(Ps, Pt)
    x = rng.standard_normal(16)
    assert gfk_distance(k, x, x) <= 1e-9
    ks = build_kernel(Ps, Ps)
    u = Ps.basis @ rng.standard_normal(4)
    assert gfk_distance(ks, u, -u) == pytest.approx(2.0, abs=1e-12)
    a, b = rng.standard_normal(16), rng.standard_normal(16)
    Qq = quadrature_Q(Ps, Pt, 2001)
    dq = 1.0 - (a @ Qq @ b) / np.sqrt((a @ Qq @ a) * (b @ Qq @ b))
    assert abs(gfk_distance(k, a, b) - dq) <= 1e-7


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_distance_bounded_symmetric_scale_invariant(seed, c, d):
    rng = np.random.default_rng(seed)
    k = build_kernel(random_subspace(rng, 12, 3), random_subspace(rng, 12, 3))
    a, b = rng.standard_normal(12), rng.standard_normal(12)
    dist = gfk_distance(k, a, b)
    assert 0.0 <= dist <= 2.0 + 1e-12
    assert dist == pytest.approx(gfk_distance(k, b, a), abs=1e-12)
    assert gfk_distance(k, c * a, d * b) == pytest.approx(dist, abs=1e-9)


def test_degenerate_vector():
    e = np.eye(6)
    Ps = Subspace(e[:, :2])
    k = build_kernel(Ps, Ps)
    # e_4 is orthogonal to P_s, so it lies in the null space of Q = 2 Ps Ps^T
    with pytest.raises(DegenerateVector):
        gfk_distance(k, e[:, 3], e[:, 0])
    with pytest.raises(DegenerateVector):
        gfk_distance(k, e[:, 0], np.zeros(6))


def test_pairwise_matches_scalar(rng):
    k = build_kernel(*_pair(2))
    A, B = rng.standard_normal((3, 16)), rng.standard_normal((4, 16))
    M = pairwise_distances(k, A, B)
    for i in range(3):
        for j in range(4):
            assert M[i, j] == pytest.approx(gfk_distance(k, A[i], B[j]), abs=1e-12)


def test_identity_kernel_is_cosine(rng):
    k = identity_kernel(5)
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    cos = a @ b / np.linalg.norm(a) / np.linalg.norm(b)
    assert gfk_distance(k, a, b) == pytest.approx(1 - cos, abs=1e-14)
    np.testing.assert_array_equal(k.mean_s, np.zeros(5))


def test_kernel_recovers_rotated_angles():
    thetas = np.radians([10.0, 30.0, 60.0])
    Ps, Pt = planar_rotation_pair(thetas, 10, np.random.default_rng(0))
    k = build_kernel(Ps, Pt)
    np.testing.assert_allclose(k.omegas, thetas, atol=1e-9)
    assert k.Q.flags.writeable is False

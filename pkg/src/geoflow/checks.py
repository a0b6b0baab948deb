"""Property-check suites shared by the ``check`` subcommands and the tests.

Each function returns a plain dict of measurements; thresholds are applied
by the caller.
"""
import time

import numpy as np

from .adapt_loss import AdaptConfig, CrossViewBatch, adaptation_loss_and_grad
from .evaluation import check_upper_bound, triangle_probe, validate_linear_hypothesis
from .gfk import build_kernel, lambda_diagonals, pairwise_distances, quadrature_Q
from .scene.features import featurize, soft_mask
from .subspace import Subspace, feasible_dim, fit_subspace, principal_angles, random_subspace


def random_dims(rng, dmax, nmax):
    """(D, N) with 1 <= N <= nmax, 2N <= D <= dmax."""
    n = int(rng.integers(1, min(nmax, dmax // 2) + 1))
    d = int(rng.integers(2 * n, dmax + 1))
    return d, n


def kernel_oracle(trials=100, dmax=64, nmax=16, n_points=2001, rule="simpson", seed=0):
    """Largest |Q_closed - Q_quadrature| over random subspace pairs."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    rows = []
    for k in range(trials):
        D, N = random_dims(rng, dmax, nmax)
        Ps, Pt = random_subspace(rng, D, N), random_subspace(rng, D, N)
        err = float(np.max(np.abs(build_kernel(Ps, Pt).Q - quadrature_Q(Ps, Pt, n_points, rule))))
        rows.append({"trial": k, "D": D, "N": N, "max_abs_diff": err})
    return {"max_abs_diff": max(r["max_abs_diff"] for r in rows), "trials": rows,
            "seconds": time.perf_counter() - t0}


def planar_rotation_pair(thetas, D=None, rng=None):
    """Subspaces at prescribed principal angles.

    Source spans e_1..e_N; target column i is ``cos t_i e_i + sin t_i e_(N+i)``.
    Both are then rotated by one random orthogonal matrix, which leaves the
    angles unchanged.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    N = thetas.size
    D = 2 * N if D is None else D
    A = np.zeros((D, N))
    B = np.zeros((D, N))
    idx = np.arange(N)
    A[idx, idx] = 1.0
    B[idx, idx] = np.cos(thetas)
    B[N + idx, idx] = np.sin(thetas)
    if rng is not None:
        R, _ = np.linalg.qr(rng.standard_normal((D, D)))
        A, B = R @ A, R @ B
    return Subspace(A), Subspace(B)


def principal_angle_recovery(thetas_deg=(10.0, 30.0, 60.0), D=10, seed=0):
    """Recovered angles of a planar-rotation construction, plus the closed-form
    lambda values at 0 and pi/2."""
    rng = np.random.default_rng(seed)
    thetas = np.radians(np.asarray(thetas_deg, dtype=np.float64))
    Ps, Pt = planar_rotation_pair(thetas, D, rng)
    got = principal_angles(Ps, Pt).omegas
    same = principal_angles(Ps, Ps).omegas
    lam0 = lambda_diagonals(np.array([0.0]))
    lam90 = lambda_diagonals(np.array([np.pi / 2]))
    want0 = (2.0, 0.0, 0.0)
    want90 = (1.0, -2.0 / np.pi, 1.0)
    return {
        "expected": np.sort(thetas), "recovered": got,
        "angle_error": float(np.max(np.abs(got - np.sort(thetas)))),
        "identical_max_angle": float(np.max(np.abs(same))),
        "lambda_error": float(max(max(abs(float(l[0]) - w) for l, w in zip(lam0, want0)),
                                  max(abs(float(l[0]) - w) for l, w in zip(lam90, want90)))),
    }


def metric_bounds(n_pairs=10_000, n_kernels=5, dmax=64, nmax=16, seed=0):
    """Range of D over random vector pairs, and D(x, x), for several kernels."""
    rng = np.random.default_rng(seed)
    lo, hi, self_max = np.inf, -np.inf, 0.0
    for _ in range(n_kernels):
        D, N = random_dims(rng, dmax, nmax)
        k = build_kernel(random_subspace(rng, D, N), random_subspace(rng, D, N))
        # mix of scales, including tiny and huge vectors
        scale = 10.0 ** rng.uniform(-3, 3, (n_pairs, 1))
        A = rng.standard_normal((n_pairs, D)) * scale
        B = rng.standard_normal((n_pairs, D))
        d = _rowwise(k, A, B)
        lo, hi = min(lo, float(d.min())), max(hi, float(d.max()))
        self_max = max(self_max, float(np.max(np.abs(_rowwise(k, A, A)))))
    return {"min": lo, "max": hi, "self_max": self_max, "n_pairs": n_pairs * n_kernels}


def _rowwise(kernel, A, B):
    QA, QB = A @ kernel.Q, B @ kernel.Q
    na = np.sqrt(np.maximum(np.einsum("ij,ij->i", QA, A), 0.0))
    nb = np.sqrt(np.maximum(np.einsum("ij,ij->i", QB, B), 0.0))
    return 1.0 - np.clip(np.einsum("ij,ij->i", QA, B) / (na * nb), -1.0, 1.0)


def upper_bound(n_tuples=10_000, dim=32, sub_dim=8, alpha=1.5, seed=0):
    """Evaluate the unpaired upper bound on random tuples and kernels."""
    rng = np.random.default_rng(seed)

    def kernel():
        return build_kernel(random_subspace(rng, dim, sub_dim), random_subspace(rng, dim, sub_dim))

    kx, ky = kernel(), kernel()
    tup = [rng.standard_normal((n_tuples, dim)) for _ in range(6)]
    return check_upper_bound(kx, ky, tup, alpha)


def random_batch(rng, n_s=4, n_t=5, dx=12, dy=16, dp=10, n_classes=4):
    """A batch with probability-block segmentation vectors and per-row prompts."""

    def probs(n):
        z = rng.standard_normal((n, dy // n_classes, n_classes))
        e = np.exp(z)
        return (e / e.sum(axis=2, keepdims=True)).reshape(n, dy)

    return CrossViewBatch(
        rng.standard_normal((n_s, dx)), rng.standard_normal((n_t, dx)), probs(n_s), probs(n_t),
        rng.standard_normal((1, dp)), rng.standard_normal((1, dp)), n_classes=n_classes,
    )


def _random_kernel(rng, D, N, samples=None):
    if samples is None:
        return build_kernel(random_subspace(rng, D, N), random_subspace(rng, D, N))
    S, T = samples
    return build_kernel(fit_subspace(S, N), fit_subspace(T, N))


def finite_difference_grad(fun, X, h=1e-5):
    """Central differences of a scalar function over every entry of X."""
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        old = X[idx]
        X[idx] = old + h
        fp = fun(X)
        X[idx] = old - h
        fm = fun(X)
        X[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic, numeric):
    """``max|a - n| / max|n|`` (max-norm relative error)."""
    scale = max(float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def gradcheck(n_batches=10, h=1e-5, seed=0, cfg=None):
    """Analytic vs central-difference gradient of the adaptation loss in Y_t.

    Kernels (subspaces, means and Q) are built once per batch and held fixed
    while Y_t is perturbed.
    """
    rng = np.random.default_rng(seed)
    cfg = cfg or AdaptConfig()
    t0 = time.perf_counter()
    errors = []
    for _ in range(n_batches):
        b = random_batch(rng)
        kx = _random_kernel(rng, b.X_s.shape[1], 3, (b.X_s, b.X_t))
        ky = _random_kernel(rng, b.Y_s.shape[1], 3, (b.Y_s, b.Y_t))
        kp = _random_kernel(rng, b.F_p_s.shape[1], 4)
        _, _, g = adaptation_loss_and_grad(kx, ky, kp, b, cfg)

        def loss(Y):
            bb = CrossViewBatch(b.X_s, b.X_t, b.Y_s, Y, b.F_p_s, b.F_p_t)
            return adaptation_loss_and_grad(kx, ky, kp, bb, cfg, with_grad=False)[0]

        errors.append(relative_error(g, finite_difference_grad(loss, b.Y_t.copy(), h)))
    return {"max_rel_error": max(errors), "errors": errors, "seconds": time.perf_counter() - t0}


def triangle(n_triples=100_000, dim=32, sub_dim=8, seed=0):
    """Triangle-inequality violation rate of D under one random kernel (diagnostic)."""
    rng = np.random.default_rng(seed)
    k = build_kernel(random_subspace(rng, dim, sub_dim), random_subspace(rng, dim, sub_dim))
    return triangle_probe(k, n_triples, seed=seed + 1)


def hypothesis_study(views, n_classes, downsample=8, subspace_dim=256, n_pairs=None, seed=0):
    """Paired-view distance correlation on rendered paired views.

    Image and segmentation kernels are fit on all source and all target
    samples (segmentations from the ground-truth soft masks).
    """
    Xs = featurize(views["source"]["images"], downsample)
    Xt = featurize(views["target"]["images"], downsample)
    Ys = featurize(soft_mask(views["source"]["masks"], n_classes), downsample)
    Yt = featurize(soft_mask(views["target"]["masks"], n_classes), downsample)
    nx = min(feasible_dim(subspace_dim, Xs), feasible_dim(subspace_dim, Xt))
    ny = min(feasible_dim(subspace_dim, Ys), feasible_dim(subspace_dim, Yt))
    kx = build_kernel(fit_subspace(Xs, nx), fit_subspace(Xt, nx))
    ky = build_kernel(fit_subspace(Ys, ny), fit_subspace(Yt, ny))
    res = validate_linear_hypothesis(Xs, Xt, Ys, Yt, kx, ky, n_pairs=n_pairs, seed=seed)
    res.update(image_dim=nx, segmentation_dim=ny)
    return res


__all__ = [
    "finite_difference_grad", "gradcheck", "hypothesis_study", "kernel_oracle", "metric_bounds",
    "pairwise_distances", "planar_rotation_pair", "principal_angle_recovery", "random_batch", "random_dims",
    "relative_error", "triangle", "upper_bound",
]

"""Geodesic flow kernel between two subspaces and the distance built on it.

The kernel integrates projections along the Grassmann geodesic
``Pi(nu) = Ps U1 Gamma(nu) - R U2 Sigma(nu)`` from the source subspace
(nu = 0) to the target subspace (nu = 1). Its closed form is::

    Q = [Ps U1, R U2] [[L1, L2], [L2, L3]] [Ps U1, R U2]^T

with diagonal blocks

    L1 = 1 + sin(2w)/(2w),  L2 = (cos(2w) - 1)/(2w),  L3 = 1 - sin(2w)/(2w).

These diagonals equal twice the averages of cos^2, -cos*sin and sin^2 over
the path, so ``Q = 2 * integral_0^1 Pi Pi^T dnu``; the quadrature oracle
below integrates with the same factor.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import DegenerateVector, DimensionMismatch, DomainError
from .subspace import Subspace, principal_angles

# below this value of 2w the lambda formulas switch to their Taylor series
SMALL_ANGLE_EPS = 1e-4
DEGENERATE_TOL = 1e-12


def lambda_diagonals(omegas, small_angle_eps=SMALL_ANGLE_EPS):
    """Diagonals of the three blocks of the kernel's middle factor."""
    w = np.asarray(omegas, dtype=np.float64)
    x = 2.0 * w
    small = x < small_angle_eps
    xs = np.where(small, 1.0, x)
    sinc = np.where(small, 1.0 - x**2 / 6.0, np.sin(xs) / xs)
    cosc = np.where(small, -x / 2.0 + x**3 / 24.0, (np.cos(xs) - 1.0) / xs)
    lam1 = 1.0 + sinc
    lam2 = cosc
    lam3 = np.where(small, x**2 / 6.0, 1.0 - sinc)
    return lam1, lam2, lam3


@dataclass(frozen=True, eq=False)
class GeodesicFlowKernel:
    source: Subspace | None
    target: Subspace | None
    complement: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    V: np.ndarray
    omegas: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    lambda3: np.ndarray
    Q: np.ndarray

    @property
    def mean_s(self):
        return np.zeros(self.ambient_dim) if self.source is None else self.source.mean

    @property
    def mean_t(self):
        return np.zeros(self.ambient_dim) if self.target is None else self.target.mean

    @property
    def ambient_dim(self):
        return self.Q.shape[0]

    def diagnostics(self):
        return {
            "ambient_dim": int(self.ambient_dim),
            "subspace_dim": int(self.omegas.size),
            "omegas": [float(v) for v in self.omegas],
            "lambda1": [float(v) for v in self.lambda1],
            "lambda2": [float(v) for v in self.lambda2],
            "lambda3": [float(v) for v in self.lambda3],
        }


def build_kernel(Ps, Pt, small_angle_eps=SMALL_ANGLE_EPS):
    pa = principal_angles(Ps, Pt)
    lam1, lam2, lam3 = lambda_diagonals(pa.omegas, small_angle_eps)
    A = Ps.basis @ pa.U1
    B = pa.complement @ pa.U2
    Q = (A * lam1) @ A.T + (A * lam2) @ B.T + (B * lam2) @ A.T + (B * lam3) @ B.T
    Q = 0.5 * (Q + Q.T)
    Q.flags.writeable = False
    return GeodesicFlowKernel(
        source=Ps, target=Pt, complement=pa.complement,
        U1=pa.U1, U2=pa.U2, V=pa.V, omegas=pa.omegas,
        lambda1=lam1, lambda2=lam2, lambda3=lam3, Q=Q,
    )


def identity_kernel(D):
    """Kernel with Q = I and zero means: plain cosine distance in R^D."""
    Q = np.eye(D)
    Q.flags.writeable = False
    empty = np.zeros(0)
    return GeodesicFlowKernel(
        source=None, target=None, complement=np.zeros((D, 0)),
        U1=np.zeros((0, 0)), U2=np.zeros((0, 0)), V=np.zeros((0, 0)),
        omegas=empty, lambda1=empty, lambda2=empty, lambda3=empty, Q=Q,
    )


def flow_subspace(kernel, nu):
    """Orthonormal D x N basis of the subspace at position ``nu`` on the geodesic."""
    nu = float(nu)
    if not 0.0 <= nu <= 1.0 or not np.isfinite(nu):
        raise DomainError(f"nu must lie in [0, 1], got {nu}")
    w = kernel.omegas * nu
    return (kernel.source.basis @ kernel.U1) * np.cos(w) - (kernel.complement @ kernel.U2) * np.sin(w)


def _as_vec(kernel, v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != kernel.ambient_dim:
        raise DimensionMismatch(f"{name} has length {v.shape[-1]}, kernel expects {kernel.ambient_dim}")
    return v


def gfk_inner(kernel, a, b):
    """a^T Q b for vectors already centered by their domain means."""
    a = _as_vec(kernel, a, "a")
    b = _as_vec(kernel, b, "b")
    return float(a @ kernel.Q @ b)


def q_norms(kernel, X):
    """Q-norms ||Q^{1/2} x|| of each row of X."""
    X = np.atleast_2d(X)
    sq = np.einsum("ij,ij->i", X @ kernel.Q, X)
    return np.sqrt(np.maximum(sq, 0.0))


def gfk_distance(kernel, a, b):
    """1 - cosine of a and b in the Q inner product; lies in [0, 2]."""
    a = _as_vec(kernel, a, "a")
    b = _as_vec(kernel, b, "b")
    Qa = kernel.Q @ a
    Qb = kernel.Q @ b
    na = np.sqrt(max(float(a @ Qa), 0.0))
    nb = np.sqrt(max(float(b @ Qb), 0.0))
    if na <= DEGENERATE_TOL or nb <= DEGENERATE_TOL:
        raise DegenerateVector(f"Q-norm below {DEGENERATE_TOL:g} (|a|_Q={na:.3e}, |b|_Q={nb:.3e})")
    cos = float(a @ Qb) / (na * nb)
    return 1.0 - min(1.0, max(-1.0, cos))


def pairwise_distances(kernel, A, B):
    """Matrix of gfk_distance(A[i], B[j]) for row-stacked vectors."""
    A = _as_vec(kernel, np.atleast_2d(A), "A")
    B = _as_vec(kernel, np.atleast_2d(B), "B")
    QB = B @ kernel.Q
    na = q_norms(kernel, A)
    nb = q_norms(kernel, B)
    if np.any(na <= DEGENERATE_TOL) or np.any(nb <= DEGENERATE_TOL):
        raise DegenerateVector(f"a vector has Q-norm below {DEGENERATE_TOL:g}")
    cos = (A @ QB.T) / np.outer(na, nb)
    return 1.0 - np.clip(cos, -1.0, 1.0)


def _weights(n_points, rule):
    h = 1.0 / (n_points - 1)
    if rule == "trapezoid":
        w = np.full(n_points, h)
        w[0] = w[-1] = h / 2.0
    elif rule == "simpson":
        w = np.full(n_points, 2.0 * h / 3.0)
        w[1::2] = 4.0 * h / 3.0
        w[0] = w[-1] = h / 3.0
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return w


def _oracle_factors(Ps, Pt):
    """Geodesic endpoints factored without the library's principal_angles.

    Uses scipy's null space for the complement and plain numpy SVD, so
    sign conventions and completion choices differ from build_kernel.
    """
    R = null_space(Ps.T)
    U1, c, Vt = np.linalg.svd(Ps.T @ Pt)
    omegas = np.arccos(np.clip(c, 0.0, 1.0))
    Bc = -(R.T @ Pt @ Vt.T)
    s = np.linalg.norm(Bc, axis=0)
    U2 = np.zeros_like(Bc)
    good = s > 1e-12
    U2[:, good] = Bc[:, good] / s[good]
    n_free = int((~good).sum())
    if n_free:
        # any orthonormal completion works: these columns get sin(w) = 0
        free = null_space(U2[:, good].T) if good.any() else np.eye(Bc.shape[0])
        U2[:, ~good] = free[:, :n_free]
    return Ps @ U1, R @ U2, omegas


def quadrature_Q(Ps, Pt, n_points=2001, rule="simpson"):
    """Numerical ``2 * integral_0^1 Pi(nu) Pi(nu)^T dnu`` on a uniform grid.

    ``rule`` is ``"trapezoid"`` or ``"simpson"`` (composite Simpson, i.e. the
    Richardson-extrapolated trapezoid sum). Both need an odd point count.
    """
    n_points = int(n_points)
    if n_points < 3 or n_points % 2 == 0:
        raise DomainError(f"n_points must be odd and >= 3, got {n_points}")
    A, B, omegas = _oracle_factors(Ps.basis, Pt.basis)
    nus = np.linspace(0.0, 1.0, n_points)
    w = _weights(n_points, rule)
    D = A.shape[0]
    Q = np.zeros((D, D))
    for chunk in np.array_split(np.arange(n_points), max(1, n_points // 256)):
        ang = nus[chunk, None] * omegas[None, :]
        # (k, D, N) stack of Pi(nu_k), each scaled by sqrt(2 w_k)
        flows = A[None] * np.cos(ang)[:, None, :] - B[None] * np.sin(ang)[:, None, :]
        flows *= np.sqrt(2.0 * w[chunk])[:, None, None]
        M = flows.transpose(1, 0, 2).reshape(D, -1)
        Q += M @ M.T
    return 0.5 * (Q + Q.T)

"""Orthonormal subspace bases on the Grassmann manifold G(N, D).

A :class:`Subspace` is a D x N matrix with orthonormal columns together
with the mean that was subtracted from the samples before fitting.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbientTooSmall, DimensionError, DimensionMismatch, RankDeficient

ORTHO_TOL = 1e-10
# relative singular-value floor used to decide numerical rank
RANK_RTOL = 1e-10

DEFAULT_SUBSPACE_DIM = 256


def canonical_signs(mat):
    """Flip column signs so each column's largest-magnitude entry is >= 0.

    Returns the flipped matrix and the +-1 sign vector that was applied.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[1] == 0:
        return mat.copy(), np.ones(0)
    idx = np.argmax(np.abs(mat), axis=0)
    signs = np.where(mat[idx, np.arange(mat.shape[1])] < 0, -1.0, 1.0)
    return mat * signs, signs


@dataclass(frozen=True, eq=False)
class Subspace:
    basis: np.ndarray
    mean: np.ndarray = field(default=None)

    def __post_init__(self):
        basis = np.array(self.basis, dtype=np.float64)
        if basis.ndim != 2:
            raise DimensionError(f"basis must be 2-D, got shape {basis.shape}")
        D, N = basis.shape
        if not 0 < N < D:
            raise DimensionError(f"need 0 < N < D, got N={N}, D={D}")
        if not np.all(np.isfinite(basis)):
            raise DimensionError("basis has non-finite entries")
        dev = np.max(np.abs(basis.T @ basis - np.eye(N)))
        if dev > ORTHO_TOL:
            raise DimensionError(f"basis columns not orthonormal (max deviation {dev:.3e})")
        mean = np.zeros(D) if self.mean is None else np.array(self.mean, dtype=np.float64)
        if mean.shape != (D,):
            raise DimensionMismatch(f"mean has shape {mean.shape}, expected ({D},)")
        basis.flags.writeable = False
        mean.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mean", mean)

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def center(self, x):
        return np.asarray(x, dtype=np.float64) - self.mean

    def projector(self):
        return self.basis @ self.basis.T


def fit_subspace(samples, target_dim=DEFAULT_SUBSPACE_DIM, center=True):
    """Top principal directions of ``samples`` (one sample per row).

    Parameters
    ----------
    samples : array_like, shape (n_samples, D)
    target_dim : int
        Number of directions N to keep; must satisfy 0 < N < D.
    center : bool
        Subtract the sample mean before the SVD. The mean is stored on the
        returned subspace either way (zeros when ``center`` is False).

    Raises
    ------
    DimensionError
        If N is not in (0, D) or too few samples are given.
    RankDeficient
        If the (centered) sample matrix has rank below N.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"samples must be 2-D, got shape {X.shape}")
    n, D = X.shape
    N = int(target_dim)
    if not 0 < N < D:
        raise DimensionError(f"need 0 < N < D, got N={N}, D={D}")
    if center and n < 2:
        raise DimensionError("centered fitting needs at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DimensionError("samples contain non-finite entries")
    mean = X.mean(axis=0) if center else np.zeros(D)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    rank = _rank_from_singular_values(s)
    if rank < N:
        raise RankDeficient(f"sample rank {rank} < requested dimension {N}")
    basis, _ = canonical_signs(vt[:N].T)
    return Subspace(basis=basis, mean=mean)


def _rank_from_singular_values(s):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def sample_rank(samples, center=True):
    """Numerical rank of the (optionally centered) sample matrix, as used by ``fit_subspace``."""
    X = np.asarray(samples, dtype=np.float64)
    if center:
        X = X - X.mean(axis=0)
    return _rank_from_singular_values(np.linalg.svd(X, compute_uv=False))


def feasible_dim(requested, samples, center=True):
    """Largest usable subspace dimension not above ``requested``.

    Capped by the sample count (minus one when centering), by half the
    ambient dimension (so a kernel can be built, D >= 2N) and by the
    numerical rank of the samples.
    """
    X = np.asarray(samples, dtype=np.float64)
    n, D = X.shape
    return max(1, min(int(requested), n - 1 if center else n, D // 2, sample_rank(X, center)))


def orthogonal_complement(sub):
    """D x (D-N) orthonormal basis R with R^T P = 0.

    Completed from a full QR decomposition of P, so the result is
    deterministic; columns carry the same sign convention as fitted bases.
    """
    P = sub.basis
    D, N = P.shape
    q, _ = np.linalg.qr(P, mode="complete")
    R, _ = canonical_signs(q[:, N:])
    return R


@dataclass(frozen=True, eq=False)
class PrincipalAngles:
    omegas: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    V: np.ndarray
    complement: np.ndarray


def _check_pair(Ps, Pt):
    if Ps.ambient_dim != Pt.ambient_dim or Ps.dim != Pt.dim:
        raise DimensionMismatch(
            f"subspaces differ: G({Ps.dim},{Ps.ambient_dim}) vs G({Pt.dim},{Pt.ambient_dim})"
        )
    if Ps.ambient_dim < 2 * Ps.dim:
        raise AmbientTooSmall(f"D={Ps.ambient_dim} < 2N={2 * Ps.dim}")


def _fill_columns(B, scales, tol):
    """Orthonormalize columns of B, most reliable (largest scale) first.

    Columns whose scale is below ``tol`` are unconstrained; they are replaced
    by canonical basis vectors Gram-Schmidt'ed against the others.
    """
    m, N = B.shape
    out = np.zeros((m, N))
    done = []
    for i in np.argsort(-scales, kind="stable"):
        if scales[i] > tol:
            v = B[:, i] / scales[i]
            for j in done:
                v = v - (out[:, j] @ v) * out[:, j]
            v /= np.linalg.norm(v)
            out[:, i] = v
            done.append(i)
    for i in range(N):
        if scales[i] > tol:
            continue
        for k in range(m):
            v = np.zeros(m)
            v[k] = 1.0
            for j in done:
                v = v - (out[:, j] @ v) * out[:, j]
            nrm = np.linalg.norm(v)
            if nrm > 0.5:
                # second pass keeps orthogonality at machine precision
                v /= nrm
                for j in done:
                    v = v - (out[:, j] @ v) * out[:, j]
                out[:, i] = v / np.linalg.norm(v)
                done.append(i)
                break
    return out


def principal_angles(Ps, Pt, complement=None):
    """Principal angles and the paired-SVD rotation factors.

    Factorizes ``Ps^T Pt = U1 cos(W) V^T`` and ``R^T Pt = -U2 sin(W) V^T``
    where R is the orthogonal complement of Ps. Angles are ascending in
    [0, pi/2] and computed from both the cosines and the sines.
    """
    _check_pair(Ps, Pt)
    R = orthogonal_complement(Ps) if complement is None else complement
    A = Ps.basis.T @ Pt.basis
    U1, cos_w, Vt = np.linalg.svd(A)
    cos_w = np.clip(cos_w, 0.0, 1.0)
    # sign convention on U1, applied jointly to V so U1 cos V^T is unchanged
    U1, signs = canonical_signs(U1)
    V = Vt.T * signs
    B = -(R.T @ (Pt.basis @ V))
    col_norms = np.linalg.norm(B, axis=0)
    # the column norms are the sines; arctan2 stays accurate near 0 where arccos does not
    omegas = np.arctan2(col_norms, cos_w)
    U2 = _fill_columns(B, col_norms, tol=1e-12)
    return PrincipalAngles(omegas=omegas, U1=U1, U2=U2, V=V, complement=R)


def projection_distance(A, B):
    """Spectral-norm distance between the orthogonal projectors onto span(A), span(B)."""
    qa, _ = np.linalg.qr(np.asarray(A, dtype=np.float64))
    qb, _ = np.linalg.qr(np.asarray(B, dtype=np.float64))
    return float(np.linalg.norm(qa @ qa.T - qb @ qb.T, 2))


def random_subspace(rng, D, N):
    """Haar-random point of G(N, D) with zero mean."""
    q, _ = np.linalg.qr(rng.standard_normal((D, N)))
    return Subspace(basis=q)

"""Cross-view geometric adaptation loss on unpaired batches.

For source/target pairs (i, j) the loss penalizes the squared residual
between the image-space distance and a scaled segmentation-space distance::

    geo    = mean_(i,j) (Dx(xs_i, xt_j) - alpha * Dy(ys_i, yt_j))^2
    prompt = mean_(i,j) (Dp(fs_i, ft_j) - gamma * Dy(ys_i, yt_j))^2

Every D is the geodesic-flow cosine distance of :mod:`geoflow.gfk`. Vectors
are centered by their own domain's kernel mean before any product.
Gradients treat kernels (subspaces, means, Q) as constants of the step.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateVector, DimensionError, DimensionMismatch
from .gfk import DEGENERATE_TOL, SMALL_ANGLE_EPS, q_norms

ALL_PAIRS = "all_pairs"
DIAGONAL = "diagonal"


@dataclass(frozen=True)
class AdaptConfig:
    alpha: float = 1.5
    gamma: float = 1.0
    lambda_I: float = 1.0
    lambda_P: float = 0.5
    subspace_dim: int = 256
    batch_size: int = 16
    pairing: str = ALL_PAIRS
    small_angle_eps: float = SMALL_ANGLE_EPS
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0 or not self.gamma > 0:
            raise ValueError("alpha and gamma must be positive")
        if self.lambda_I < 0 or self.lambda_P < 0:
            raise ValueError("loss weights must be non-negative")
        if self.subspace_dim < 1:
            raise ValueError("subspace_dim must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (per-batch PCA needs two samples)")
        if self.pairing not in (ALL_PAIRS, DIAGONAL):
            raise ValueError(f"pairing must be {ALL_PAIRS!r} or {DIAGONAL!r}")

    def replace(self, **changes):
        return AdaptConfig(**{**asdict(self), **changes})

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown AdaptConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _rows(a):
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


@dataclass(frozen=True, eq=False)
class CrossViewBatch:
    """One step's unpaired source/target vectors (one sample per row).

    ``n_classes`` declares the per-pixel block size of the segmentation
    vectors; when given, every block must be a probability distribution.
    Prompt embeddings may have one row per sample or a single shared row.
    """

    X_s: np.ndarray
    X_t: np.ndarray
    Y_s: np.ndarray
    Y_t: np.ndarray
    F_p_s: np.ndarray = None
    F_p_t: np.ndarray = None
    n_classes: int = None

    def __post_init__(self):
        for name in ("X_s", "X_t", "Y_s", "Y_t", "F_p_s", "F_p_t"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _rows(v))
        if self.X_s.shape[0] != self.Y_s.shape[0] or self.X_t.shape[0] != self.Y_t.shape[0]:
            raise DimensionMismatch("feature and segmentation batches differ in length")
        if self.X_s.shape[0] < 2 or self.X_t.shape[0] < 2:
            raise DimensionError("each side of the batch needs at least 2 samples")
        if self.n_classes is not None:
            for name in ("Y_s", "Y_t"):
                Y = getattr(self, name)
                if Y.shape[1] % self.n_classes:
                    raise DimensionMismatch(f"{name} length not a multiple of {self.n_classes}")
                if np.any(Y < 0):
                    raise ValueError(f"{name} has negative probabilities")
                sums = Y.reshape(Y.shape[0], -1, self.n_classes).sum(axis=2)
                if np.max(np.abs(sums - 1.0)) > 1e-6:
                    raise ValueError(f"{name} pixel blocks do not sum to 1")

    @property
    def sizes(self):
        return self.X_s.shape[0], self.X_t.shape[0]


def pair_mask(n_s, n_t, pairing):
    """Boolean (n_s, n_t) selection of the pairs entering the mean."""
    if pairing == ALL_PAIRS:
        return np.ones((n_s, n_t), dtype=bool)
    if pairing == DIAGONAL:
        m = np.zeros((n_s, n_t), dtype=bool)
        k = min(n_s, n_t)
        m[np.arange(k), np.arange(k)] = True
        return m
    raise ValueError(f"unknown pairing {pairing!r}")


@dataclass
class _CosineTerms:
    """Centered vectors, Q-products, norms and cosines for one kernel."""

    A: np.ndarray
    B: np.ndarray
    QA: np.ndarray
    QB: np.ndarray
    na: np.ndarray
    nb: np.ndarray
    cos: np.ndarray = field(init=False)

    def __post_init__(self):
        if np.any(self.na <= DEGENERATE_TOL) or np.any(self.nb <= DEGENERATE_TOL):
            raise DegenerateVector(f"a vector has Q-norm below {DEGENERATE_TOL:g}")
        self.cos = np.clip((self.QA @ self.B.T) / np.outer(self.na, self.nb), -1.0, 1.0)

    @property
    def dist(self):
        return 1.0 - self.cos


def _terms(kernel, S, T):
    if S.shape[1] != kernel.ambient_dim or T.shape[1] != kernel.ambient_dim:
        raise DimensionMismatch(
            f"vectors of length {S.shape[1]}/{T.shape[1]} vs kernel dimension {kernel.ambient_dim}"
        )
    A = S - kernel.mean_s
    B = T - kernel.mean_t
    QA = A @ kernel.Q
    QB = B @ kernel.Q
    return _CosineTerms(A, B, QA, QB, q_norms(kernel, A), q_norms(kernel, B))


def distance_matrix(kernel, S, T):
    """D(S[i], T[j]) with each side centered by its domain mean."""
    return _terms(kernel, _rows(S), _rows(T)).dist


def _broadcast_prompts(F, n):
    return np.repeat(F, n, axis=0) if F.shape[0] == 1 else F


def _prompt_dist(kernel_p, batch):
    if batch.F_p_s is None or batch.F_p_t is None:
        raise ValueError("batch carries no prompt embeddings")
    n_s, n_t = batch.sizes
    return distance_matrix(kernel_p, _broadcast_prompts(batch.F_p_s, n_s), _broadcast_prompts(batch.F_p_t, n_t))


def _masked_mse(resid, mask):
    return float(np.mean(resid[mask] ** 2))


def cross_view_geo_loss(kernel_x, kernel_y, batch, alpha=1.5, pairing=ALL_PAIRS):
    Dx = distance_matrix(kernel_x, batch.X_s, batch.X_t)
    Dy = distance_matrix(kernel_y, batch.Y_s, batch.Y_t)
    return _masked_mse(Dx - alpha * Dy, pair_mask(*Dx.shape, pairing))


def prompt_corr_loss(kernel_p, kernel_y, batch, gamma=1.0, pairing=ALL_PAIRS):
    Dp = _prompt_dist(kernel_p, batch)
    Dy = distance_matrix(kernel_y, batch.Y_s, batch.Y_t)
    return _masked_mse(Dp - gamma * Dy, pair_mask(*Dy.shape, pairing))


def total_objective(sup_loss, geo_loss, prompt_loss, cfg):
    return sup_loss + cfg.lambda_I * geo_loss + cfg.lambda_P * prompt_loss


def adaptation_loss_and_grad(kernel_x, kernel_y, kernel_p, batch, cfg, with_grad=True):
    """Weighted adaptation loss ``lambda_I*geo + lambda_P*prompt`` and its
    gradient with respect to each row of ``batch.Y_t``.

    Returns ``(loss, parts, grad)`` where ``parts`` holds the unweighted
    ``geo`` and ``prompt`` values and ``grad`` has the shape of ``Y_t``
    (None when ``with_grad`` is False). Terms with zero weight are skipped,
    so ``kernel_p`` may be None when ``cfg.lambda_P == 0``.
    """
    n_s, n_t = batch.sizes
    mask = pair_mask(n_s, n_t, cfg.pairing)
    n_pairs = int(mask.sum())
    grad = np.zeros_like(batch.Y_t) if with_grad else None
    parts = {"geo": 0.0, "prompt": 0.0}
    if cfg.lambda_I == 0 and cfg.lambda_P == 0:
        return 0.0, parts, grad

    ty = _terms(kernel_y, batch.Y_s, batch.Y_t)
    Dy = ty.dist
    # dL/dDy for every pair
    coef = np.zeros((n_s, n_t))
    if cfg.lambda_I > 0:
        r = distance_matrix(kernel_x, batch.X_s, batch.X_t) - cfg.alpha * Dy
        parts["geo"] = _masked_mse(r, mask)
        coef += cfg.lambda_I * (-2.0 * cfg.alpha) * r
    if cfg.lambda_P > 0:
        r = _prompt_dist(kernel_p, batch) - cfg.gamma * Dy
        parts["prompt"] = _masked_mse(r, mask)
        coef += cfg.lambda_P * (-2.0 * cfg.gamma) * r
    loss = cfg.lambda_I * parts["geo"] + cfg.lambda_P * parts["prompt"]
    if not with_grad:
        return loss, parts, grad

    coef = np.where(mask, coef, 0.0) / n_pairs
    # dD(a,b)/db = -Qa/(|a||b|) + cos(a,b) Qb/|b|^2
    w = coef / np.outer(ty.na, ty.nb)
    grad = -(w.T @ ty.QA) + ((coef * ty.cos).sum(axis=0) / ty.nb**2)[:, None] * ty.QB
    return loss, parts, grad


def grad_wrt_target_preds(kernel_x, kernel_y, kernel_p, batch, cfg):
    """Gradient of ``lambda_I*geo + lambda_P*prompt`` w.r.t. each target prediction."""
    return adaptation_loss_and_grad(kernel_x, kernel_y, kernel_p, batch, cfg)[2]


def bound_constant(alpha):
    """Slack of the unpaired-vs-paired bound: each distance lies in [0, 2]."""
    return 2.0 * (1.0 + alpha)

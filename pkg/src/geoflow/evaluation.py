"""Segmentation metrics and empirical checks of the adaptation assumptions."""
from dataclasses import dataclass

import numpy as np

from .adapt_loss import bound_constant, distance_matrix
from .errors import DegenerateVector, EmptyEvaluation, InsufficientPairs
from .gfk import DEGENERATE_TOL, q_norms
from .scene.render import VOID


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """C x C pixel counts; rows are ground truth, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("confusion counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_labels(cls, truth, pred, n_classes, ignore=VOID):
        truth = np.asarray(truth).ravel().astype(np.int64)
        pred = np.asarray(pred).ravel().astype(np.int64)
        keep = truth != ignore
        idx = truth[keep] * n_classes + pred[keep]
        return cls(np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes))

    def merge(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())


def miou(conf):
    """Per-class IoU (None for zero-union classes) and their mean.

    Classes absent from both truth and prediction are excluded from the mean.
    """
    c = conf.counts if isinstance(conf, ConfusionMatrix) else np.asarray(conf)
    tp = np.diag(c)
    return iou_from_counts(tp, c.sum(axis=0) + c.sum(axis=1) - tp)


def iou_from_counts(intersections, unions):
    """IoU per class from intersection and union pixel counts, plus the mean
    over classes with a nonzero union."""
    inter = np.asarray(intersections, dtype=np.float64)
    union = np.asarray(unions, dtype=np.float64)
    if np.any(inter < 0) or np.any(inter > union):
        raise ValueError("need 0 <= intersection <= union for every class")
    present = union > 0
    if not present.any():
        raise EmptyEvaluation("no class has a nonzero union")
    iou = np.where(present, inter / np.maximum(union, 1), np.nan)
    per_class = [float(v) if p else None for v, p in zip(iou, present)]
    return {"per_class_iou": per_class, "miou": float(np.mean(iou[present]))}


def validate_linear_hypothesis(X_s, Xbar_t, Y_s, Ybar_t, kernel_x, kernel_y, n_pairs=None, seed=0, min_pairs=30):
    """Correlation between image-space and segmentation-space distances of
    paired views.

    Row k of ``X_s``/``Xbar_t`` (and ``Y_s``/``Ybar_t``) are the two views of
    one scene. Distances are evaluated on sampled index pairs (i, j),
    ``Dx(x_s^i, xbar_t^j)`` against ``Dy(y_s^i, ybar_t^j)``; ``n_pairs=None``
    uses every (i, j). Returns the Pearson r, the least-squares slope through
    the origin (an empirical alpha) and the raw samples.
    """
    n = len(X_s)
    if n < min_pairs:
        raise InsufficientPairs(f"need at least {min_pairs} paired samples, got {n}")
    Dx = distance_matrix(kernel_x, X_s, Xbar_t)
    Dy = distance_matrix(kernel_y, Y_s, Ybar_t)
    if n_pairs is None:
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
    else:
        rng = np.random.default_rng(seed)
        ii, jj = rng.integers(0, n, n_pairs), rng.integers(0, n, n_pairs)
    dx, dy = Dx[ii, jj], Dy[ii, jj]
    out = {"samples": int(dx.size), "dx": dx, "dy": dy, "i": ii, "j": jj}
    sx, sy = np.std(dx), np.std(dy)
    if sx < 1e-15 or sy < 1e-15:
        out.update(pearson_r=None, slope=None, degenerate=True)
        return out
    r = float(np.corrcoef(dx, dy)[0, 1])
    denom = float(dy @ dy)
    slope = float(dx @ dy / denom) if denom > 0 else None
    out.update(pearson_r=r, slope=slope, degenerate=False)
    return out


def check_upper_bound(kernel_x, kernel_y, tuples, alpha):
    """Check ``Dx(xs, xbar) - a*Dy(ys, ybar) <= Dx(xs, xt) - a*Dy(ys, yt) + 2(1+a)``.

    ``tuples`` is a sequence (or stacked arrays) of
    ``(x_s, xbar_t, x_t, y_s, ybar_t, y_t)``. Returns the per-tuple sides,
    the largest ``lhs - rhs`` and the tuple count.
    """
    xs, xbar, xt, ys, ybar, yt = (np.asarray(a, dtype=np.float64) for a in _unzip(tuples))

    def rowwise(k, S, T):
        A = S - k.mean_s
        B = T - k.mean_t
        na, nb = q_norms(k, A), q_norms(k, B)
        if np.any(na <= DEGENERATE_TOL) or np.any(nb <= DEGENERATE_TOL):
            raise DegenerateVector(f"a vector has Q-norm below {DEGENERATE_TOL:g}")
        cos = np.einsum("ij,ij->i", A @ k.Q, B) / (na * nb)
        return 1.0 - np.clip(cos, -1.0, 1.0)

    lhs = rowwise(kernel_x, xs, xbar) - alpha * rowwise(kernel_y, ys, ybar)
    rhs = rowwise(kernel_x, xs, xt) - alpha * rowwise(kernel_y, ys, yt) + bound_constant(alpha)
    return {"lhs": lhs, "rhs": rhs, "max_violation": float(np.max(lhs - rhs)), "n_checked": int(lhs.size)}


def _unzip(tuples):
    if isinstance(tuples, (list, tuple)) and len(tuples) == 6 and np.ndim(tuples[0]) == 2:
        return tuples
    cols = list(zip(*tuples))
    return [np.stack(c) for c in cols]


def triangle_probe(kernel, n_triples, seed=0, sampler=None):
    """Fraction of random triples violating ``D(a,c) <= D(a,b) + D(b,c)``.

    Vectors are drawn by ``sampler(rng, n)`` (default: standard normal in the
    kernel's ambient space) and compared without centering. Diagnostic only.
    """
    if n_triples < 1:
        raise ValueError("n_triples must be >= 1")
    rng = np.random.default_rng(seed)
    D = kernel.ambient_dim
    draw = sampler or (lambda g, n: g.standard_normal((n, D)))
    a, b, c = draw(rng, n_triples), draw(rng, n_triples), draw(rng, n_triples)

    def d(u, v):
        nu, nv = q_norms(kernel, u), q_norms(kernel, v)
        if np.any(nu <= DEGENERATE_TOL) or np.any(nv <= DEGENERATE_TOL):
            raise DegenerateVector(f"a vector has Q-norm below {DEGENERATE_TOL:g}")
        return 1.0 - np.clip(np.einsum("ij,ij->i", u @ kernel.Q, v) / (nu * nv), -1.0, 1.0)

    margin = d(a, c) - (d(a, b) + d(b, c))
    viol = margin > 1e-12
    return {"violation_rate": float(viol.mean()), "worst_margin": float(margin.max()), "n_triples": int(n_triples),
            "margins": margin}

"""Per-pixel linear softmax segmenter and the adaptation training loop.

The model reads a (2p+1) x (2p+1) RGB patch around each pixel. Prompt
conditioning adds a per-domain logit bias ``H @ (G @ f_domain)`` where G is
a fixed random projection of the prompt embedding and H is learned.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import adapt_loss
from .adapt_loss import CrossViewBatch
from .errors import RankDeficient, ShapeMismatch
from .gfk import build_kernel, identity_kernel
from .scene.config import CLASSES
from .scene.features import area_matrix, featurize, resample, soft_mask
from .scene.render import VOID
from .subspace import feasible_dim, fit_subspace

log = logging.getLogger(__name__)

PROMPT_PROJ_DIM = 8
BASE_LR = 2.5e-4
# inputs are centered on mid-gray before the linear map (better conditioned SGD)
FEATURE_OFFSET = 0.5
METRICS = ("geodesic", "euclidean")


def patch_features(images, radius):
    """(B, H, W, F) stack of edge-padded (2r+1)^2 * C patches, scaled to [0, 1]."""
    imgs = np.asarray(images)
    if imgs.ndim == 3:
        imgs = imgs[None]
    x = imgs.astype(np.float64) / 255.0 if imgs.dtype == np.uint8 else imgs.astype(np.float64)
    if radius == 0:
        return x
    B, H, W, C = x.shape
    k = 2 * radius + 1
    padded = np.pad(x, ((0, 0), (radius, radius), (radius, radius), (0, 0)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
    # (B, H, W, C, k, k) -> (B, H, W, k, k, C)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B, H, W, k * k * C)


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class SegModel:
    """Linear map from patch features to class logits, plus an optional prompt bias."""

    n_classes: int
    patch_radius: int = 2
    channels: int = 3
    prompt_dim: int = 0
    seed: int = 0
    W: np.ndarray = None
    b: np.ndarray = None
    H: np.ndarray = None
    G: np.ndarray = None

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be >= 0")
        F = self.n_features
        if self.W is None:
            self.W = np.zeros((F, self.n_classes))
        if self.b is None:
            self.b = np.zeros(self.n_classes)
        if self.prompt_dim:
            if self.G is None:
                rng = np.random.default_rng([self.seed, 7919])
                self.G = rng.standard_normal((PROMPT_PROJ_DIM, self.prompt_dim)) / math.sqrt(self.prompt_dim)
            if self.H is None:
                self.H = np.zeros((self.n_classes, PROMPT_PROJ_DIM))

    @property
    def n_features(self):
        return (2 * self.patch_radius + 1) ** 2 * self.channels

    # flat parameter vector theta = [W, b, H]
    def get_params(self):
        parts = [self.W.ravel(), self.b]
        if self.prompt_dim:
            parts.append(self.H.ravel())
        return np.concatenate(parts)

    def set_params(self, theta):
        F, C = self.n_features, self.n_classes
        self.W = theta[: F * C].reshape(F, C).copy()
        self.b = theta[F * C: F * C + C].copy()
        if self.prompt_dim:
            self.H = theta[F * C + C:].reshape(C, PROMPT_PROJ_DIM).copy()

    def prompt_bias(self, prompt):
        if not self.prompt_dim or prompt is None:
            return np.zeros(self.n_classes)
        return self.H @ (self.G @ np.asarray(prompt, dtype=np.float64))

    def logits_from_features(self, feats, prompt=None):
        return (feats - FEATURE_OFFSET) @ self.W + self.b + self.prompt_bias(prompt)

    def to_matrix(self):
        """Parameters as one matrix: rows W, then b, then H^T (when present)."""
        rows = [self.W, self.b[None, :]]
        if self.prompt_dim:
            rows.append(self.H.T)
        return np.vstack(rows)

    def meta(self):
        return {"n_classes": self.n_classes, "patch_radius": self.patch_radius, "channels": self.channels,
                "prompt_dim": self.prompt_dim, "seed": self.seed}

    @classmethod
    def from_matrix(cls, mat, meta):
        m = cls(**meta)
        F = m.n_features
        expected = F + 1 + (PROMPT_PROJ_DIM if m.prompt_dim else 0)
        if mat.shape != (expected, m.n_classes):
            raise ShapeMismatch(f"parameter matrix {mat.shape} does not match model {(expected, m.n_classes)}")
        m.W = mat[:F].copy()
        m.b = mat[F].copy()
        if m.prompt_dim:
            m.H = mat[F + 1:].T.copy()
        return m


def predict(model, image, prompt=None):
    """(H, W, C) class probabilities (or (B, H, W, C) for a stack)."""
    img = np.asarray(image)
    single = img.ndim == 3
    if img.ndim not in (3, 4) or img.shape[-1] != model.channels:
        raise ShapeMismatch(f"image of shape {img.shape} does not match a {model.channels}-channel model")
    probs = softmax(model.logits_from_features(patch_features(img, model.patch_radius), prompt))
    return probs[0] if single else probs


def supervised_loss(probs, mask):
    """Mean pixelwise cross-entropy over non-void pixels."""
    probs = np.asarray(probs)
    mask = np.asarray(mask)
    if probs.shape[:-1] != mask.shape:
        raise ShapeMismatch(f"prediction {probs.shape[:-1]} vs mask {mask.shape}")
    valid = mask != VOID
    if not valid.any():
        return 0.0
    p = np.take_along_axis(probs, np.where(valid, mask, 0)[..., None].astype(np.int64), axis=-1)[..., 0]
    return float(-np.mean(np.log(np.maximum(p[valid], 1e-300))))


def supervised_loss_grad_logits(probs, mask):
    """d(mean CE)/d(logits); zero on void pixels."""
    mask = np.asarray(mask)
    valid = mask != VOID
    n = max(int(valid.sum()), 1)
    g = probs.copy()
    idx = np.where(valid, mask, 0).astype(np.int64)
    np.put_along_axis(g, idx[..., None], np.take_along_axis(g, idx[..., None], axis=-1) - 1.0, axis=-1)
    g[~valid] = 0.0
    return g / n


@dataclass
class TrainConfig:
    """Optimizer and experiment knobs that are not adaptation hyperparameters.

    ``warmup_epochs`` epochs of source-only training run before the
    adaptation terms switch on; a zero-weight model predicts the uniform
    distribution everywhere, which leaves nothing for a per-batch subspace
    to span.
    """

    epochs: int = 20
    lr: float = BASE_LR
    momentum: float = 0.9
    downsample: int = 8
    patch_radius: int = 2
    metric: str = "geodesic"
    use_prompts: bool = False
    prompt_dim: int = 64
    warmup_epochs: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.epochs < 1 or self.warmup_epochs < 0:
            raise ValueError("epochs must be >= 1 and warmup_epochs >= 0")
        if not self.lr > 0 or not 0 <= self.momentum < 1:
            raise ValueError("need lr > 0 and 0 <= momentum < 1")
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    seed: int = 0
    config: dict = field(default_factory=dict)
    final_miou: float = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def clipped_dim(requested, n_samples, length):
    """Per-batch subspace dimension: ``min(requested, n - 1, length // 2)``."""
    return max(1, min(int(requested), int(n_samples) - 1, int(length) // 2))


@dataclass
class StepContext:
    """Everything a training step needs besides the parameters and the batch.

    ``kx`` and ``kp`` are precomputed on the full data; ``Ps_y`` is the
    source segmentation subspace (geodesic metric only) and ``Ny`` the
    dimension of each per-batch target segmentation subspace.
    """

    cfg: object
    metric: str
    downsample: int
    kx: object = None
    kp: object = None
    Ps_y: object = None
    Ny: int = 1
    f_s: np.ndarray = None
    f_t: np.ndarray = None

    @property
    def adapting(self):
        return self.cfg.lambda_I > 0 or self.cfg.lambda_P > 0


def target_kernel(ctx, Y_t):
    """Segmentation kernel for one target batch (refit from its predictions)."""
    if ctx.metric == "euclidean":
        return identity_kernel(Y_t.shape[1])
    return build_kernel(ctx.Ps_y, fit_subspace(Y_t, ctx.Ny), ctx.cfg.small_angle_eps)


def step_loss_and_grad(model, ctx, src, tgt=None, ky=None):
    """Total objective and its parameter gradient for one step.

    ``src = (images, masks, X_s, Y_s)`` and ``tgt = (images, X_t)`` with
    precomputed image and soft-mask features. With ``tgt=None`` only the
    supervised term is used. ``ky`` freezes the target segmentation kernel;
    when omitted it is fit from the current predictions. Returns
    ``(total, parts, grad, ky)``.
    """
    cfg = ctx.cfg
    src_imgs, src_masks, X_s, Y_s = src
    feats_s = patch_features(src_imgs, model.patch_radius)
    probs_s = softmax(model.logits_from_features(feats_s, ctx.f_s))
    sup = supervised_loss(probs_s, src_masks)
    grad = _param_grad(model, feats_s, supervised_loss_grad_logits(probs_s, src_masks), ctx.f_s)
    parts = {"supervised": sup, "geo": 0.0, "prompt": 0.0}
    if tgt is not None and ctx.adapting:
        tgt_imgs, X_t = tgt
        r = ctx.downsample
        feats_t = patch_features(tgt_imgs, model.patch_radius)
        probs_t = softmax(model.logits_from_features(feats_t, ctx.f_t))
        n_t, H, W, C = probs_t.shape
        My, Mx = area_matrix(H, r), area_matrix(W, r)
        Y_t = resample(probs_t, My, Mx).reshape(n_t, -1)
        if ky is None:
            ky = target_kernel(ctx, Y_t)
        batch = CrossViewBatch(
            X_s, X_t, Y_s, Y_t,
            None if ctx.f_s is None else ctx.f_s[None], None if ctx.f_t is None else ctx.f_t[None],
        )
        _, adapt_parts, g_y = adapt_loss.adaptation_loss_and_grad(ctx.kx, ky, ctx.kp, batch, cfg)
        parts["geo"], parts["prompt"] = adapt_parts["geo"], adapt_parts["prompt"]
        # back through the area downsample, then the softmax
        g_probs = resample(g_y.reshape(n_t, r, r, C), My.T, Mx.T)
        g_logits_t = probs_t * (g_probs - (g_probs * probs_t).sum(axis=-1, keepdims=True))
        grad = grad + _param_grad(model, feats_t, g_logits_t, ctx.f_t)
    total = adapt_loss.total_objective(parts["supervised"], parts["geo"], parts["prompt"], cfg)
    return total, parts, grad, ky


def prepare_context(cfg, train_cfg, X_s, Y_s, X_t, prompts, report):
    """Precompute the image and prompt kernels on the full data of a run."""
    use_prompts = train_cfg.use_prompts and prompts is not None
    if cfg.lambda_P > 0 and not use_prompts:
        raise ValueError("lambda_P > 0 requires prompts and use_prompts")
    ctx = StepContext(cfg=cfg, metric=train_cfg.metric, downsample=train_cfg.downsample,
                      f_s=np.asarray(prompts["source"], dtype=np.float64) if use_prompts else None,
                      f_t=np.asarray(prompts["target"], dtype=np.float64) if use_prompts else None)
    ctx.Ny = clipped_dim(cfg.subspace_dim, cfg.batch_size, Y_s.shape[1])
    if not ctx.adapting:
        return ctx
    if train_cfg.metric == "euclidean":
        ctx.kx = identity_kernel(X_s.shape[1])
        if cfg.lambda_P > 0:
            ctx.kp = identity_kernel(len(ctx.f_s))
        return ctx

    def fit_pair(S, T, what):
        n = min(feasible_dim(cfg.subspace_dim, S), feasible_dim(cfg.subspace_dim, T))
        if n < cfg.subspace_dim:
            _warn(report, f"{what} subspace_dim {cfg.subspace_dim} clipped to {n}")
        return fit_subspace(S, n), fit_subspace(T, n)

    ctx.kx = build_kernel(*fit_pair(X_s, X_t, "image"), cfg.small_angle_eps)
    if ctx.Ny < cfg.subspace_dim:
        _warn(report, f"segmentation subspace_dim {cfg.subspace_dim} clipped to {ctx.Ny} per batch")
    ctx.Ps_y = fit_subspace(Y_s, ctx.Ny)
    if cfg.lambda_P > 0:
        Fs, Ft = np.asarray(prompts["source_all"]), np.asarray(prompts["target_all"])
        ctx.kp = build_kernel(*fit_pair(Fs, Ft, "prompt"), cfg.small_angle_eps)
    return ctx


def _warn(report, msg):
    log.warning(msg)
    report.warnings.append(msg)


def train(cfg, train_cfg, source, target, prompts=None, seed=None, progress=None, n_classes=len(CLASSES)):
    """Minimize ``CE(source) + lambda_I*geo + lambda_P*prompt`` by SGD with momentum.

    Parameters
    ----------
    cfg : AdaptConfig
    train_cfg : TrainConfig
    source : tuple
        ``(images, masks)`` of labeled car-view data.
    target : ndarray
        Unlabeled drone-view images.
    prompts : dict or None
        ``{"source": f_s, "target": f_t, "source_all": Fs, "target_all": Ft}``;
        the ``*_all`` matrices (one prompt embedding per row) span the
        prompt subspaces. Required when ``cfg.lambda_P > 0``.
    progress : callable or None
        Called with each epoch's loss row.

    Returns
    -------
    (SegModel, TrainReport)
    """
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    src_imgs, src_masks = np.asarray(source[0]), np.asarray(source[1])
    tgt_imgs = np.asarray(target)
    B = cfg.batch_size
    if len(src_imgs) < B or len(tgt_imgs) < B:
        raise ValueError(f"each domain needs at least batch_size={B} samples")
    r = train_cfg.downsample
    report = TrainReport(seed=int(seed), config={"adapt": asdict(cfg), "train": asdict(train_cfg)})

    X_s_all = featurize(src_imgs, r)
    Y_s_all = featurize(soft_mask(src_masks, n_classes), r)
    X_t_all = featurize(tgt_imgs, r)
    ctx = prepare_context(cfg, train_cfg, X_s_all, Y_s_all, X_t_all, prompts, report)
    model = SegModel(n_classes=n_classes, patch_radius=train_cfg.patch_radius,
                     prompt_dim=0 if ctx.f_s is None else len(ctx.f_s), seed=seed)

    theta = model.get_params()
    vel = np.zeros_like(theta)
    n_s, n_t = len(src_imgs), len(tgt_imgs)
    steps = n_s // B
    for epoch in range(train_cfg.epochs):
        perm_s = rng.permutation(n_s)
        perm_t = rng.permutation(n_t)
        sums = {"supervised": 0.0, "geo": 0.0, "prompt": 0.0, "total": 0.0}
        adapt_now = ctx.adapting and epoch >= train_cfg.warmup_epochs
        for step in range(steps):
            si = np.sort(perm_s[step * B:(step + 1) * B])
            ti = np.sort(perm_t[np.arange(step * B, (step + 1) * B) % n_t])
            model.set_params(theta)
            src = (src_imgs[si], src_masks[si], X_s_all[si], Y_s_all[si])
            tgt = (tgt_imgs[ti], X_t_all[ti]) if adapt_now else None
            try:
                total, parts, grad, _ = step_loss_and_grad(model, ctx, src, tgt)
            except RankDeficient as exc:
                raise RankDeficient(f"epoch {epoch}: target predictions collapsed ({exc})") from exc
            vel = train_cfg.momentum * vel - train_cfg.lr * grad
            theta = theta + vel
            for k, v in parts.items():
                sums[k] += v
            sums["total"] += total
        row = {"epoch": epoch, **{k: v / steps for k, v in sums.items()}}
        report.epochs.append(row)
        if progress:
            progress(row)
    model.set_params(theta)
    return model, report


def _param_grad(model, feats, g_logits, prompt):
    """Chain rule from logit gradients to the flat parameter vector."""
    C = model.n_classes
    f2 = feats.reshape(-1, feats.shape[-1]) - FEATURE_OFFSET
    g2 = g_logits.reshape(-1, C)
    parts = [(f2.T @ g2).ravel(), g2.sum(axis=0)]
    if model.prompt_dim:
        proj = model.G @ prompt if prompt is not None else np.zeros(PROMPT_PROJ_DIM)
        parts.append(np.outer(g2.sum(axis=0), proj).ravel())
    return np.concatenate(parts)

"""Vectorizing images and soft masks for the kernel distances."""
import numpy as np

from ..errors import DimensionError
from .render import VOID


def area_matrix(n_in, n_out):
    """(n_out, n_in) row-stochastic matrix of exact area overlaps."""
    edges_out = np.linspace(0.0, n_in, n_out + 1)
    M = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo, hi = edges_out[o], edges_out[o + 1]
        for i in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            M[o, i] = min(hi, i + 1) - max(lo, i)
        M[o] /= hi - lo
    return M


def area_downsample(arr, r):
    """Area-average an (H, W) or (H, W, C) array (or a stack (B, H, W, C)) to r x r."""
    a = np.asarray(arr, dtype=np.float64)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[..., None]
    H, W = a.shape[-3], a.shape[-2]
    if not 1 <= r <= min(H, W):
        raise DimensionError(f"downsample side {r} must be in [1, {min(H, W)}]")
    My, Mx = area_matrix(H, r), area_matrix(W, r)
    out = resample(a, My, Mx)
    return out[..., 0] if squeeze else out


def resample(a, My, Mx):
    """``My @ a @ Mx.T`` over the two spatial axes of a (..., H, W, C) array."""
    rows = np.matmul(My, a.reshape(a.shape[:-2] + (-1,))).reshape(a.shape[:-3] + (My.shape[0],) + a.shape[-2:])
    return np.matmul(Mx, rows)


def soft_mask(mask, n_classes):
    """One-hot (H, W, C) probabilities; void pixels get the uniform distribution."""
    mask = np.asarray(mask)
    out = np.zeros(mask.shape + (n_classes,))
    valid = mask != VOID
    idx = np.where(valid, mask, 0).astype(np.int64)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    out[~valid] = 1.0 / n_classes
    return out


def featurize(arr, r):
    """Flat vector of an image (uint8, scaled to [0, 1]) or soft mask.

    Area-averages to r x r, keeps channels, and flattens pixel-major, so the
    output has length ``r * r * channels``. A leading batch axis is kept.
    """
    a = np.asarray(arr)
    scale = 255.0 if a.dtype == np.uint8 else 1.0
    if a.ndim == 2:
        a = a[..., None]
    small = area_downsample(a.astype(np.float64) / scale, r)
    lead = small.shape[:-3]
    return small.reshape(lead + (-1,))

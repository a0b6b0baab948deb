"""Pure-numpy z-buffer triangle rasterizer (fallback for the compiled core).

``tris`` has shape (T, 3, 3): per vertex (pixel x, pixel y, 1/depth).
Pixel (i, j) is sampled at (j + 0.5, i + 0.5); a pixel is covered when all
barycentric weights are >= 0 and the nearer surface (larger 1/depth) wins,
ties keeping the earlier triangle.
"""
import numpy as np


def rasterize(tris, height, width):
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    invz = np.zeros((height, width), dtype=np.float64)
    index = np.full((height, width), -1, dtype=np.int32)
    for t in range(tris.shape[0]):
        (x0, y0, z0), (x1, y1, z1), (x2, y2, z2) = tris[t]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        xmin = max(int(np.floor(min(x0, x1, x2))), 0)
        xmax = min(int(np.ceil(max(x0, x1, x2))), width - 1)
        ymin = max(int(np.floor(min(y0, y1, y2))), 0)
        ymax = min(int(np.ceil(max(y0, y1, y2))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px = np.arange(xmin, xmax + 1) + 0.5
        py = (np.arange(ymin, ymax + 1) + 0.5)[:, None]
        w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
        w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
        w2 = ((x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)) / area
        iz = w0 * z0 + w1 * z1 + w2 * z2
        win = invz[ymin:ymax + 1, xmin:xmax + 1]
        hit = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0) & (iz > win)
        win[hit] = iz[hit]
        index[ymin:ymax + 1, xmin:xmax + 1][hit] = t
    return invz, index

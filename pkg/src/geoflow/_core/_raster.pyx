# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled z-buffer triangle rasterizer.

Must stay operation-for-operation identical to ``raster_py.rasterize`` so
both backends produce bit-identical buffers.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs

cnp.import_array()


def rasterize(double[:, :, ::1] tris, int height, int width):
    cdef Py_ssize_t n = tris.shape[0]
    invz_np = np.zeros((height, width), dtype=np.float64)
    index_np = np.full((height, width), -1, dtype=np.int32)
    cdef double[:, ::1] invz = invz_np
    cdef int[:, ::1] index = index_np
    cdef Py_ssize_t t
    cdef int i, j, xmin, xmax, ymin, ymax
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2, area, px, py, w0, w1, w2, iz
    for t in range(n):
        x0 = tris[t, 0, 0]; y0 = tris[t, 0, 1]; z0 = tris[t, 0, 2]
        x1 = tris[t, 1, 0]; y1 = tris[t, 1, 1]; z1 = tris[t, 1, 2]
        x2 = tris[t, 2, 0]; y2 = tris[t, 2, 1]; z2 = tris[t, 2, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if fabs(area) < 1e-12:
            continue
        xmin = <int>floor(min(x0, min(x1, x2)))
        xmax = <int>ceil(max(x0, max(x1, x2)))
        ymin = <int>floor(min(y0, min(y1, y2)))
        ymax = <int>ceil(max(y0, max(y1, y2)))
        if xmin < 0: xmin = 0
        if ymin < 0: ymin = 0
        if xmax > width - 1: xmax = width - 1
        if ymax > height - 1: ymax = height - 1
        for i in range(ymin, ymax + 1):
            py = i + 0.5
            for j in range(xmin, xmax + 1):
                px = j + 0.5
                w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
                w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
                w2 = ((x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)) / area
                if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                    iz = w0 * z0 + w1 * z1 + w2 * z2
                    if iz > invz[i, j]:
                        invz[i, j] = iz
                        index[i, j] = <int>t
    return invz_np, index_np

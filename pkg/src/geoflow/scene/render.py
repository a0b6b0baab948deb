"""Software renderer: scene primitives -> (RGB image, class mask).

Boxes and billboards are triangulated, moved to camera coordinates,
clipped against the near plane, projected with the pinhole intrinsics and
z-buffered. The mask holds the class of the nearest surface; pixels that
see no surface (sky) get :data:`VOID`.
"""
import numpy as np

from .. import _core
from ..errors import CameraInsideGeometry

VOID = 255
NEAR = 0.05

_BOX_FACES = [
    # corner indices (counter-clockwise seen from outside), outward normal
    ((0, 1, 3, 2), (-1, 0, 0)),
    ((4, 6, 7, 5), (1, 0, 0)),
    ((0, 4, 5, 1), (0, -1, 0)),
    ((2, 3, 7, 6), (0, 1, 0)),
    ((0, 2, 6, 4), (0, 0, -1)),
    ((1, 5, 7, 3), (0, 0, 1)),
]


def _yaw_matrix(deg):
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_corners(position, size, yaw=0.0):
    """Eight corners of a box resting on ``position`` (centre of its base)."""
    sx, sy, sz = size
    idx = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=np.float64)
    local = (idx - [0.5, 0.5, 0.0]) * [sx, sy, sz]
    return local @ _yaw_matrix(yaw).T + np.asarray(position, dtype=np.float64)


def object_polygons(obj):
    """List of (polygon vertices (k, 3), world normal) for one primitive."""
    shape = obj["shape"]
    yaw = obj.get("yaw", 0.0)
    if shape == "box":
        c = box_corners(obj["position"], obj["size"], yaw)
        rot = _yaw_matrix(yaw)
        return [(c[list(f)], rot @ np.asarray(n, dtype=np.float64)) for f, n in _BOX_FACES]
    if shape == "billboard":
        # vertical quad of width size[0] and height size[2], facing along local x
        w, _, h = obj["size"]
        rot = _yaw_matrix(yaw)
        local = np.array([[0, -w / 2, 0], [0, w / 2, 0], [0, w / 2, h], [0, -w / 2, h]], dtype=np.float64)
        return [(local @ rot.T + np.asarray(obj["position"], dtype=np.float64), rot @ np.array([1.0, 0.0, 0.0]))]
    if shape == "ground":
        x0, y0, x1, y1 = obj["rect"]
        quad = np.array([[x0, y0, 0], [x1, y0, 0], [x1, y1, 0], [x0, y1, 0]], dtype=np.float64)
        return [(quad, np.array([0.0, 0.0, 1.0]))]
    raise ValueError(f"unknown primitive shape {shape!r}")


def _clip_near(poly):
    """Sutherland-Hodgman clip of a camera-space polygon to z >= NEAR."""
    out = []
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        ina, inb = a[2] >= NEAR, b[2] >= NEAR
        if ina:
            out.append(a)
        if ina != inb:
            s = (NEAR - a[2]) / (b[2] - a[2])
            out.append(a + s * (b - a))
    return out


def _inside_box(point, obj, margin=1e-9):
    if obj["shape"] != "box":
        return False
    rot = _yaw_matrix(obj.get("yaw", 0.0))
    local = rot.T @ (point - np.asarray(obj["position"], dtype=np.float64))
    sx, sy, sz = obj["size"]
    return abs(local[0]) < sx / 2 - margin and abs(local[1]) < sy / 2 - margin and margin < local[2] < sz - margin


def build_triangles(scene, pose):
    """Screen-space triangles plus per-triangle object index and normal."""
    tris, owner, normals = [], [], []
    K, R, t = pose.K, pose.R, pose.t
    for oi, obj in enumerate(scene.primitives()):
        for poly, normal in object_polygons(obj):
            cam = poly @ R.T + t
            clipped = _clip_near(list(cam))
            if len(clipped) < 3:
                continue
            cam = np.array(clipped)
            proj = cam @ K.T
            screen = np.column_stack([proj[:, 0] / proj[:, 2], proj[:, 1] / proj[:, 2], 1.0 / cam[:, 2]])
            for k in range(1, len(screen) - 1):
                tris.append(screen[[0, k, k + 1]])
                owner.append(oi)
                normals.append(normal)
    if not tris:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 3))
    return np.ascontiguousarray(tris), np.asarray(owner), np.asarray(normals)


def render(scene, pose, noise_seed=None, rasterize=None):
    """Render ``scene`` from ``pose``.

    Returns a dict with ``image`` (H, W, 3) uint8, ``mask`` (H, W) uint8
    class indices (:data:`VOID` for sky) and ``depth`` (H, W) float
    (inf for sky).
    """
    prims = scene.primitives()
    centre = pose.center
    for obj in prims:
        if _inside_box(centre, obj):
            raise CameraInsideGeometry(f"camera centre {centre.tolist()} inside a {obj['cls']} box")
    W, H = scene.resolution
    tris, owner, normals = build_triangles(scene, pose)
    rasterize = rasterize or _core.rasterize
    invz, index = rasterize(tris, H, W)

    hit = index >= 0
    obj_of_pixel = np.where(hit, owner[np.maximum(index, 0)] if len(owner) else 0, -1)
    class_ids = np.array([scene.class_index(o["cls"]) for o in prims], dtype=np.uint8)
    colors = np.array([o["color"] for o in prims], dtype=np.float64)

    mask = np.full((H, W), VOID, dtype=np.uint8)
    mask[hit] = class_ids[obj_of_pixel[hit]]
    depth = np.full((H, W), np.inf)
    depth[hit] = 1.0 / invz[hit]

    opts = scene.render_opts
    sky = np.asarray(opts.get("sky_color", [0.62, 0.74, 0.88]), dtype=np.float64)
    img = np.tile(sky, (H, W, 1))
    col = colors[obj_of_pixel[hit]]
    if opts.get("lighting", False):
        sun = np.asarray(opts.get("sun_dir", [0.3, 0.2, 0.93]), dtype=np.float64)
        sun = sun / np.linalg.norm(sun)
        lambert = np.abs(normals[index[hit]] @ sun)
        amb = float(opts.get("ambient", 0.45))
        col = col * (amb + (1.0 - amb) * lambert)[:, None]
    beta = float(opts.get("haze", 0.0))
    if beta > 0:
        tau = np.exp(-beta * depth[hit])[:, None]
        col = col * tau + sky * (1.0 - tau)
    img[hit] = col
    sigma = float(opts.get("noise", 0.0))
    if sigma > 0:
        rng = np.random.default_rng(noise_seed)
        img = img + rng.normal(0.0, sigma, img.shape)
    image = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return {"image": image, "mask": mask, "depth": depth}

"""Cross-view dataset generation and on-disk layout.

::

    DIR/manifest.json
    DIR/source/img/NNNN.ppm   DIR/source/mask/NNNN.pgm
    DIR/target/img/NNNN.ppm   DIR/target/mask/NNNN.pgm

Source is the car view, target the drone view. Masks store class indices
(255 = void/sky).
"""
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..matio import atomic_write_bytes, atomic_write_text
from ..runtime import thread_cap
from .camera import transform_between
from .config import CLASSES, sample_car_pose, sample_drone_pose, sample_scene, with_render_opts
from .render import VOID, render

DOMAINS = ("source", "target")
_DOMAIN_CODE = {"source": 1, "target": 2}


def write_ppm(path, image):
    image = np.ascontiguousarray(image, dtype=np.uint8)
    H, W, _ = image.shape
    atomic_write_bytes(path, f"P6\n{W} {H}\n255\n".encode() + image.tobytes())


def write_pgm(path, mask):
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    H, W = mask.shape
    atomic_write_bytes(path, f"P5\n{W} {H}\n255\n".encode() + mask.tobytes())


def _read_pnm(path, magic, channels):
    data = Path(path).read_bytes()
    fields, pos = [], 0
    # header: magic, width, height, maxval, then exactly one whitespace byte
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != magic:
        raise ValueError(f"{path}: expected {magic.decode()} file")
    W, H, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit files supported")
    arr = np.frombuffer(data, dtype=np.uint8, count=W * H * channels, offset=pos)
    return arr.reshape((H, W, channels) if channels > 1 else (H, W)).copy()


def read_ppm(path):
    return _read_pnm(path, b"P6", 3)


def read_pgm(path):
    return _read_pnm(path, b"P5", 1)


def scene_seed(master, domain_code, k):
    return int(np.random.SeedSequence([int(master), int(domain_code), int(k)]).generate_state(1)[0])


def _render_scene(template, paired, seed, k):
    """Both views of scene ``k``: {domain: (image, mask, record)} and the poses."""
    out, poses = {}, {}
    for domain in DOMAINS:
        code = 0 if paired else _DOMAIN_CODE[domain]
        s_seed = scene_seed(seed, code, k)
        opts = template.source_render if domain == "source" else template.target_render
        scene = with_render_opts(sample_scene(template, s_seed), opts)
        pose_rng = np.random.default_rng(scene_seed(seed, 10 + _DOMAIN_CODE[domain], k))
        K = scene.intrinsics()
        sampler = sample_car_pose if domain == "source" else sample_drone_pose
        poses[domain] = pose = sampler(template, pose_rng, K)
        res = render(scene, pose, noise_seed=scene_seed(seed, 20 + _DOMAIN_CODE[domain], k))
        out[domain] = (res["image"], res["mask"], {"index": k, "scene_seed": s_seed, "pose": pose.to_dict()})
    return out, poses


def generate_views(template, n_scenes, paired, seed, workers=None):
    """Render ``n_scenes`` car-view and drone-view samples in memory.

    Paired: both views of scene k share one scene seed. Unpaired: each
    domain draws scenes from its own seed stream. Scenes are independent,
    so ``workers`` processes (default: the ``GFK_THREADS`` cap) may render
    them; results are identical for any worker count.
    """
    workers = min(thread_cap() if workers is None else int(workers), n_scenes)
    args = [(template, paired, seed, k) for k in range(n_scenes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_render_scene, *zip(*args), chunksize=max(1, n_scenes // (4 * workers))))
    else:
        results = [_render_scene(*a) for a in args]
    out = {d: {"images": [], "masks": [], "records": []} for d in DOMAINS}
    pair_transforms = []
    for views, poses in results:
        for d in DOMAINS:
            img, mask, rec = views[d]
            out[d]["images"].append(img)
            out[d]["masks"].append(mask)
            out[d]["records"].append(rec)
        if paired:
            pair_transforms.append(transform_between(poses["source"], poses["target"]).to_dict())
    for d in DOMAINS:
        out[d]["images"] = np.stack(out[d]["images"])
        out[d]["masks"] = np.stack(out[d]["masks"])
    out["pair_transforms"] = pair_transforms
    return out


def class_pixel_counts(masks, classes):
    counts = np.bincount(np.asarray(masks).ravel(), minlength=256)
    res = {c: int(counts[i]) for i, c in enumerate(classes)}
    res["void"] = int(counts[VOID])
    return res


def make_cross_view_dataset(template, n_scenes, out_dir, paired=False, seed=0, command=None, workers=None):
    """Render and write a dataset directory; returns the manifest dict."""
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")

    views = generate_views(template, n_scenes, paired, seed, workers)
    out_dir = Path(out_dir)
    manifest = {
        "paired": bool(paired),
        "n_scenes": int(n_scenes),
        "seed": int(seed),
        "classes": list(CLASSES),
        "class_palette": template.palette,
        "template": template.to_dict(),
        "command": command,
        "domains": {},
    }
    for d in DOMAINS:
        recs = []
        for k, rec in enumerate(views[d]["records"]):
            img_rel = f"{d}/img/{k:04d}.ppm"
            mask_rel = f"{d}/mask/{k:04d}.pgm"
            write_ppm(out_dir / img_rel, views[d]["images"][k])
            write_pgm(out_dir / mask_rel, views[d]["masks"][k])
            recs.append({**rec, "image": img_rel, "mask": mask_rel})
        manifest["domains"][d] = {
            "samples": recs,
            "class_pixel_counts": class_pixel_counts(views[d]["masks"], CLASSES),
        }
    if paired:
        manifest["view_transforms"] = views["pair_transforms"]
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_manifest(data_dir):
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json in {data_dir}")
    return json.loads(path.read_text())


def load_domain(data_dir, domain):
    """(images (n, H, W, 3) uint8, masks (n, H, W) uint8) for one domain."""
    man = load_manifest(data_dir)
    recs = man["domains"][domain]["samples"]
    imgs = np.stack([read_ppm(Path(data_dir) / r["image"]) for r in recs])
    masks = np.stack([read_pgm(Path(data_dir) / r["mask"]) for r in recs])
    return imgs, masks

"""Compare the compiled and numpy rasterizer backends.

Renders the same scenes through both backends, checks that depth and
triangle-index buffers agree bit for bit, and reports per-frame timings::

    python benchmarks/bench_kernels.py --scenes 20 --repeat 3
"""
import argparse
import time

import numpy as np

from geoflow._core import _compiled, raster_py
from geoflow.scene import SceneTemplate, sample_scene
from geoflow.scene.config import sample_car_pose, sample_drone_pose
from geoflow.scene.render import build_triangles


def scene_triangles(n_scenes, seed):
    template = SceneTemplate()
    rng = np.random.default_rng(seed)
    jobs = []
    for k in range(n_scenes):
        scene = sample_scene(template, seed + k)
        K = scene.intrinsics()
        for sampler in (sample_car_pose, sample_drone_pose):
            tris = build_triangles(scene, sampler(template, rng, K))[0]
            jobs.append((np.ascontiguousarray(tris, dtype=np.float64), *scene.resolution[::-1]))
    return jobs


def time_backend(fn, jobs, repeat):
    best = np.inf
    outputs = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        outputs = [fn(tris, h, w) for tris, h, w in jobs]
        best = min(best, time.perf_counter() - t0)
    return best, outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--scenes", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    jobs = scene_triangles(args.scenes, args.seed)
    n_tris = sum(len(t) for t, _, _ in jobs)
    print(f"{len(jobs)} frames, {n_tris} triangles")
    t_py, out_py = time_backend(raster_py.rasterize, jobs, args.repeat)
    print(f"python   : {1e3 * t_py / len(jobs):8.3f} ms/frame")
    if _compiled is None:
        print("compiled : not built (pip install -e . --no-build-isolation)")
        return
    t_c, out_c = time_backend(_compiled.rasterize, jobs, args.repeat)
    same = all(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) for a, b in zip(out_py, out_c))
    print(f"compiled : {1e3 * t_c / len(jobs):8.3f} ms/frame  ({t_py / t_c:.1f}x)")
    print(f"outputs identical: {same}")
    if not same:
        raise SystemExit(1)


if __name__ == "__main__":
    main()

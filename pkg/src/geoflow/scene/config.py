"""Scene descriptions and the street-scene family used by the benchmark."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import CameraPose, intrinsics

CLASSES = ("road", "building", "car", "tree", "person", "terrain")

DEFAULT_PALETTE = {
    "road": [0.40, 0.40, 0.43],
    "building": [0.72, 0.46, 0.36],
    "car": [0.16, 0.26, 0.74],
    "tree": [0.16, 0.56, 0.20],
    "person": [0.93, 0.76, 0.18],
    "terrain": [0.58, 0.52, 0.30],
}


@dataclass(frozen=True, eq=False)
class SceneConfig:
    """A concrete scene: ground tiles, solid primitives and render options.

    ``extent`` is ``(x0, y0, x1, y1)`` on the ground plane.
    """

    extent: tuple
    objects: list
    ground: list
    class_palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    classes: tuple = CLASSES
    seed: int = 0
    resolution: tuple = (64, 64)
    focal: float = 48.0
    render_opts: dict = field(default_factory=dict)

    def __post_init__(self):
        x0, y0, x1, y1 = self.extent
        for obj in list(self.objects) + list(self.ground):
            if obj["cls"] not in self.classes:
                raise ValueError(f"object class {obj['cls']!r} not declared")
            if obj["shape"] == "ground":
                gx0, gy0, gx1, gy1 = obj["rect"]
                pts = [(gx0, gy0), (gx1, gy1)]
            else:
                pts = [obj["position"][:2]]
            for px, py in pts:
                if not (x0 - 1e-9 <= px <= x1 + 1e-9 and y0 - 1e-9 <= py <= y1 + 1e-9):
                    raise ValueError(f"{obj['cls']} at ({px}, {py}) outside scene extent")
        present = {o["cls"] for o in list(self.objects) + list(self.ground)}
        missing = [c for c in self.classes if c not in present]
        if missing:
            raise ValueError(f"declared classes without any object: {missing}")

    def primitives(self):
        return list(self.ground) + list(self.objects)

    def class_index(self, name):
        return self.classes.index(name)

    @property
    def n_classes(self):
        return len(self.classes)

    def intrinsics(self):
        W, H = self.resolution
        return intrinsics(self.focal, W, H)

    def to_dict(self):
        d = asdict(self)
        d["classes"] = list(self.classes)
        return d


@dataclass(frozen=True)
class SceneTemplate:
    """Parameters of the random street-scene family.

    Ranges are ``[low, high]`` and sampled uniformly; counts are inclusive.
    Camera ranges follow the car (ground level) and drone (elevated) views.
    """

    length: float = 80.0
    half_width: float = 20.0
    road_half_width: float = 4.5
    n_buildings: tuple = (6, 10)
    n_cars: tuple = (2, 5)
    n_trees: tuple = (3, 7)
    n_persons: tuple = (2, 5)
    building_height: tuple = (5.0, 18.0)
    color_jitter: float = 0.05
    resolution: tuple = (64, 64)
    focal: float = 48.0
    car_height: float = 1.5
    car_pitch: tuple = (0.0, 5.0)
    drone_height: tuple = (25.0, 35.0)
    drone_pitch: tuple = (50.0, 70.0)
    # render options per view: haze coefficient, lighting, noise sigma
    source_render: dict = field(default_factory=dict)
    target_render: dict = field(default_factory=lambda: {"haze": 0.01})
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene template keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) and k not in ("palette",) else v for k, v in d.items()}
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


def _count(rng, lohi):
    return int(rng.integers(lohi[0], lohi[1] + 1))


def _jitter(rng, color, amount):
    return np.clip(np.asarray(color) + rng.uniform(-amount, amount, 3), 0.0, 1.0).round(4).tolist()


def sample_scene(template, seed):
    """Draw one street scene. Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    L, hw, rw = template.length, template.half_width, template.road_half_width
    pal = template.palette
    jit = template.color_jitter

    ground = [
        {"shape": "ground", "cls": "terrain", "rect": [0.0, -hw, L, -rw], "color": _jitter(rng, pal["terrain"], jit)},
        {"shape": "ground", "cls": "road", "rect": [0.0, -rw, L, rw], "color": _jitter(rng, pal["road"], jit)},
        {"shape": "ground", "cls": "terrain", "rect": [0.0, rw, L, hw], "color": _jitter(rng, pal["terrain"], jit)},
    ]
    objects = []

    n_b = _count(rng, template.n_buildings)
    for k in range(n_b):
        side = 1.0 if k % 2 == 0 else -1.0
        sx = rng.uniform(6.0, 11.0)
        sy = rng.uniform(5.0, 9.0)
        x = rng.uniform(8.0 + sx / 2, L - sx / 2)
        y = side * rng.uniform(rw + 2.5 + sy / 2, hw - sy / 2)
        sz = rng.uniform(*template.building_height)
        objects.append({"shape": "box", "cls": "building", "position": [x, y, 0.0], "size": [sx, sy, sz],
                        "color": _jitter(rng, pal["building"], jit)})

    for _ in range(_count(rng, template.n_trees)):
        side = rng.choice([-1.0, 1.0])
        x = rng.uniform(8.0, L - 2.0)
        y = side * (rw + rng.uniform(0.8, 2.0))
        c = _jitter(rng, pal["tree"], jit)
        trunk_h = rng.uniform(1.5, 2.5)
        crown = rng.uniform(2.0, 3.5)
        objects.append({"shape": "box", "cls": "tree", "position": [x, y, 0.0], "size": [0.5, 0.5, trunk_h], "color": c})
        objects.append({"shape": "box", "cls": "tree", "position": [x, y, trunk_h], "size": [crown, crown, crown],
                        "color": c})

    for _ in range(_count(rng, template.n_cars)):
        lane = rng.choice([-2.0, 2.0])
        x = rng.uniform(12.0, L - 3.0)
        objects.append({"shape": "box", "cls": "car", "position": [x, lane + rng.uniform(-0.4, 0.4), 0.0],
                        "size": [4.2, 1.8, 1.5], "yaw": float(rng.uniform(-8, 8)), "color": _jitter(rng, pal["car"], jit)})

    for _ in range(_count(rng, template.n_persons)):
        side = rng.choice([-1.0, 1.0])
        x = rng.uniform(8.0, L - 2.0)
        y = side * (rw + rng.uniform(0.2, 1.8))
        objects.append({"shape": "billboard", "cls": "person", "position": [x, y, 0.0], "size": [1.0, 0.0, 2.0],
                        "yaw": float(rng.uniform(-20, 20)), "color": _jitter(rng, pal["person"], jit)})

    return SceneConfig(
        extent=(0.0, -hw, L, hw),
        objects=objects,
        ground=ground,
        class_palette={k: list(v) for k, v in pal.items()},
        seed=int(seed),
        resolution=tuple(template.resolution),
        focal=float(template.focal),
    )


def with_render_opts(scene, opts):
    return SceneConfig(
        extent=scene.extent, objects=scene.objects, ground=scene.ground, class_palette=scene.class_palette,
        classes=scene.classes, seed=scene.seed, resolution=scene.resolution, focal=scene.focal,
        render_opts=dict(opts),
    )


def sample_car_pose(template, rng, K):
    x = rng.uniform(1.0, 4.0)
    pitch = rng.uniform(*template.car_pitch)
    return CameraPose.from_center(K, [x, -2.0, template.car_height], 0.0, pitch)


def sample_drone_pose(template, rng, K):
    h = rng.uniform(*template.drone_height)
    pitch = rng.uniform(*template.drone_pitch)
    look_x = rng.uniform(22.0, 30.0)
    x = look_x - h / np.tan(np.radians(pitch))
    return CameraPose.from_center(K, [x, rng.uniform(-1.0, 1.0), h], 0.0, pitch)

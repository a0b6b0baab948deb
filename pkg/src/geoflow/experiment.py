"""Experiment configs, the four benchmark arms and a shared run/evaluate path.

An experiment config is a JSON document::

    {"seed": 0,
     "adapt": {... AdaptConfig fields ...},
     "train": {... TrainConfig fields ...},
     "scene": "scene.json"}

Every key is optional. A top-level ``seed`` overrides ``adapt.seed``;
``scene`` only records which scene template produced the data.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adapt_loss import AdaptConfig
from .evaluation import ConfusionMatrix, miou
from .prompt import view_prompts
from .scene.config import CLASSES
from .segmodel import TrainConfig, predict, train

ARMS = ("no-adapt", "euclidean", "geodesic", "geodesic+prompt")

# Desk-scale benchmark: dataset sizes and the data seeds of each split.
BENCHMARK_SCENES = {"train": 200, "test": 50, "paired": 500}
BENCHMARK_DATA_SEEDS = {"train": 1000, "test": 2000, "paired": 3000}
# Optimizer schedule used for the benchmark arms. The base learning rate
# (TrainConfig.lr) is tuned for mean-reduced losses on full-size networks;
# the linear patch model here needs a much larger step to converge in 30
# epochs.
BENCHMARK_TRAIN = {"epochs": 30, "lr": 2.0, "warmup_epochs": 15}
_PROMPT_DOMAINS = {"source": "car", "target": "drone"}


@dataclass(frozen=True)
class ExperimentConfig:
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scene: str = None

    @property
    def seed(self):
        return self.adapt.seed

    @property
    def arm(self):
        return arm_name(self.adapt, self.train)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"seed", "adapt", "train", "scene"}
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        adapt = dict(d.get("adapt", {}))
        if "seed" in d:
            adapt["seed"] = int(d["seed"])
        return cls(adapt=AdaptConfig.from_dict(adapt), train=TrainConfig.from_dict(dict(d.get("train", {}))),
                   scene=d.get("scene"))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))

    def to_dict(self):
        return {"seed": self.seed, "adapt": asdict(self.adapt), "train": asdict(self.train), "scene": self.scene}


def arm_name(adapt, train_cfg):
    """Which comparison arm a config belongs to."""
    if adapt.lambda_I == 0 and adapt.lambda_P == 0:
        return "no-adapt"
    if train_cfg.metric == "euclidean":
        return "euclidean"
    return "geodesic+prompt" if adapt.lambda_P > 0 else "geodesic"


def arm_config(arm, seed=0, **train_overrides):
    """Benchmark config for one arm; adaptation hyperparameters at their defaults.

    * ``no-adapt``: lambda_I = lambda_P = 0 (source-only training).
    * ``geodesic``: geodesic-flow distances, lambda_P = 0.
    * ``geodesic+prompt``: every default, view-condition prompts on.
    * ``euclidean``: as ``geodesic+prompt`` with every kernel replaced by Q = I.
    """
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}; choose from {ARMS}")
    adapt = AdaptConfig(seed=seed)
    tr = dict(BENCHMARK_TRAIN, **train_overrides)
    if arm == "no-adapt":
        adapt = adapt.replace(lambda_I=0.0, lambda_P=0.0)
    elif arm == "geodesic":
        adapt = adapt.replace(lambda_P=0.0)
    else:
        tr.update(use_prompts=True, metric="euclidean" if arm == "euclidean" else "geodesic")
    return ExperimentConfig(adapt=adapt, train=TrainConfig(**tr))


def prompts_for(train_cfg, classes=CLASSES):
    """Prompt bundle for a run, or None when prompts are off."""
    return view_prompts(classes, train_cfg.prompt_dim) if train_cfg.use_prompts else None


def evaluate(model, images, masks, domain="target", prompts=None, chunk=16):
    """Per-class IoU and mIoU over a global confusion matrix."""
    prompt = None
    if model.prompt_dim:
        if prompts is None:
            raise ValueError("a prompt-conditioned model needs prompts to evaluate")
        prompt = prompts[domain]
    conf = ConfusionMatrix(np.zeros((model.n_classes, model.n_classes), dtype=np.int64))
    for lo in range(0, len(images), chunk):
        pred = predict(model, images[lo:lo + chunk], prompt).argmax(axis=-1)
        conf = conf.merge(ConfusionMatrix.from_labels(masks[lo:lo + chunk], pred, model.n_classes))
    return miou(conf)


def run(exp, source, target_images, test=None, classes=CLASSES, progress=None):
    """Train one experiment and evaluate it on ``test``.

    ``test`` maps a domain name to ``(images, masks)``; the report's
    ``final_miou`` is the target-domain score when available. Returns
    ``(model, report, metrics)``.
    """
    prompts = prompts_for(exp.train, classes)
    model, report = train(exp.adapt, exp.train, source, target_images, prompts=prompts, progress=progress,
                          n_classes=len(classes))
    metrics = {}
    for domain, (imgs, masks) in (test or {}).items():
        metrics[domain] = evaluate(model, imgs, masks, domain, prompts)
    if "target" in metrics:
        report.final_miou = metrics["target"]["miou"]
    return model, report, metrics


def curves_csv(report):
    """Per-epoch losses as CSV text (17 significant digits, so runs compare bytewise)."""
    cols = ["epoch", "supervised", "geo", "prompt", "total"]
    lines = [",".join(cols)]
    for row in report.epochs:
        lines.append(",".join([str(row["epoch"])] + [f"{row[c]:.17g}" for c in cols[1:]]))
    return "\n".join(lines) + "\n"


def miou_csv(metrics, classes=CLASSES):
    """``class,iou`` rows followed by a ``miou`` row; empty IoU for excluded classes."""
    lines = ["class,iou"]
    for c, v in zip(classes, metrics["per_class_iou"]):
        lines.append(f"{c}," + ("" if v is None else f"{v:.6f}"))
    lines.append(f"miou,{metrics['miou']:.6f}")
    return "\n".join(lines) + "\n"


def summarize_arms(results, classes=CLASSES):
    """Mean per-class IoU and mIoU per arm over runs.

    ``results`` is a list of ``(arm, metrics)`` with target-domain metrics.
    Rows follow the canonical arm order; arms without runs are omitted.
    """
    rows = []
    for arm in ARMS:
        runs = [m for a, m in results if a == arm]
        if not runs:
            continue
        per_class = []
        for c in range(len(classes)):
            vals = [m["per_class_iou"][c] for m in runs if m["per_class_iou"][c] is not None]
            per_class.append(float(np.mean(vals)) if vals else None)
        rows.append({"arm": arm, "runs": len(runs), "per_class_iou": per_class,
                     "miou": float(np.mean([m["miou"] for m in runs]))})
    return rows


def arms_csv(rows, classes=CLASSES):
    lines = [",".join(["arm", "runs", *classes, "miou"])]
    for r in rows:
        cells = ["" if v is None else f"{v:.6f}" for v in r["per_class_iou"]]
        lines.append(",".join([r["arm"], str(r["runs"]), *cells, f"{r['miou']:.6f}"]))
    return "\n".join(lines) + "\n"

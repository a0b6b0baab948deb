"""``geoflow`` command-line tool.

Exit status: 0 success, 2 usage error, 3 data error (missing or malformed
input), 4 numerical failure (rank collapse, degenerate vectors, or a check
outside its tolerance). Failures print one ``geoflow: error[<kind>]: ...``
line on stderr. Every artifact is written atomically and gets a JSON
sidecar (``<file>.json``) holding the command line and seed.
"""
import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import checks
from .errors import AmbientTooSmall, DegenerateVector, GeoflowError, RankDeficient
from .experiment import (
    ARMS,
    ExperimentConfig,
    arms_csv,
    curves_csv,
    evaluate,
    miou_csv,
    prompts_for,
    run,
    summarize_arms,
)
from .gfk import SMALL_ANGLE_EPS, build_kernel, gfk_distance
from .matio import atomic_write_text, read_matrix, read_sidecar, write_matrix, write_sidecar
from .prompt import DOMAINS as PROMPT_DOMAINS
from .prompt import PromptSpec, build_prompt, embed_prompt
from .scene.config import CLASSES, SceneTemplate
from .scene.dataset import generate_views, load_domain, load_manifest, make_cross_view_dataset
from .scene.features import featurize, soft_mask
from .segmodel import SegModel, TrainConfig
from .subspace import Subspace, feasible_dim, fit_subspace

log = logging.getLogger("geoflow")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4
_NUMERICAL = (RankDeficient, DegenerateVector, AmbientTooSmall, FloatingPointError)


class CheckFailed(Exception):
    """A property check finished outside its tolerance."""


class DataError(Exception):
    pass


def _command(argv):
    return "geoflow " + shlex.join(argv)


def _provenance(args, seed=None, **extra):
    return {"command": args.command_line, "seed": seed, **extra}


def _write_csv(path, text, args, seed=None, **extra):
    atomic_write_text(path, text)
    write_sidecar(path, _provenance(args, seed, **extra))


def _load_template(path):
    if path is None:
        return SceneTemplate()
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config not found: {p}")
    return SceneTemplate.load(p)


def _read_vector_matrix(path):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"matrix not found: {p}")
    return read_matrix(p)


# ---------------------------------------------------------------- scene / data


def cmd_scene_gen(args):
    template = _load_template(args.config)
    man = make_cross_view_dataset(template, args.scenes, args.out, paired=args.paired, seed=args.seed,
                                  command=args.command_line)
    counts = man["domains"]["target"]["class_pixel_counts"]
    print(f"wrote {args.scenes} {'paired' if args.paired else 'unpaired'} scenes to {args.out}")
    print("target pixels: " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def _domain_features(data, domain, kind, downsample):
    imgs, masks = load_domain(data, domain)
    if kind == "image":
        return featurize(imgs, downsample)
    n_classes = len(load_manifest(data)["classes"])
    return featurize(soft_mask(masks, n_classes), downsample)


def cmd_subspace_fit(args):
    if args.input:
        X = _read_vector_matrix(args.input)
    else:
        X = _domain_features(args.data, args.domain, args.kind, args.downsample)
    dim = args.dim
    if args.clip:
        dim = feasible_dim(dim, X, center=not args.no_center)
    sub = fit_subspace(X, dim, center=not args.no_center)
    write_matrix(args.out, sub.basis)
    write_sidecar(args.out, _provenance(args, None, dim=sub.dim, ambient_dim=sub.ambient_dim,
                                        samples=int(X.shape[0]), centered=not args.no_center,
                                        mean=sub.mean.tolist()))
    print(f"fit G({sub.dim}, {sub.ambient_dim}) from {X.shape[0]} samples -> {args.out}")


def _load_subspace(path):
    basis = _read_vector_matrix(path)
    meta = read_sidecar(path)
    mean = np.asarray(meta["mean"]) if "mean" in meta else None
    return Subspace(basis, mean)


def cmd_gfk_build(args):
    Ps, Pt = _load_subspace(args.src), _load_subspace(args.tgt)
    k = build_kernel(Ps, Pt, args.eps)
    write_matrix(args.out, k.Q)
    write_sidecar(args.out, _provenance(
        args, None, omegas=k.omegas.tolist(), lambda1=k.lambda1.tolist(), lambda2=k.lambda2.tolist(),
        lambda3=k.lambda3.tolist(), mean_s=k.mean_s.tolist(), mean_t=k.mean_t.tolist(),
        dim=int(Ps.dim), ambient_dim=int(Ps.ambient_dim), small_angle_eps=args.eps))
    print(f"kernel {k.Q.shape[0]}x{k.Q.shape[1]}, max angle {float(np.max(k.omegas)):.6f} rad -> {args.out}")


class _Kernel:
    """Minimal kernel view (Q plus ambient dimension) for ``gfk dist``."""

    def __init__(self, Q):
        self.Q = Q
        self.ambient_dim = Q.shape[0]


def cmd_gfk_dist(args):
    Q = _read_vector_matrix(args.kernel)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DataError(f"kernel must be square, got {Q.shape}")
    a = _read_vector_matrix(args.a).ravel()
    b = _read_vector_matrix(args.b).ravel()
    if args.center:
        meta = read_sidecar(args.kernel)
        if "mean_s" not in meta:
            raise DataError("--center needs the kernel sidecar with mean_s/mean_t")
        a = a - np.asarray(meta["mean_s"])
        b = b - np.asarray(meta["mean_t"])
    print(repr(float(gfk_distance(_Kernel(Q), a, b))))


def cmd_prompt_embed(args):
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    text = build_prompt(PromptSpec(classes, args.domain))
    f = embed_prompt(text, args.dim)
    write_matrix(args.out, f[None, :])
    write_sidecar(args.out, _provenance(args, None, text=text, dim=args.dim))
    print(text)


# ---------------------------------------------------------------- training


def _load_experiment(args):
    exp = ExperimentConfig.load(args.config)
    d = exp.to_dict()
    for flag, section, key in (("alpha", "adapt", "alpha"), ("gamma", "adapt", "gamma"),
                               ("lambda_i", "adapt", "lambda_I"), ("lambda_p", "adapt", "lambda_P"),
                               ("epochs", "train", "epochs"), ("lr", "train", "lr"),
                               ("metric", "train", "metric")):
        val = getattr(args, flag, None)
        if val is not None:
            d[section][key] = val
    if args.seed is not None:
        d["seed"] = args.seed
    d["adapt"].pop("seed", None)
    return ExperimentConfig.from_dict(d)


def _load_split(data):
    if not (Path(data) / "manifest.json").is_file():
        raise DataError(f"no dataset (manifest.json) in {data}")
    man = load_manifest(data)
    return man, {d: load_domain(data, d) for d in ("source", "target")}


def cmd_train(args):
    exp = _load_experiment(args)
    man, split = _load_split(args.data)
    classes = tuple(man["classes"])
    test = None
    if args.test:
        _, test = _load_split(args.test)

    def progress(row):
        log.info("epoch %d: total %.6f (sup %.6f, geo %.6f, prompt %.6f)", row["epoch"], row["total"],
                 row["supervised"], row["geo"], row["prompt"])

    model, report, metrics = run(exp, split["source"], split["target"][0], test=test, classes=classes,
                                 progress=progress)
    out = Path(args.out)
    seed = exp.seed
    write_matrix(out / "model.gfkm", model.to_matrix())
    write_sidecar(out / "model.gfkm", _provenance(args, seed, model=model.meta(), classes=list(classes),
                                                  prompt_dim=exp.train.prompt_dim, use_prompts=exp.train.use_prompts,
                                                  arm=exp.arm))
    # the command line (which names the output directory) lives in the sidecar only
    doc = {"arm": exp.arm, "seed": seed, "config": exp.to_dict(),
           "data": str(args.data), "test": None if args.test is None else str(args.test),
           "report": report.to_dict(), "metrics": metrics}
    atomic_write_text(out / "report.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    write_sidecar(out / "report.json", _provenance(args, seed))
    _write_csv(out / "curves.csv", curves_csv(report), args, seed)
    if "target" in metrics:
        _write_csv(out / "eval_target.csv", miou_csv(metrics["target"], classes), args, seed)
    last = report.epochs[-1]
    msg = f"{exp.arm}: final total loss {last['total']:.6f}"
    if report.final_miou is not None:
        msg += f", target test mIoU {report.final_miou:.4f}"
    print(msg)


def _load_model(path):
    mat = _read_vector_matrix(path)
    meta = read_sidecar(path)
    if "model" not in meta:
        raise DataError(f"{path}: sidecar with model metadata not found")
    model = SegModel.from_matrix(mat, meta["model"])
    return model, meta


def cmd_eval(args):
    model, meta = _load_model(args.model)
    man = load_manifest(args.data) if (Path(args.data) / "manifest.json").is_file() else None
    if man is None:
        raise DataError(f"no dataset (manifest.json) in {args.data}")
    classes = tuple(meta.get("classes", man["classes"]))
    imgs, masks = load_domain(args.data, args.domain)
    prompts = None
    if model.prompt_dim:
        prompts = prompts_for(TrainConfig(use_prompts=True, prompt_dim=meta["prompt_dim"]), classes)
    metrics = evaluate(model, imgs, masks, args.domain, prompts)
    text = miou_csv(metrics, classes)
    if args.out:
        _write_csv(args.out, text, args, meta.get("seed"))
    sys.stdout.write(text)


def cmd_report(args):
    results = []
    for r in args.runs:
        p = Path(r) / "report.json"
        if not p.is_file():
            raise DataError(f"run directory without report.json: {r}")
        doc = json.loads(p.read_text())
        if "target" not in doc.get("metrics", {}):
            raise DataError(f"{r}: no target test metrics (train with --test)")
        results.append((doc["arm"], doc["metrics"]["target"]))
    text = arms_csv(summarize_arms(results))
    if args.out:
        _write_csv(args.out, text, args, None, runs=[str(r) for r in args.runs])
    sys.stdout.write(text)


# ---------------------------------------------------------------- checks


def _fail_if(cond, msg):
    if cond:
        raise CheckFailed(msg)


def cmd_check_kernel_oracle(args):
    res = checks.kernel_oracle(args.trials, args.dmax, args.nmax, args.points, args.rule, args.seed)
    if args.out:
        lines = ["trial,D,N,max_abs_diff"] + [f"{r['trial']},{r['D']},{r['N']},{r['max_abs_diff']:.6e}"
                                               for r in res["trials"]]
        _write_csv(args.out, "\n".join(lines) + "\n", args, args.seed)
    print(f"max |dQ| = {res['max_abs_diff']:.3e} over {args.trials} pairs ({res['seconds']:.1f} s)")
    _fail_if(res["max_abs_diff"] > args.tol, f"max |dQ| {res['max_abs_diff']:.3e} exceeds {args.tol:g}")


def cmd_check_bounds(args):
    res = checks.upper_bound(args.tuples, args.dim, args.sub_dim, args.alpha, args.seed)
    if args.out:
        rows = ["lhs,rhs,margin"] + [f"{a:.17g},{b:.17g},{b - a:.17g}" for a, b in zip(res["lhs"], res["rhs"])]
        _write_csv(args.out, "\n".join(rows) + "\n", args, args.seed, alpha=args.alpha,
                   max_violation=res["max_violation"])
    print(f"checked {res['n_checked']} tuples at alpha={args.alpha}: max(lhs - rhs) = {res['max_violation']:.6f}")
    _fail_if(res["max_violation"] > 1e-9, f"bound violated by {res['max_violation']:.3e}")


def cmd_check_triangle(args):
    res = checks.triangle(args.triples, args.dim, args.sub_dim, args.seed)
    text = "n_triples,violation_rate,worst_margin\n" + \
        f"{res['n_triples']},{res['violation_rate']:.17g},{res['worst_margin']:.17g}\n"
    if args.out:
        _write_csv(args.out, text, args, args.seed)
    sys.stdout.write(text)


def cmd_check_hypothesis(args):
    if args.data:
        man = load_manifest(args.data)
        if not man.get("paired"):
            raise DataError(f"{args.data} is not a paired dataset")
        views = {}
        for d in ("source", "target"):
            imgs, masks = load_domain(args.data, d)
            views[d] = {"images": imgs, "masks": masks}
        n_classes = len(man["classes"])
    else:
        views = generate_views(_load_template(args.config), args.scenes, True, args.seed)
        n_classes = len(CLASSES)
    res = checks.hypothesis_study(views, n_classes, args.downsample, args.subspace_dim, args.pairs, args.seed)
    summary = {"pearson_r": res["pearson_r"], "slope": res["slope"], "alpha": args.alpha,
               "samples": res["samples"], "degenerate": res["degenerate"],
               "image_dim": res["image_dim"], "segmentation_dim": res["segmentation_dim"]}
    if args.out:
        rows = ["i,j,dx,dy"] + [f"{i},{j},{x:.17g},{y:.17g}" for i, j, x, y in
                                zip(res["i"], res["j"], res["dx"], res["dy"])]
        _write_csv(args.out, "\n".join(rows) + "\n", args, args.seed, **summary)
    if res["degenerate"]:
        print(f"correlation undefined (constant distances) over {res['samples']} pairs")
    else:
        print(f"pearson_r={res['pearson_r']:.6f} slope={res['slope']:.6f} alpha={args.alpha} "
              f"samples={res['samples']}")


def cmd_check_gradcheck(args):
    res = checks.gradcheck(args.batches, args.h, args.seed)
    print(f"max relative error {res['max_rel_error']:.3e} over {args.batches} batches ({res['seconds']:.1f} s)")
    _fail_if(res["max_rel_error"] > args.tol, f"gradient error {res['max_rel_error']:.3e} exceeds {args.tol:g}")


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="geoflow", description=__doc__.split("\n")[0])
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="group", required=True)

    scene = sub.add_parser("scene", help="synthetic datasets").add_subparsers(dest="action", required=True)
    g = scene.add_parser("gen", help="render a car-view/drone-view dataset")
    g.add_argument("--config", help="scene template JSON (default: built-in street family)")
    g.add_argument("--out", required=True)
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--paired", dest="paired", action="store_true", help="both views of each scene")
    mode.add_argument("--unpaired", dest="paired", action="store_false", help="independent scenes per view")
    g.add_argument("--scenes", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_scene_gen, paired=False)

    ss = sub.add_parser("subspace", help="PCA subspaces").add_subparsers(dest="action", required=True)
    f = ss.add_parser("fit", help="fit a subspace to samples")
    src = f.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="GFKM sample matrix, one sample per row")
    src.add_argument("--data", help="dataset directory")
    f.add_argument("--domain", choices=("source", "target"), default="source")
    f.add_argument("--kind", choices=("image", "mask"), default="image")
    f.add_argument("--downsample", type=int, default=8)
    f.add_argument("--dim", type=int, default=256)
    f.add_argument("--clip", action="store_true", help="lower --dim to the largest feasible dimension")
    f.add_argument("--no-center", action="store_true")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_subspace_fit)

    gk = sub.add_parser("gfk", help="geodesic flow kernels").add_subparsers(dest="action", required=True)
    b = gk.add_parser("build", help="closed-form kernel between two subspaces")
    b.add_argument("--src", required=True)
    b.add_argument("--tgt", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--eps", type=float, default=SMALL_ANGLE_EPS, help="small-angle series threshold on 2*omega")
    b.set_defaults(func=cmd_gfk_build)
    d = gk.add_parser("dist", help="distance between two vectors under a kernel")
    d.add_argument("--kernel", required=True)
    d.add_argument("--a", required=True)
    d.add_argument("--b", required=True)
    d.add_argument("--center", action="store_true", help="subtract the domain means stored with the kernel")
    d.set_defaults(func=cmd_gfk_dist)

    pr = sub.add_parser("prompt", help="view-condition prompts").add_subparsers(dest="action", required=True)
    e = pr.add_parser("embed", help="embed a view-condition prompt")
    e.add_argument("--classes", required=True, help="comma-separated class names")
    e.add_argument("--domain", choices=PROMPT_DOMAINS, required=True)
    e.add_argument("--dim", type=int, default=64)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_prompt_embed)

    t = sub.add_parser("train", help="train a segmenter with optional adaptation")
    t.add_argument("--config", required=True, help="experiment config JSON")
    t.add_argument("--data", required=True, help="unpaired dataset (labeled source, unlabeled target)")
    t.add_argument("--test", help="labeled test dataset evaluated after training")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--alpha", type=float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--lambda-i", dest="lambda_i", type=float)
    t.add_argument("--lambda-p", dest="lambda_p", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--metric", choices=("geodesic", "euclidean"))
    t.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="per-class IoU and mIoU of a trained model")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--domain", choices=("source", "target"), default="target")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    rp = sub.add_parser("report", help=f"compare runs by arm ({', '.join(ARMS)})")
    rp.add_argument("--runs", nargs="+", required=True)
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)

    ck = sub.add_parser("check", help="property checks").add_subparsers(dest="action", required=True)
    c = ck.add_parser("kernel-oracle", help="closed-form kernel vs quadrature")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--dmax", type=int, default=64)
    c.add_argument("--nmax", type=int, default=16)
    c.add_argument("--points", type=int, default=2001)
    c.add_argument("--rule", choices=("simpson", "trapezoid"), default="simpson")
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_kernel_oracle)
    c = ck.add_parser("bounds", help="unpaired upper-bound inequality on random tuples")
    c.add_argument("--tuples", type=int, default=10_000)
    c.add_argument("--dim", type=int, default=32)
    c.add_argument("--sub-dim", type=int, default=8)
    c.add_argument("--alpha", type=float, default=1.5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_bounds)
    c = ck.add_parser("triangle", help="triangle-inequality probe (diagnostic)")
    c.add_argument("--triples", type=int, default=100_000)
    c.add_argument("--dim", type=int, default=32)
    c.add_argument("--sub-dim", type=int, default=8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_triangle)
    c = ck.add_parser("hypothesis", help="paired-view distance correlation")
    c.add_argument("--data", help="paired dataset (default: render one in memory)")
    c.add_argument("--config", help="scene template JSON for in-memory rendering")
    c.add_argument("--scenes", type=int, default=500)
    c.add_argument("--seed", type=int, default=3000)
    c.add_argument("--pairs", type=int, help="sample this many (i, j) pairs instead of all")
    c.add_argument("--downsample", type=int, default=8)
    c.add_argument("--subspace-dim", type=int, default=256)
    c.add_argument("--alpha", type=float, default=1.5, help="reported next to the fitted slope")
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_hypothesis)
    c = ck.add_parser("gradcheck", help="adaptation-loss gradient vs finite differences")
    c.add_argument("--batches", type=int, default=10)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_gradcheck)
    return p


def _exit_code(exc):
    if isinstance(exc, (CheckFailed, *_NUMERICAL)):
        return EXIT_NUMERICAL, "numerical"
    return EXIT_DATA, "data"


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    args.command_line = _command(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CheckFailed, DataError, GeoflowError, FloatingPointError, OSError, ValueError, KeyError) as exc:
        if isinstance(exc, FileNotFoundError) and "not found" not in str(exc):
            exc = DataError(f"not found: {exc.filename or exc}")
        code, kind = _exit_code(exc)
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        sys.stdout.flush()
        print(f"geoflow: error[{kind}]: {msg}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())

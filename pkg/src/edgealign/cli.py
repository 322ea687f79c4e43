"""Command-line surface.

Subcommands: ``synth`` (generate a synthetic dataset), ``align`` (one
probability/label pair to a mapping plus refined labels), ``refine``
(dataset-level label refinement), ``train`` (toy predictor, alternating
steps), ``eval`` (precision-recall benchmark), ``viz`` (color-coded
rendering), ``oracle`` (exhaustive self-checks), ``loss`` (cross-entropy
loss and gradient over containers).

Exit codes: 0 success, 2 input/format error, 3 infeasible alignment,
4 internal invariant violation.  All commands are deterministic for a
fixed seed and configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import BIASED_MRF, ISOTROPIC, AlignConfig, align_iterates, realize_labels
from .benchmark import (
    RAW,
    THIN,
    BenchAccumulator,
    BenchConfig,
    average_precision,
    mf_ods,
    pr_accumulate,
    to_curves,
)
from .containers import (
    DTYPE_F32,
    load_image,
    load_multi_label,
    load_prob_map,
    save_multi_label,
    save_prob_map,
    write_container,
)
from .errors import (
    EdgeAlignError,
    InfeasibleAssignmentError,
    InputFormatError,
    InternalInvariantError,
)
from .exhaustive import (
    check_assign_step_exactness,
    check_realization_optimality,
    flip_cost_gap,
    random_small_instance,
    surjectivity_holds,
)
from .grids import MultiLabelMap, ProbMap, clamp_probs, extract_class
from .manifest import PALETTES, DatasetManifest, ImageEntry
from .predictor import TinyConvPredictor
from .synth import SynthSpec, synth_dataset
from .training import alternating_step, ce_gradient_arrays, ce_loss_arrays
from .viz import save_png, visualize

_MODE_NAMES = {"iso": ISOTROPIC, "bg-mrf": BIASED_MRF}


def _add_align_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=sorted(_MODE_NAMES), default="bg-mrf")
    p.add_argument("--sigma", type=float, default=4.0)
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--sigma-y", type=float, default=4.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.02)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--assign-steps", type=int, default=2)
    p.add_argument("--geodesic", type=int, default=2)
    p.add_argument("--fit-radius", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-6)


def _align_config(args) -> tuple[AlignConfig, str]:
    cfg = AlignConfig(
        sigma=args.sigma, sigma_x=args.sigma_x, sigma_y=args.sigma_y, lam=args.lam,
        window_radius=args.window, assign_steps=args.assign_steps,
        geodesic_radius=args.geodesic, fit_radius=args.fit_radius, epsilon=args.epsilon,
    )
    return cfg, _MODE_NAMES[args.mode]


def _json_dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _refine_multi(prob: ProbMap, labels: MultiLabelMap, cfg: AlignConfig,
                  mode: str) -> MultiLabelMap:
    prob = clamp_probs(prob, cfg.epsilon)
    planes = []
    for k in range(labels.num_classes):
        y_k = extract_class(labels, k)
        if y_k.edge_count() == 0:
            planes.append(y_k)
            continue
        mapping = align_iterates(y_k, prob.plane(k), cfg, mode)[-1]
        planes.append(realize_labels(y_k, mapping))
    return MultiLabelMap.from_planes(planes)


def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_images=args.images, height=args.height, width=args.width,
        num_classes=args.classes, jitter=args.jitter, prob_peak=args.prob_peak,
        prob_floor=args.prob_floor, prob_sharpness=args.sharpness,
        prob_peak_variation=args.peak_variation,
    )
    manifest = synth_dataset(spec, args.seed, args.out)
    print(f"wrote {len(manifest.entries)} images to {args.out}")
    return 0


def cmd_align(args) -> int:
    prob = load_prob_map(args.prob)
    labels = load_multi_label(args.labels, prob.num_classes)
    if labels.shape != prob.shape:
        raise InputFormatError(
            f"label grid {labels.shape} does not match probability grid {prob.shape}"
        )
    cfg, mode = _align_config(args)
    clamped = clamp_probs(prob, cfg.epsilon)
    planes = []
    mapping_doc = {}
    for k in range(labels.num_classes):
        y_k = extract_class(labels, k)
        if y_k.edge_count() == 0:
            planes.append(y_k)
            mapping_doc[str(k)] = []
            continue
        mapping = align_iterates(y_k, clamped.plane(k), cfg, mode)[-1]
        planes.append(realize_labels(y_k, mapping))
        mapping_doc[str(k)] = [
            [[int(s[0]), int(s[1])], [int(t[0]), int(t[1])]]
            for s, t in zip(mapping.sources.tolist(), mapping.targets.tolist())
        ]
    refined = MultiLabelMap.from_planes(planes)
    save_multi_label(args.out_labels, refined)
    if args.out_mapping:
        _json_dump(args.out_mapping, mapping_doc)
    moved = int((refined.field != labels.field).sum())
    print(f"aligned {labels.num_classes} classes; {moved} pixels differ from input")
    return 0


def cmd_refine(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    base = Path(args.manifest).parent
    manifest.validate_files(base)
    cfg, mode = _align_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def refine_one(entry: ImageEntry) -> ImageEntry:
        labels = load_multi_label(base / entry.labels, manifest.num_classes)
        if entry.prob is None:
            raise InputFormatError(f"entry {entry.id} has no probability map")
        prob = load_prob_map(base / entry.prob)
        if args.predict_only:
            refined = MultiLabelMap.from_planes(prob.planes >= 0.5)
        else:
            refined = _refine_multi(prob, labels, cfg, mode)
        out_name = f"{entry.id}_labels_refined.sebg"
        save_multi_label(out_dir / out_name, refined)
        return ImageEntry(
            id=entry.id, height=entry.height, width=entry.width, labels=entry.labels,
            prob=entry.prob, image=entry.image, labels_true=entry.labels_true,
            labels_refined=out_name,
        )

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            new_entries = list(pool.map(refine_one, manifest.entries))
    else:
        new_entries = [refine_one(e) for e in manifest.entries]
    # refined containers live in out_dir; keep other paths reachable from there
    rel = Path(os.path.relpath(base, out_dir))
    rebased = [
        ImageEntry(
            id=e.id, height=e.height, width=e.width,
            labels=str(rel / e.labels),
            prob=str(rel / e.prob) if e.prob else None,
            image=str(rel / e.image) if e.image else None,
            labels_true=str(rel / e.labels_true) if e.labels_true else None,
            labels_refined=e.labels_refined,
        )
        for e in new_entries
    ]
    out_manifest = DatasetManifest(classes=manifest.classes, colors=manifest.colors,
                                   entries=rebased)
    out_manifest.save(out_dir / "manifest.json")
    print(f"refined {len(rebased)} images into {out_dir}")
    return 0


def cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    base = Path(args.manifest).parent
    manifest.validate_files(base)
    cfg, mode = _align_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    images, labels = [], []
    for entry in manifest.entries:
        if entry.image is None:
            raise InputFormatError(f"entry {entry.id} has no image; train needs images")
        images.append(load_image(base / entry.image))
        labels.append(load_multi_label(base / entry.labels, manifest.num_classes))
    predictor = TinyConvPredictor(manifest.num_classes, hidden=args.hidden, seed=args.seed)
    latents = list(labels)
    log_lines = ["step,image,loss"]
    for step in range(args.steps):
        i = step % len(images)
        latents[i], report = alternating_step(
            images[i].astype(np.float64), labels[i], latents[i], predictor, cfg,
            args.step_size, mode=mode, refresh_labels=not args.no_refresh,
        )
        log_lines.append(f"{step},{manifest.entries[i].id},{report.total!r}")
    (out_dir / "loss_log.csv").write_text("\n".join(log_lines) + "\n")
    for key, value in predictor.state().items():
        np.save(out_dir / f"predictor_{key}.npy", value)

    new_entries = []
    rel = Path(os.path.relpath(base, out_dir))
    for entry, latent in zip(manifest.entries, latents):
        prob = predictor.forward(load_image(base / entry.image).astype(np.float64))
        prob_name = f"{entry.id}_prob.sebg"
        refined_name = f"{entry.id}_labels_refined.sebg"
        save_prob_map(out_dir / prob_name, prob)
        save_multi_label(out_dir / refined_name, latent)
        new_entries.append(ImageEntry(
            id=entry.id, height=entry.height, width=entry.width,
            labels=str(rel / entry.labels), prob=prob_name,
            image=str(rel / entry.image) if entry.image else None,
            labels_true=str(rel / entry.labels_true) if entry.labels_true else None,
            labels_refined=refined_name,
        ))
    DatasetManifest(classes=manifest.classes, colors=manifest.colors,
                    entries=new_entries).save(out_dir / "manifest.json")
    print(f"trained {args.steps} steps on {len(images)} images; outputs in {out_dir}")
    return 0


def _parse_thresholds(text: str) -> tuple:
    if ":" in text:
        lo, hi, count = text.split(":")
        values = np.linspace(float(lo), float(hi), int(count))
        return tuple(round(float(v), 6) for v in values)
    return tuple(float(v) for v in text.split(","))


def cmd_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    base = Path(args.manifest).parent
    manifest.validate_files(base)
    mode = {"thin": THIN, "raw": RAW}[args.mode]
    cfg = BenchConfig(
        tolerance_fraction=args.tolerance, mode=mode,
        thresholds=_parse_thresholds(args.thresholds),
        border_ignore=args.border_ignore, raw_gt_dilation=args.raw_dilation,
    )
    acc = BenchAccumulator(num_classes=manifest.num_classes, thresholds=cfg.thresholds)
    for entry in manifest.entries:
        gt_key = args.gt_key or ("labels_true" if entry.labels_true else "labels")
        gt_rel = getattr(entry, gt_key)
        if gt_rel is None:
            raise InputFormatError(f"entry {entry.id} has no {gt_key!r} ground truth")
        gt = load_multi_label(base / gt_rel, manifest.num_classes)
        if args.pred_from_labels:
            pred_rel = getattr(entry, args.pred_from_labels)
            if pred_rel is None:
                raise InputFormatError(f"entry {entry.id} has no {args.pred_from_labels!r}")
            pred_labels = load_multi_label(base / pred_rel, manifest.num_classes)
            prob = ProbMap(planes=pred_labels.to_bit_planes().astype(np.float32))
        else:
            if entry.prob is None:
                raise InputFormatError(f"entry {entry.id} has no probability map")
            prob = load_prob_map(base / entry.prob)
        acc = pr_accumulate(acc, prob, gt, cfg)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = to_curves(acc, mode=mode)
    csv_lines = ["class,threshold,precision,recall"]
    for k, curve in enumerate(curves):
        for t, p, r in zip(curve.thresholds, curve.precision, curve.recall):
            csv_lines.append(f"{manifest.classes[k]},{t!r},{p!r},{r!r}")
    (out_dir / "pr_curves.csv").write_text("\n".join(csv_lines) + "\n")

    per_class_mf, mean_mf = mf_ods(acc)
    summary = {
        "mode": args.mode,
        "tolerance_fraction": args.tolerance,
        "mf_per_class": {manifest.classes[k]: per_class_mf[k]
                         for k in range(manifest.num_classes)},
        "mf_mean": mean_mf,
    }
    if mode == RAW:
        ap = [average_precision(c) for c in curves]
        summary["ap_per_class"] = {manifest.classes[k]: ap[k]
                                   for k in range(manifest.num_classes)}
        summary["ap_mean"] = float(np.mean(ap))
    _json_dump(out_dir / "summary.json", summary)
    _plot_curves(out_dir / "pr_curves.png", manifest, curves)
    print(f"mean MF ({args.mode}) = {mean_mf:.4f}; results in {out_dir}")
    return 0


def _plot_curves(path, manifest: DatasetManifest, curves) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for k, curve in enumerate(curves):
        color = tuple(v / 255.0 for v in manifest.colors[k])
        ax.plot(curve.recall, curve.precision, label=manifest.classes[k], color=color)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower left", fontsize=7)
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def cmd_viz(args) -> int:
    prob = load_prob_map(args.prob)
    if args.manifest:
        colors = DatasetManifest.load(args.manifest).colors
    elif args.palette:
        colors = list(PALETTES[args.palette][1])
    else:
        raise InputFormatError("viz needs --manifest or --palette for class colors")
    if len(colors) < prob.num_classes:
        raise InputFormatError(
            f"palette has {len(colors)} colors, probability map has {prob.num_classes}"
        )
    save_png(args.out, visualize(prob, colors[: prob.num_classes]))
    print(f"wrote {args.out}")
    return 0


def cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed)
    modes = [ISOTROPIC, BIASED_MRF] if args.mode == "both" else [_MODE_NAMES[args.mode]]
    failures = 0
    if args.suite in ("realization", "all"):
        passed = 0
        for i in range(args.instances):
            inst = random_small_instance(rng, mode=modes[i % len(modes)])
            passed += bool(check_realization_optimality(inst))
        print(f"realization optimality: {passed}/{args.instances}")
        failures += args.instances - passed
    if args.suite in ("assign", "all"):
        passed = 0
        for i in range(args.instances):
            inst = random_small_instance(rng, mode=BIASED_MRF, max_pixels=3,
                                         lam=float(rng.uniform(0.005, 0.1)))
            passed += bool(check_assign_step_exactness(inst))
        print(f"assign-step exactness: {passed}/{args.instances}")
        failures += args.instances - passed
    if args.suite in ("lemmas", "all"):
        passed = 0
        for i in range(args.instances):
            inst = random_small_instance(rng, mode=ISOTROPIC, max_side=4, max_pixels=3)
            ok = surjectivity_holds(inst.y)
            targets = np.argwhere(rng.uniform(size=inst.y.shape) < 0.3).astype(np.int32)
            ok = ok and flip_cost_gap(inst.plane, targets) < 1e-9
            passed += bool(ok)
        print(f"realizability and flip-cost identity: {passed}/{args.instances}")
        failures += args.instances - passed
    if failures:
        raise InternalInvariantError(f"{failures} exhaustive checks failed")
    return 0


def cmd_loss(args) -> int:
    prob = load_prob_map(args.prob)
    labels = load_multi_label(args.labels, prob.num_classes)
    if labels.shape != prob.shape:
        raise InputFormatError(
            f"label grid {labels.shape} does not match probability grid {prob.shape}"
        )
    clamped = clamp_probs(prob, args.epsilon)
    planes = labels.to_bit_planes().astype(np.float64)
    p = clamped.planes.astype(np.float64)
    report = ce_loss_arrays(p, planes, beta=args.beta)
    if args.out_grad:
        grad = ce_gradient_arrays(p, planes, beta=args.beta)
        write_container(args.out_grad, grad.astype(np.float32), DTYPE_F32)
    print(json.dumps({
        "total": report.total,
        "per_class": list(report.per_class),
        "pixel_count": report.pixel_count,
        "mean_per_pixel": report.total / (report.pixel_count * prob.num_classes),
    }, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgealign",
                                     description="Edge label alignment toolkit")
    parser.add_argument("--version", action="version", version=f"edgealign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=10)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--jitter", type=float, default=3.0)
    p.add_argument("--prob-peak", type=float, default=0.95)
    p.add_argument("--prob-floor", type=float, default=0.02)
    p.add_argument("--sharpness", type=float, default=0.8)
    p.add_argument("--peak-variation", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("align", help="align one label grid against probabilities")
    p.add_argument("--prob", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--out-mapping", default=None)
    _add_align_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("refine", help="refine all labels in a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--predict-only", action="store_true",
                   help="ignore annotations; binarize probabilities at 0.5")
    _add_align_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("train", help="alternating training of the toy predictor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--step-size", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-refresh", action="store_true",
                   help="train on the noisy labels without re-alignment")
    _add_align_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="precision-recall benchmark over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["thin", "raw"], default="thin")
    p.add_argument("--tolerance", type=float, default=0.02)
    p.add_argument("--border-ignore", type=int, default=5)
    p.add_argument("--thresholds", default="0.01:0.99:99")
    p.add_argument("--raw-dilation", type=int, default=1)
    p.add_argument("--gt-key", choices=["labels", "labels_true", "labels_refined"],
                   default=None)
    p.add_argument("--pred-from-labels",
                   choices=["labels", "labels_true", "labels_refined"], default=None,
                   help="evaluate a label map as a binary prediction")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="render a probability map to PNG")
    p.add_argument("--prob", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--palette", choices=sorted(PALETTES), default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("oracle", help="run exhaustive self-checks")
    p.add_argument("--suite", choices=["realization", "assign", "lemmas", "all"],
                   default="all")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["iso", "bg-mrf", "both"], default="both")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("loss", help="cross-entropy loss and gradient over containers")
    p.add_argument("--prob", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--out-grad", default=None)
    p.set_defaults(func=cmd_loss)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except InfeasibleAssignmentError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except InternalInvariantError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except InputFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except EdgeAlignError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

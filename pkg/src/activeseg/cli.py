"""Command-line entry point.

Exit codes: 0 success, 1 validation or load error, 2 gradient check above
tolerance (argparse usage errors also exit 2).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from functools import partial

import numpy as np

from . import __version__
from .dataset import (
    DatasetError, PredictionSet, WeightRaster, dump_json, load_manifest, load_positivity, load_predictions,
    load_pseudo_labels, load_weight_index, vocab_stats, write_manifest, write_predictions,
    write_pseudo_labels, write_weight_raster,
)
from .formats import FormatError, write_pgm
from .labeling import BBOX_MODES, FRAME_AGGS, MATCH_MODES, LabelingConfig, build_pseudo_labels
from .loss import LossConfig, action_guided_focal_loss, clip_loss, loss_gradient
from .masks import MaskError
from .metrics import EvalLabels, compute_report, write_csv
from .postprocess import DECISION_SOURCES, PostprocessConfig, apply_threshold
from .prompts import STYLES, build_prompt
from .synth import PREDICTION_MODES, SynthParams, SynthTruth, generate_clip, generate_predictions
from .weighting import HOBJ, NAR, NEG, POS, WeightConfig, weight_cases, weight_histogram

log = logging.getLogger("activeseg")

JOBS_ENV = "ACTIVESEG_JOBS"
# fields that never change results and are left out of the echoed config
_NOT_ECHOED = {"func", "jobs", "verbose"}


class UsageError(ValueError):
    pass


def _map(fn, items, jobs):
    """Ordered map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _run_config(args, **configs) -> dict:
    echo = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
    echo["version"] = __version__
    for name, cfg in configs.items():
        echo[name] = cfg.as_dict() if hasattr(cfg, "as_dict") else cfg
    return echo


def _emit(doc, out):
    if out:
        dump_json(out, doc)
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _labeling_config(args) -> LabelingConfig:
    return LabelingConfig(args.contact_threshold, args.bbox_mode, args.frame_agg, args.match_mode)


# --------------------------------------------------------------------------
# subcommands

def cmd_label(args) -> int:
    cfg = _labeling_config(args)
    clips = load_manifest(args.manifest)
    labels = _map(partial(build_pseudo_labels, config=cfg), clips, args.jobs)
    path = os.path.join(args.out, "pseudo_labels.json")
    write_pseudo_labels(path, labels, clips, extra={"run_config": _run_config(args, labeling=cfg)})
    n_pos = sum(sum(pl.cls.values()) for pl in labels)
    n_all = sum(len(pl.cls) for pl in labels)
    log.info("labeled %d objects (%d positive) -> %s", n_all, n_pos, path)
    return 0


_VIZ_LEVELS = np.zeros(6, dtype=np.uint8)
_VIZ_LEVELS[[NAR, HOBJ]] = 85
_VIZ_LEVELS[POS] = 170
_VIZ_LEVELS[NEG] = 255


def _clip_weights(clip, lcfg, wcfg):
    out = []
    for obj in clip.objects:
        for f in clip.frames:
            cases = weight_cases(clip, obj.id, f.t, lcfg)
            out.append((obj.id, f.t, cases, wcfg.case_values()[cases]))
    return out


def cmd_weights(args) -> int:
    lcfg = _labeling_config(args)
    wcfg = WeightConfig(args.lambda_pos, args.lambda_nar, args.lambda_hobj, args.lambda_neg)
    clips = load_manifest(args.manifest)
    results = _map(partial(_clip_weights, lcfg=lcfg, wcfg=wcfg), clips, args.jobs)
    entries = []
    for clip, rasters in zip(clips, results):
        objects = {}
        for oid, t, cases, values in rasters:
            rel = os.path.join(clip.clip_id, f"obj{oid:03d}_t{t:04d}.wmap")
            raster = WeightRaster(values)
            write_weight_raster(os.path.join(args.out, rel), raster)
            frame = {
                "t": t,
                "weights": rel,
                "histogram": {repr(k): v for k, v in weight_histogram(raster).items()},
            }
            if args.viz:
                vrel = os.path.join("viz", clip.clip_id, f"obj{oid:03d}_t{t:04d}.pgm")
                write_pgm(os.path.join(args.out, vrel), _VIZ_LEVELS[cases])
                frame["viz"] = vrel
            objects.setdefault(oid, []).append(frame)
        entries.append({
            "clip_id": clip.clip_id,
            "objects": [{"id": oid, "frames": fr} for oid, fr in sorted(objects.items())],
        })
    rc = _run_config(args, labeling=lcfg, weights=wcfg)
    dump_json(os.path.join(args.out, "weights.json"), {"run_config": rc, "clips": entries})
    if args.viz:
        legend = {
            "run_config": rc,
            "levels": [
                {"gray": 0, "weight": 1.0, "meaning": "outside the object, or in a box but off the hands"},
                {"gray": 85, "weight": [wcfg.lambda_nar, wcfg.lambda_hobj],
                 "meaning": "named object outside boxes / unnamed object on the hands"},
                {"gray": 170, "weight": wcfg.lambda_pos, "meaning": "named object inside a hand box"},
                {"gray": 255, "weight": wcfg.lambda_neg, "meaning": "unnamed object outside every box"},
            ],
        }
        dump_json(os.path.join(args.out, "viz", "legend.json"), legend)
    return 0


def cmd_loss(args) -> int:
    cfg = LossConfig(args.alpha, args.gamma, args.eps)
    clips = load_manifest(args.manifest)
    preds = {p.clip_id: p for p in load_predictions(args.pred, clips)}
    pseudo = load_pseudo_labels(args.pseudo)
    weights = load_weight_index(args.weights)
    clip_reports, all_values = [], []
    for pl in sorted(pseudo, key=lambda x: x.clip_id):
        clip = next((c for c in clips if c.clip_id == pl.clip_id), None)
        if clip is None:
            raise DatasetError(f"pseudo-labels reference unknown clip {pl.clip_id!r}")
        pred = preds.get(pl.clip_id) or PredictionSet(
            clip.clip_id, clip.height, clip.width, tuple(f.t for f in clip.frames))
        w = {(oid, t): r for (cid, oid, t), r in weights.items() if cid == pl.clip_id}
        res = clip_loss(pred, pl, w, cfg, gradient=args.grad)
        frames = []
        for (oid, t), v in sorted(res.per_frame.items()):
            row = {"object": oid, "t": t, "value": v}
            if args.grad:
                g = res.gradients[(oid, t)]
                row["grad_l2"] = float(np.sqrt(np.sum(g * g)))
                row["grad_max_abs"] = float(np.max(np.abs(g)))
            frames.append(row)
        all_values.extend(v for _, v in sorted(res.per_frame.items()))
        clip_reports.append({
            "clip_id": pl.clip_id,
            "aggregate": res.aggregate,
            "per_object": {str(k): v for k, v in sorted(res.per_object.items())},
            "frames": frames,
        })
    doc = {
        "run_config": _run_config(args, loss=cfg),
        "aggregate": float(np.mean(all_values)) if all_values else 0.0,
        "clips": clip_reports,
    }
    _emit(doc, args.out)
    return 0


def gradcheck(trials: int, seed: int, size: int = 8, step: float = 1e-5,
              config: LossConfig = LossConfig()) -> dict:
    """Compare the analytic gradient with central differences of the full loss."""
    rng = np.random.default_rng(seed)
    levels = np.array(WeightConfig().case_values()[1:5].tolist() + [1.0])
    worst = 0.0
    for _ in range(trials):
        p = rng.uniform(0.05, 0.95, (size, size))
        y = rng.random((size, size)) < 0.5
        w = rng.choice(levels, (size, size))
        g = loss_gradient(p, y, w, config)
        for idx in np.ndindex(p.shape):
            hi, lo = p.copy(), p.copy()
            hi[idx] += step
            lo[idx] -= step
            fd = (action_guided_focal_loss(hi, y, w, config).value
                  - action_guided_focal_loss(lo, y, w, config).value) / (2 * step)
            denom = max(abs(fd), abs(g[idx]), 1e-300)
            worst = max(worst, abs(fd - g[idx]) / denom)
    return {"trials": trials, "seed": seed, "size": size, "step": step, "max_rel_error": float(worst)}


def cmd_gradcheck(args) -> int:
    if args.trials < 1 or args.size < 1 or not args.step > 0 or not args.tol > 0:
        raise UsageError("--trials and --size must be >= 1; --step and --tol must be positive")
    res = gradcheck(args.trials, args.seed, args.size, args.step)
    res["tolerance"] = args.tol
    res["passed"] = bool(res["max_rel_error"] < args.tol)
    res["run_config"] = _run_config(args)
    _emit(res, args.out)
    return 0 if res["passed"] else 2


def cmd_postprocess(args) -> int:
    cfg = PostprocessConfig(args.theta, binarize_at=args.binarize_at)
    clips = load_manifest(args.manifest) if args.manifest else None
    preds = load_predictions(args.pred, clips)
    gated = [apply_threshold(p, cfg) for p in preds]
    write_predictions(args.out, gated, extra={"run_config": _run_config(args, postprocess=cfg)})
    return 0


def _read_doc(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError):
        return {}


def cmd_eval(args) -> int:
    cfg = PostprocessConfig(args.theta, args.decision_source, args.binarize_at)
    clips = load_manifest(args.manifest)
    preds = load_predictions(args.pred, clips)
    bits = load_positivity(args.labels)
    labels = []
    for clip in clips:
        if clip.clip_id not in bits:
            continue
        missing = set(clip.object_ids) - set(bits[clip.clip_id])
        if missing:
            raise DatasetError(f"labels for clip {clip.clip_id!r} lack objects {sorted(missing)}")
        labels.append(EvalLabels.from_clip(clip, bits[clip.clip_id]))
    unknown = set(bits) - {c.clip_id for c in clips}
    if unknown:
        raise DatasetError(f"labels reference unknown clips {sorted(unknown)}")
    gated = [apply_threshold(p, cfg) for p in preds]
    report = compute_report(gated, labels, cfg)
    doc = report.as_dict()
    label_doc = _read_doc(args.labels)
    doc["run_config"] = _run_config(args, postprocess=cfg)
    doc["provenance"] = {
        "labeling_config": label_doc.get("labeling_config"),
        "labels_run_config": label_doc.get("run_config"),
        "predictions_run_config": _read_doc(args.pred).get("run_config"),
    }
    dump_json(args.out, doc)
    write_csv(os.path.splitext(args.out)[0] + ".csv", report)
    for k, v in report.metrics().items():
        log.info("%s = %.4f", k, v)
    return 0


def cmd_prompt(args) -> int:
    if args.manifest:
        if args.object:
            raise UsageError("--object and --manifest are mutually exclusive")
        for clip in load_manifest(args.manifest):
            for obj in clip.objects:
                text = build_prompt(obj.name, clip.narration, args.style)
                print(f"{clip.clip_id}\t{obj.id}\t{text}")
        return 0
    if not args.object:
        raise UsageError("give --object (with --narration) or --manifest")
    print(build_prompt(args.object, args.narration, args.style))
    return 0


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 64x64, got {text!r}") from None


def _parse_range(text: str) -> tuple[int, int]:
    try:
        if "-" in text:
            lo, hi = text.split("-")
            return int(lo), int(hi)
        return int(text), int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like 3-6, got {text!r}") from None


def _parse_pred_mode(text: str) -> tuple[str, float]:
    mode, _, sigma = text.partition(":")
    if mode not in PREDICTION_MODES:
        raise argparse.ArgumentTypeError(f"prediction mode must be one of {PREDICTION_MODES}")
    try:
        return mode, float(sigma) if sigma else 0.1
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad noise level in {text!r}") from None


def cmd_synth(args) -> int:
    params = SynthParams(
        seed=args.seed, clips=args.clips, frames_per_clip=args.frames,
        height=args.size[0], width=args.size[1], objects_per_clip=args.objects,
    )
    pairs = _map(partial(generate_clip, params), range(params.clips), args.jobs)
    clips = [c for c, _ in pairs]
    truth = SynthTruth([t for _, t in pairs])
    rc = _run_config(args, synth=params)
    write_manifest(os.path.join(args.out, "manifest.json"), clips, extra={"run_config": rc})
    doc = truth.as_dict()
    doc["run_config"] = rc
    dump_json(os.path.join(args.out, "truth.json"), doc)
    for mode, sigma in args.predictions or []:
        preds = generate_predictions(clips, truth, mode, sigma, seed=args.seed)
        write_predictions(os.path.join(args.out, f"predictions_{mode}.json"), preds,
                          extra={"run_config": rc})
    log.info("wrote %d clips to %s", len(clips), args.out)
    return 0


def cmd_stats(args) -> int:
    train = load_manifest(args.train)
    val = load_manifest(args.val)
    doc = asdict(vocab_stats(train, val))
    doc["run_config"] = _run_config(args)
    _emit(doc, args.out)
    return 0


# --------------------------------------------------------------------------
# parser

def _add_labeling(p):
    p.add_argument("--contact-threshold", type=float, default=0.5)
    p.add_argument("--bbox-mode", choices=BBOX_MODES, default="per-component")
    p.add_argument("--frame-agg", choices=FRAME_AGGS, default="any")
    p.add_argument("--match-mode", choices=MATCH_MODES, default="all-tokens")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=int(os.environ.get(JOBS_ENV, "1")),
                        help=f"worker processes (default ${JOBS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", parents=[common], help="generate pseudo-labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_labeling(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("weights", parents=[common], help="generate loss weight rasters")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-pos", type=float, default=5.0)
    p.add_argument("--lambda-nar", type=float, default=2.0)
    p.add_argument("--lambda-hobj", type=float, default=2.0)
    p.add_argument("--lambda-neg", type=float, default=5.0)
    p.add_argument("--viz", action="store_true", help="also write gray-level PGMs and a legend")
    _add_labeling(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("loss", parents=[common], help="evaluate the weighted focal loss")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--pseudo", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--grad", action="store_true")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=1e-7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("postprocess", parents=[common], help="gate predictions by score")
    p.add_argument("--pred", required=True)
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--binarize-at", type=float, default=0.5)
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", parents=[common], help="score predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--decision-source", choices=DECISION_SOURCES, default="auto")
    p.add_argument("--binarize-at", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("prompt", parents=[common], help="build text prompts")
    p.add_argument("--object")
    p.add_argument("--narration")
    p.add_argument("--manifest")
    p.add_argument("--style", choices=STYLES, default="sentence-action")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic fixtures")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--clips", type=int, default=8)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--size", type=_parse_size, default=(64, 64))
    p.add_argument("--objects", type=_parse_range, default=(3, 6))
    p.add_argument("--predictions", type=_parse_pred_mode, action="append",
                   help="also write predictions_<mode>.json; perfect|empty|leaky|noisy[:sigma]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", parents=[common], help="vocabulary statistics")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (DatasetError, FormatError, MaskError, UsageError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"activeseg {args.command}: error: {msg}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())

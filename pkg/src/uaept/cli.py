"""Command-line entry point: ``uaept [global flags] <command> ...``.

Exit codes: 0 on success, 2 for unreadable or malformed input, 3 when the
input parses but breaks an operation's contract.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ContractError, FormatError
from .grid import bbox_from_extreme_points, box_mask, extract_extreme_points
from .losses import box_alignment_loss, pseudo_label_loss, total_loss, usc_loss
from .metrics import aggregate, dice, iou, make_folds
from .phantom import SpeckleParams, generate_phantom, initial_pseudo_from_box, random_shape_params
from .predictor import StackPredictor, SyntheticPredictor
from .refinement import RefineConfig, Sample, run_refinement_loop, uncertainty_cost_map
from .tracing import contour_pixels, trace_contour

log = logging.getLogger("uaept")

EXIT_OK, EXIT_INPUT, EXIT_CONTRACT = 0, 2, 3

# gray levels for successive refresh contours in overlays; ground truth is 255
OVERLAY_LEVELS = (90, 130, 170, 210, 235)


def load_config(path, seed=None) -> tuple[RefineConfig, dict]:
    """Return the refinement config and the synthetic predictor settings."""
    raw = dict(io.load_json(path)) if path else {}
    predictor = raw.pop("predictor", {})
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = RefineConfig.from_dict(raw)
    except TypeError as exc:
        raise FormatError(f"bad config: {exc}") from exc
    return cfg, predictor


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _samples_from_manifest(path) -> tuple[Path, list[dict]]:
    manifest = io.load_json(path)
    if not isinstance(manifest, dict) or not isinstance(manifest.get("samples"), list):
        raise FormatError(f"{path}: manifest needs a 'samples' list")
    return Path(path).resolve().parent, manifest["samples"]


def overlay_image(image, contours) -> np.ndarray:
    """Gray image in [0, 160] with each ``(mask, level)`` contour drawn on top."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = img.min(), img.max()
    base = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    out = np.round(base * 160).astype(np.uint8)
    for mask, level in contours:
        out[contour_pixels(mask)] = level
    return out


def cmd_extract_points(args) -> int:
    mask = io.read_mask(args.mask)
    if args.largest_component:
        from .tracing import largest_component

        mask = largest_component(mask)
    ep = extract_extreme_points(mask)
    io.write_points(_out(args) / args.name, ep)
    print(json.dumps(ep.to_json()))
    return EXIT_OK


def cmd_costmap(args) -> int:
    cfg, _ = load_config(args.config, args.seed)
    stack = io.read_f32g(args.stack)
    if stack.ndim != 3:
        raise FormatError(f"{args.stack}: expected a (T, H, W) stack")
    cost = uncertainty_cost_map(stack, cfg.alpha, cfg.eps_cost)
    io.write_f32g(_out(args) / args.name, cost.grid)
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg, _ = load_config(args.config, args.seed)
    cost = io.read_f32g(args.cost)
    if cost.ndim != 2:
        raise FormatError(f"{args.cost}: expected a 2-D cost grid")
    ep = io.read_points(args.points)
    res = trace_contour(cost.astype(np.float64), ep, cfg.margin, cfg.geometric)
    out = _out(args)
    io.write_mask(out / args.name, res.mask)
    if args.overlay:
        path_px = np.zeros_like(res.mask)
        for p in res.paths:
            for q in p.points:
                path_px[q] = True
        img = overlay_image(-np.log(cost.astype(np.float64)), [])
        img[path_px] = 255
        io.write_pgm(out / "overlay.pgm", img)
    return EXIT_OK


def cmd_losses(args) -> int:
    cfg, _ = load_config(args.config, args.seed)
    p1 = io.read_f32g(args.p1).astype(np.float64)
    p2 = io.read_f32g(args.p2).astype(np.float64)
    pseudo = io.read_mask(args.pseudo)
    ep = io.read_points(args.points)
    gt_box = box_mask(bbox_from_extreme_points(ep), *pseudo.shape)
    la = box_alignment_loss(p1, p2, gt_box).value
    lu = usc_loss(p1, p2, cfg.eps_entropy, cfg.usc_mode).value
    lp = pseudo_label_loss(p1, p2, pseudo).value
    report = {"boxalign": la, "usc": lu, "pl": lp, "total": total_loss(la, lu, lp, cfg.weights)}
    io.dump_json(_out(args) / args.name, report)
    print(json.dumps(io.round_floats(report)))
    return EXIT_OK


def _load_refine_samples(manifest_path, pred_cfg):
    base, entries = _samples_from_manifest(manifest_path)
    samples, predictors = [], []
    for i, e in enumerate(entries):
        try:
            sid = str(e.get("id", i))
            image = io.read_f32g(_resolve(base, e["image"])).astype(np.float64)
            ep = io.read_points(_resolve(base, e["points"]))
            pseudo = io.read_mask(_resolve(base, e["pseudo"]))
        except KeyError as exc:
            raise FormatError(f"manifest sample {i} lacks {exc}") from exc
        gt = io.read_mask(_resolve(base, e["gt"])) if e.get("gt") else None
        if e.get("stack"):
            predictors.append(StackPredictor(io.read_f32g(_resolve(base, e["stack"]))))
        elif gt is not None:
            predictors.append(
                SyntheticPredictor(
                    gt,
                    pred_cfg.get("sharpness", 4.0),
                    pred_cfg.get("noise_sigma", 0.5),
                    pred_cfg.get("sharpness_ramp", 0.0),
                )
            )
        else:
            raise FormatError(f"manifest sample {sid}: need a 'stack' file or a 'gt' mask")
        samples.append(Sample(image, ep, pseudo, gt, sid))
    return samples, predictors


def cmd_refine(args) -> int:
    cfg, pred_cfg = load_config(args.config, args.seed)
    samples, predictors = _load_refine_samples(args.manifest, pred_cfg)
    result = run_refinement_loop(samples, predictors, cfg)
    out = _out(args)
    for (i, epoch), label in sorted(result.labels.items()):
        if epoch > 0:
            io.write_mask(out / f"{samples[i].id}_e{epoch}.pgm", label)
    doc = {"config": cfg.to_dict(), **result.to_json()}
    io.dump_json(out / "refinement_log.json", doc)

    final = result.final_labels()
    with_gt = [(s, m) for s, m in zip(samples, final) if s.gt is not None]
    if with_gt:
        folds = make_folds([s.id for s, _ in with_gt], min(5, len(with_gt)), cfg.seed) if len(with_gt) >= 2 else None
        eval_manifest = {
            "samples": [
                {
                    "id": s.id,
                    "prediction": f"{s.id}_final.pgm",
                    "gt": f"{s.id}_gt.pgm",
                    "fold": folds.fold_of(s.id) if folds else 0,
                }
                for s, _ in with_gt
            ]
        }
        for s, m in with_gt:
            io.write_mask(out / f"{s.id}_final.pgm", m)
            io.write_mask(out / f"{s.id}_gt.pgm", s.gt)
        io.dump_json(out / "eval_manifest.json", eval_manifest)

    if args.overlay:
        for i, s in enumerate(samples):
            epochs = sorted(e for (j, e) in result.labels if j == i)
            contours = [(result.labels[(i, e)], OVERLAY_LEVELS[k % len(OVERLAY_LEVELS)]) for k, e in enumerate(epochs)]
            if s.gt is not None:
                contours.append((s.gt, 255))
            io.write_pgm(out / f"{s.id}_overlay.pgm", overlay_image(s.image, contours))
    table = result.iou_table()
    for epoch in sorted(table):
        log.info("epoch %d: median pseudo-label IoU %.4f", epoch, float(np.median(table[epoch])))
    return EXIT_OK


def cmd_eval(args) -> int:
    base, entries = _samples_from_manifest(args.manifest)
    per_image = []
    for i, e in enumerate(entries):
        try:
            pred = io.read_mask(_resolve(base, e["prediction"]))
            gt = io.read_mask(_resolve(base, e["gt"]))
        except KeyError as exc:
            raise FormatError(f"manifest sample {i} lacks {exc}") from exc
        per_image.append((str(e.get("id", i)), e.get("fold"), iou(pred, gt), dice(pred, gt)))
    if any(f is None for _, f, _, _ in per_image):
        folds = make_folds([pid for pid, *_ in per_image], args.folds, args.seed or 0)
        per_image = [(pid, folds.fold_of(pid), a, b) for pid, _, a, b in per_image]
    grouped: dict = {}
    for pid, fold, a, b in per_image:
        grouped.setdefault(int(fold), []).append({"id": pid, "iou": a, "dice": b})
    report = aggregate(grouped.items())
    io.dump_json(_out(args) / args.name, report.to_json())
    print(json.dumps(io.round_floats(report.overall)))
    return EXIT_OK


def cmd_phantom(args) -> int:
    out = _out(args)
    seed = args.seed or 0
    h, w = args.size
    entries = []
    for k in range(args.count):
        shape = random_shape_params([seed, k], h, w, softness=args.softness)
        ph = generate_phantom(h, w, shape, SpeckleParams(args.speckle), seed=[seed, k])
        sid = f"ph{k:03d}"
        io.write_f32g(out / f"{sid}_image.f32g", ph.image)
        io.write_mask(out / f"{sid}_gt.pgm", ph.gt)
        io.write_points(out / f"{sid}_points.json", ph.ep)
        io.write_mask(out / f"{sid}_init.pgm", initial_pseudo_from_box(ph.ep, h, w, args.init))
        entries.append(
            {
                "id": sid,
                "image": f"{sid}_image.f32g",
                "points": f"{sid}_points.json",
                "pseudo": f"{sid}_init.pgm",
                "gt": f"{sid}_gt.pgm",
            }
        )
    io.dump_json(out / "manifest.json", {"samples": entries})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uaept", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="RefineConfig JSON (optional 'predictor' section)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-points", help="extreme points of a PGM mask")
    p.add_argument("mask")
    p.add_argument("--name", default="points.json")
    p.add_argument("--largest-component", action="store_true")
    p.set_defaults(func=cmd_extract_points)

    p = sub.add_parser("costmap", help="cost map from an MC feature stack")
    p.add_argument("stack")
    p.add_argument("--name", default="cost.f32g")
    p.set_defaults(func=cmd_costmap)

    p = sub.add_parser("trace", help="trace a pseudo label on a cost map")
    p.add_argument("cost")
    p.add_argument("points")
    p.add_argument("--name", default="pseudo.pgm")
    p.add_argument("--overlay", action="store_true", help="also write overlay.pgm")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("losses", help="loss report for two probability maps")
    p.add_argument("p1")
    p.add_argument("p2")
    p.add_argument("pseudo")
    p.add_argument("points")
    p.add_argument("--name", default="losses.json")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("refine", help="run the iterative refinement loop")
    p.add_argument("manifest")
    p.add_argument("--overlay", action="store_true", help="write per-sample contour overlays")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="IoU/Dice with fold statistics")
    p.add_argument("manifest")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--name", default="metrics.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phantom", help="generate synthetic phantoms and a manifest")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", type=int, nargs=2, default=(64, 64), metavar=("H", "W"))
    p.add_argument("--speckle", type=float, default=0.05, help="speckle variance")
    p.add_argument("--softness", type=float, default=0.0, help="edge blur in pixels")
    p.add_argument("--init", choices=("box-fill", "inscribed-ellipse"), default="box-fill")
    p.set_defaults(func=cmd_phantom)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"uaept: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"uaept: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

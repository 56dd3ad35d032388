"""Pseudo-label evolution on phantoms: per-refresh IoU table plus overlays.

    python3 scripts/refinement_evolution.py --out runs/evolution --phantoms 10 --seeds 5
"""

import argparse
from pathlib import Path

import numpy as np

from uaept import io
from uaept.cli import OVERLAY_LEVELS, overlay_image
from uaept.phantom import SpeckleParams, generate_phantom, initial_pseudo_from_box, random_shape_params
from uaept.predictor import SyntheticPredictor
from uaept.refinement import RefineConfig, Sample, run_refinement_loop


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/evolution")
    ap.add_argument("--phantoms", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--T", type=int, default=20)
    ap.add_argument("--sharpness", type=float, default=0.25)
    ap.add_argument("--ramp", type=float, default=0.5)
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--speckle", type=float, default=0.05)
    ap.add_argument("--init", choices=("box-fill", "inscribed-ellipse"), default="box-fill")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    table: dict[int, list[float]] = {}
    for seed in range(args.seeds):
        samples, preds = [], []
        for k in range(args.phantoms):
            ph = generate_phantom(64, 64, random_shape_params([seed, k]), SpeckleParams(args.speckle), seed=[seed, k])
            init = initial_pseudo_from_box(ph.ep, 64, 64, args.init)
            samples.append(Sample(ph.image, ph.ep, init, ph.gt, f"s{seed}_p{k}"))
            preds.append(SyntheticPredictor(ph.gt, args.sharpness, args.noise, args.ramp))
        cfg = RefineConfig(T=args.T, K=args.K, max_epochs=args.epochs, seed=seed)
        res = run_refinement_loop(samples, preds, cfg)
        for epoch, vals in res.iou_table().items():
            table.setdefault(epoch, []).extend(vals)
        if seed == 0:
            for i, s in enumerate(samples):
                epochs = sorted(e for (j, e) in res.labels if j == i)
                contours = [(res.labels[(i, e)], OVERLAY_LEVELS[n % len(OVERLAY_LEVELS)]) for n, e in enumerate(epochs)]
                io.write_pgm(out / f"{s.id}_overlay.pgm", overlay_image(s.image, contours + [(s.gt, 255)]))

    rows = []
    print(f"{'epoch':>5}  {'median':>7}  {'q25':>7}  {'q75':>7}  n")
    for epoch in sorted(table):
        v = np.asarray(table[epoch])
        q25, med, q75 = np.percentile(v, [25, 50, 75])
        rows.append({"epoch": epoch, "median": med, "q25": q25, "q75": q75, "n": len(v)})
        print(f"{epoch:5d}  {med:7.4f}  {q25:7.4f}  {q75:7.4f}  {len(v)}")
    io.dump_json(out / "iou_table.json", {"args": vars(args), "rows": rows})


if __name__ == "__main__":
    main()

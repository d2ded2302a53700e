"""Sweep the (p1, p2) augmentation grid and summarize accuracy per cell.

Runs pretrain + probe for every (p1, p2, seed) combination through the
sweep pipeline (so GIPLAB_THREADS applies), then prints a per-cell mean
accuracy matrix. The raw rows land in sweep.csv under --out.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from giplab.augment import AugKind, AugSpec
from giplab.config import TrainConfig
from giplab.objectives import ObjectiveConfig, ObjectiveKind
from giplab.pipeline import run_sweep


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", default="synth-2M")
    parser.add_argument(
        "--grid",
        type=float,
        nargs="+",
        default=[0.05, 0.5, 0.9],
        help="p values; the sweep covers their full cartesian square",
    )
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds (0..N-1)")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--folds", type=int, default=10)
    parser.add_argument("--hidden-dim", type=int, default=64)
    parser.add_argument("--num-layers", type=int, default=3)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--out", default="sweep_out", help="output directory")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    base = TrainConfig(
        objective=ObjectiveConfig(ObjectiveKind.GRACE),
        view1=AugSpec(AugKind.GIP, 0.5),
        view2=AugSpec(AugKind.GIP, 0.5),
        hidden_dim=args.hidden_dim,
        num_layers=args.num_layers,
        epochs=args.epochs,
        batch_size=args.batch_size,
        dataset=args.dataset,
    )
    t0 = time.perf_counter()
    cells = run_sweep(
        base, args.grid, list(range(args.seeds)), folds=args.folds, out_dir=args.out
    )
    failed = sum(1 for c in cells if c.status != "ok")
    by_cell: dict[tuple[float, float], list[float]] = {}
    for cell in cells:
        if cell.status == "ok":
            by_cell.setdefault((cell.p1, cell.p2), []).append(cell.accuracy)
    print("p1\\p2  " + "  ".join(f"{p:>7g}" for p in args.grid))
    for p1 in args.grid:
        means = [
            f"{np.mean(by_cell[(p1, p2)]):7.4f}" if (p1, p2) in by_cell else "   fail"
            for p2 in args.grid
        ]
        print(f"{p1:>5g}  " + "  ".join(means))
    print(
        f"cells: {len(cells)} ({failed} failed); "
        f"total {(time.perf_counter() - t0) / 60:.1f} min; rows in {args.out}/sweep.csv"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())

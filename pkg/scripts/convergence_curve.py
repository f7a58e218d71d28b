"""Average relative-change curves of I and R over the inner iterations.

Runs the decomposition with default parameters on every image in a folder,
takes the first stage's trace and plots the per-iteration mean of
||I_k+1 - I_k|| / ||I_k|| and the same for R.

    python scripts/convergence_curve.py tests/data/corpus --out convergence.png
"""
import argparse
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from star_retinex.engine import StarParams, star_decompose
from star_retinex.image import read_image, rgb_to_hsv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("folder", type=Path)
    ap.add_argument("--out", type=Path, default=Path("convergence.png"))
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args()

    # eps_conv tiny so every image runs the full K iterations
    params = StarParams(eps_conv=1e-12, inner_iters=args.iters, outer_iters=1)
    curves_i, curves_r = [], []
    for path in sorted(args.folder.glob("*.png")):
        dec = star_decompose(rgb_to_hsv(read_image(path)).value, params)
        first = [r for r in dec.trace if r.outer == 0]
        curves_i.append([r.rel_change_I for r in first])
        curves_r.append([r.rel_change_R for r in first])
        print(f"{path.stem}: " + " ".join(f"{r.rel_change_I:.4f}" for r in first[:10]))

    mean_i = np.mean(curves_i, axis=0)
    mean_r = np.mean(curves_r, axis=0)
    ks = np.arange(1, len(mean_i) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(ks, mean_i, "o-", label="illumination")
    ax.semilogy(ks, mean_r, "s-", label="reflectance")
    ax.axhline(1e-2, color="gray", ls="--", lw=0.8)
    ax.set_xlabel("inner iteration k")
    ax.set_ylabel("relative change")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    first_below = int(np.argmax(np.minimum(mean_i, mean_r) < 1e-2)) + 1
    print(f"mean curve below 0.01 at k={first_below}; wrote {args.out}")


if __name__ == "__main__":
    main()

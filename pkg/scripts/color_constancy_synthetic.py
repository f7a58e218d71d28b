"""Mean angular error of the illuminant estimate on tinted synthetic scenes.

Compares the decomposition-based estimate against the do-nothing (neutral)
estimate and gray-world, for illuminants 5-25 degrees away from neutral.
The scenes are gray on average by construction, so gray-world is exact on
them; it is printed as a sanity floor, not as a competitor.

    python scripts/color_constancy_synthetic.py --scenes 50
"""
import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from synth import illuminant_at_angle, neutral_scene, tint  # noqa: E402

from star_retinex.engine import angular_error, estimate_illuminant  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", type=int, default=50)
    ap.add_argument("--seed", type=int, default=8)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    errs = {"star": [], "gray-world": [], "neutral": []}
    for _ in range(args.scenes):
        truth = illuminant_at_angle(rng, rng.uniform(5, 25))
        img = tint(neutral_scene(rng), truth)
        errs["star"].append(angular_error(estimate_illuminant(img), truth))
        errs["gray-world"].append(angular_error(img.mean(axis=(0, 1)), truth))
        errs["neutral"].append(angular_error(np.ones(3), truth))
    for name, e in errs.items():
        print(f"{name:>10}: mean {np.mean(e):6.2f} deg  median {np.median(e):6.2f} deg")


if __name__ == "__main__":
    main()

"""Build the bundled low-light test corpus from scikit-image sample photos.

Each photo is downscaled (longest side <= --max-side), then darkened with
``dark = scale * x**gamma`` and written as an 8-bit PNG.

    python scripts/make_corpus.py --out tests/data/corpus
"""
import argparse
from pathlib import Path

import numpy as np
import skimage.data
from PIL import Image
from skimage.transform import resize

PHOTOS = ["astronaut", "chelsea", "coffee", "rocket", "immunohistochemistry", "camera"]
# Near-black star field: slow to converge, kept apart from the main corpus.
STRESS = ["hubble_deep_field"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("tests/data/corpus"))
    ap.add_argument("--stress-out", type=Path, default=Path("tests/data/stress"))
    ap.add_argument("--max-side", type=int, default=192)
    ap.add_argument("--scale", type=float, default=0.35)
    ap.add_argument("--gamma", type=float, default=1.2)
    args = ap.parse_args()
    for name in PHOTOS:
        write_dark(name, args.out, args)
    for name in STRESS:
        write_dark(name, args.stress_out, args)


def write_dark(name, out_dir, args):
    out_dir.mkdir(parents=True, exist_ok=True)
    img = getattr(skimage.data, name)()
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=2)
    h, w = img.shape[:2]
    k = args.max_side / max(h, w)
    small = resize(img, (round(h * k), round(w * k)), anti_aliasing=True)
    dark = args.scale * np.power(np.clip(small, 0, 1), args.gamma)
    out = np.clip(np.rint(dark * 255), 0, 255).astype(np.uint8)
    Image.fromarray(out).save(out_dir / f"{name}.png")
    print(f"{name}: {out.shape[1]}x{out.shape[0]} mean={out.mean() / 255:.3f}")


if __name__ == "__main__":
    main()

"""Command-line front end.

    star decompose IMG... -o OUT     illumination / reflectance images
    star enhance   IMG... -o OUT     low-light enhancement
    star correct   IMG... -o OUT     illuminant estimate + von Kries correction
    star weights   IMG... -o OUT     initial structure / texture maps

Exit codes: 0 success, 2 input or usage error, 3 computation error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from .engine import StarParams
from .errors import InvalidInputError, StarError
from .filters import WeightKind, WindowSpec
from .image import (hsv_to_rgb, read_image, replace_value_channel, rgb_to_hsv, save_raw_grid,
                    write_image)
from .solver import Method, SolverSettings

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE = 0, 2, 3
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

log = logging.getLogger("star_retinex")
_print_lock = threading.Lock()


@dataclass
class CliConfig:
    subcommand: str
    inputs: list[Path]
    out_dir: Path
    params: StarParams = field(default_factory=StarParams)
    gamma_e: float = 2.2
    dump_raw: bool = False
    dump_trace: bool = False
    truth: tuple[float, float, float] | None = None


class InputError(Exception):
    pass


def _say(*lines):
    with _print_lock:
        for line in lines:
            print(line, flush=True)


def _truth_vector(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed truth vector {text!r}") from None
    if len(vals) != 3 or not all(np.isfinite(vals)) or not any(vals):
        raise argparse.ArgumentTypeError(f"truth must be 3 finite values, not all zero: {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    d = StarParams()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("inputs", nargs="+", type=Path, help="image files or directories")
    common.add_argument("-o", "--out-dir", type=Path, default=Path("out"))
    common.add_argument("--alpha", type=float, default=d.alpha)
    common.add_argument("--beta", type=float, default=d.beta)
    common.add_argument("--gamma-s", type=float, default=d.gamma_s)
    common.add_argument("--gamma-t", type=float, default=d.gamma_t)
    common.add_argument("--inner-iters", type=int, default=d.inner_iters, help="K")
    common.add_argument("--outer-iters", type=int, default=d.outer_iters, help="L")
    common.add_argument("--eps-conv", type=float, default=d.eps_conv)
    common.add_argument("--eps-weight", type=float, default=d.eps_weight)
    common.add_argument("--eps-div", type=float, default=d.eps_div)
    common.add_argument("--window-radius", type=int, default=d.window.radius)
    common.add_argument("--weight-kind", choices=[k.value for k in WeightKind],
                        default=d.weight_kind.value)
    common.add_argument("--solver", choices=[m.value for m in Method], default=d.solver.method.value)
    common.add_argument("--cg-tol", type=float, default=d.solver.cg_tol)
    common.add_argument("--cg-max-iters", type=int, default=d.solver.cg_max_iters)
    common.add_argument("--dump-raw", action="store_true", help="also write .starf32 grids")
    common.add_argument("--dump-trace", action="store_true", help="also write convergence CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="star", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("decompose", parents=[common], help="write illumination and reflectance")
    enh = sub.add_parser("enhance", parents=[common], help="low-light enhancement")
    enh.add_argument("--gamma-e", type=float, default=2.2)
    cor = sub.add_parser("correct", parents=[common], help="color correction")
    cor.add_argument("--truth", type=_truth_vector, default=None,
                     help="ground-truth illuminant 'r,g,b' for the angular error")
    sub.add_parser("weights", parents=[common], help="dump initial structure/texture maps")
    return p


def config_from_args(ns: argparse.Namespace) -> CliConfig:
    params = StarParams(
        alpha=ns.alpha, beta=ns.beta, gamma_s=ns.gamma_s, gamma_t=ns.gamma_t,
        eps_div=ns.eps_div, eps_weight=ns.eps_weight, eps_conv=ns.eps_conv,
        inner_iters=ns.inner_iters, outer_iters=ns.outer_iters,
        window=WindowSpec(ns.window_radius), weight_kind=WeightKind(ns.weight_kind),
        solver=SolverSettings(method=Method(ns.solver), cg_tol=ns.cg_tol,
                              cg_max_iters=ns.cg_max_iters),
    )
    return CliConfig(
        subcommand=ns.subcommand, inputs=list(ns.inputs), out_dir=ns.out_dir, params=params,
        gamma_e=getattr(ns, "gamma_e", 2.2), dump_raw=ns.dump_raw, dump_trace=ns.dump_trace,
        truth=getattr(ns, "truth", None),
    )


def expand_inputs(paths) -> list[Path]:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files += sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES)
        else:
            files.append(p)
    return files


def _load(path: Path) -> np.ndarray:
    try:
        return read_image(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _with_value(hsv, v) -> np.ndarray:
    return np.clip(hsv_to_rgb(replace_value_channel(hsv, v)), 0.0, 1.0)


def _write_trace(path: Path, dec) -> None:
    with open(path, "w", newline="") as fh:
        engine.write_trace_csv(dec, fh)


def run_decompose(cfg: CliConfig, path: Path) -> None:
    img = _load(path)
    stem = path.stem
    hsv = rgb_to_hsv(img)
    dec = engine.star_decompose(hsv.value, cfg.params)
    write_image(cfg.out_dir / f"{stem}_I.png", _with_value(hsv, dec.illumination))
    write_image(cfg.out_dir / f"{stem}_R.png", _with_value(hsv, dec.reflectance))
    if cfg.dump_raw:
        save_raw_grid(cfg.out_dir / f"{stem}_I.starf32", dec.illumination)
        save_raw_grid(cfg.out_dir / f"{stem}_R.starf32", dec.reflectance)
    if cfg.dump_trace:
        _write_trace(cfg.out_dir / f"{stem}_trace.csv", dec)
    _say(f"RESULT {stem} iters={dec.iterations} objective={dec.final_objective:.10g}")


def run_enhance(cfg: CliConfig, path: Path) -> None:
    img = _load(path)
    stem = path.stem
    out, dec = engine.enhance_lowlight(img, cfg.params, cfg.gamma_e, return_decomposition=True)
    write_image(cfg.out_dir / f"{stem}_enhanced.png", out)
    if cfg.dump_raw:
        save_raw_grid(cfg.out_dir / f"{stem}_I.starf32", dec.illumination)
        save_raw_grid(cfg.out_dir / f"{stem}_R.starf32", dec.reflectance)
    if cfg.dump_trace:
        _write_trace(cfg.out_dir / f"{stem}_trace.csv", dec)
    _say(f"RESULT {stem} iters={dec.iterations} objective={dec.final_objective:.10g}")


def run_correct(cfg: CliConfig, path: Path) -> None:
    img = _load(path)
    stem = path.stem
    est, decs = engine.estimate_illuminant(img, cfg.params, return_decompositions=True)
    write_image(cfg.out_dir / f"{stem}_corrected.png", engine.color_correct(img, est))
    lines = [f"illuminant {stem} {est[0]:.3f} {est[1]:.3f} {est[2]:.3f}"]
    if cfg.truth is not None:
        lines.append(f"angular_error {stem} {engine.angular_error(est, cfg.truth):.3f}")
    for ch, dec in zip("rgb", decs):
        if cfg.dump_raw:
            save_raw_grid(cfg.out_dir / f"{stem}_I_{ch}.starf32", dec.illumination)
            save_raw_grid(cfg.out_dir / f"{stem}_R_{ch}.starf32", dec.reflectance)
        if cfg.dump_trace:
            _write_trace(cfg.out_dir / f"{stem}_trace_{ch}.csv", dec)
    iters = sum(d.iterations for d in decs)
    total = sum(d.final_objective for d in decs)
    lines.append(f"RESULT {stem} iters={iters} objective={total:.10g}")
    _say(*lines)


def run_weights(cfg: CliConfig, path: Path) -> None:
    img = _load(path)
    stem = path.stem
    v = rgb_to_hsv(img).value
    start = np.sqrt(v)
    (sx, sy), (tx, ty) = engine.stage_weights(start, start, cfg.params)
    top = np.log(1.0 / cfg.params.eps_weight)
    for name, w in (("Sx", sx), ("Sy", sy), ("Tx", tx), ("Ty", ty)):
        # log scale: weight 1 -> black, 1/eps_weight -> white
        write_image(cfg.out_dir / f"{stem}_{name}.png", np.clip(np.log(w) / top, 0.0, 1.0))
        if cfg.dump_raw:
            save_raw_grid(cfg.out_dir / f"{stem}_{name}.starf32", w)
    _say(f"RESULT {stem} iters=0 objective=nan")


RUNNERS = {
    "decompose": run_decompose,
    "enhance": run_enhance,
    "correct": run_correct,
    "weights": run_weights,
}


def _run_one(cfg: CliConfig, path: Path) -> int:
    _say(f"[star] {cfg.subcommand} {path}")
    try:
        RUNNERS[cfg.subcommand](cfg, path)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StarError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def thread_count(n_jobs: int) -> int:
    raw = os.environ.get("STAR_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, min(n, n_jobs))


def run(cfg: CliConfig) -> int:
    files = expand_inputs(cfg.inputs)
    if not files:
        print("error: no input images found", file=sys.stderr)
        return EXIT_INPUT
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    workers = thread_count(len(files))
    if workers == 1:
        codes = [_run_one(cfg, f) for f in files]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(lambda f: _run_one(cfg, f), files))
    return max(codes)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(ns)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

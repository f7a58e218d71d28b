"""Structure/texture aware Retinex decomposition and its applications.

The observed grid O is split as O ~= I * R by minimizing

    ||O - I*R||^2 + alpha * ||S (.) grad I||^2 + beta * ||T (.) grad R||^2

with S (structure map, from I) and T (texture map, from R) held fixed while
I and R are updated alternately by exact quadratic solves. The maps are then
recomputed from the current estimates and the alternation restarts.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidIlluminantError, InvalidInputError, SolverError
from .filters import WeightKind, WindowSpec, build_weight
from .image import as_grid, as_rgb, hsv_to_rgb, replace_value_channel, rgb_to_hsv
from .solver import DiagonalWeights, GradientOperator, SolverSettings, solve_subproblem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StarParams:
    alpha: float = 0.001
    beta: float = 0.0001
    gamma_s: float = 1.5
    gamma_t: float = 0.5
    eps_div: float = 1e-8
    eps_weight: float = 1e-4
    eps_conv: float = 1e-2
    inner_iters: int = 20    # K
    outer_iters: int = 4     # L
    window: WindowSpec = WindowSpec(1)
    weight_kind: WeightKind = WeightKind.EMLV
    solver: SolverSettings = SolverSettings()

    def __post_init__(self):
        object.__setattr__(self, "weight_kind", WeightKind(self.weight_kind))
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidInputError("alpha and beta must be > 0")
        if self.inner_iters < 1 or self.outer_iters < 1:
            raise InvalidInputError("inner_iters and outer_iters must be >= 1")
        if not (self.eps_conv > 0 and self.eps_weight > 0 and self.eps_div >= 0):
            raise InvalidInputError("eps_conv and eps_weight must be > 0, eps_div >= 0")

    @classmethod
    def etv_ablation(cls, **overrides) -> "StarParams":
        """Plain ETV weighting with unit exponents on both maps."""
        kw = dict(weight_kind=WeightKind.ETV, gamma_s=1.0, gamma_t=1.0)
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class TraceRecord:
    outer: int
    inner: int
    rel_change_I: float
    rel_change_R: float
    objective: float
    objective_half: float   # after the I update, before the R update


@dataclass
class Decomposition:
    illumination: np.ndarray
    reflectance: np.ndarray
    trace: list[TraceRecord] = field(default_factory=list)
    # objective at the start of each stage, under that stage's weights
    stage_start_objectives: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def final_objective(self) -> float:
        return self.trace[-1].objective if self.trace else float("nan")

    def stage_objectives(self, outer: int) -> list[float]:
        """Start, then (after-I, after-R) per inner iteration, for one stage."""
        vals = [self.stage_start_objectives[outer]]
        for rec in self.trace:
            if rec.outer == outer:
                vals += [rec.objective_half, rec.objective]
        return vals


def _sq(a) -> float:
    return float(np.sum(np.square(a)))


def objective(O, I, R, Sx, Sy, Tx, Ty, alpha, beta) -> float:
    O, I, R = as_grid(O, "O"), as_grid(I, "I"), as_grid(R, "R")
    grids = [np.asarray(w, dtype=np.float64) for w in (Sx, Sy, Tx, Ty)]
    if any(g.shape != O.shape for g in (I, R, *grids)):
        raise InvalidInputError("objective: all grids must share the shape of O")
    Sx, Sy, Tx, Ty = grids
    op = GradientOperator(*O.shape)
    ix, iy = op.apply(I)
    rx, ry = op.apply(R)
    return (_sq(O - I * R)
            + alpha * (_sq(Sx.ravel() * ix) + _sq(Sy.ravel() * iy))
            + beta * (_sq(Tx.ravel() * rx) + _sq(Ty.ravel() * ry)))


def objective_gradient(O, I, R, Sx, Sy, Tx, Ty, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partial derivatives of :func:`objective` w.r.t. I and R."""
    O, I, R = as_grid(O, "O"), as_grid(I, "I"), as_grid(R, "R")
    op = GradientOperator(*O.shape)
    resid = O - I * R
    ix, iy = op.apply(I)
    rx, ry = op.apply(R)
    Sx2, Sy2 = np.square(Sx).ravel(), np.square(Sy).ravel()
    Tx2, Ty2 = np.square(Tx).ravel(), np.square(Ty).ravel()
    d_i = -2.0 * R * resid + 2.0 * alpha * op.apply_transpose(Sx2 * ix, Sy2 * iy).reshape(O.shape)
    d_r = -2.0 * I * resid + 2.0 * beta * op.apply_transpose(Tx2 * rx, Ty2 * ry).reshape(O.shape)
    return d_i, d_r


def stage_weights(I, R, params: StarParams):
    """Structure map (from I, gamma_s) and texture map (from R, gamma_t)."""
    s = build_weight(I, params.gamma_s, params.eps_weight, params.window, params.weight_kind)
    t = build_weight(R, params.gamma_t, params.eps_weight, params.window, params.weight_kind)
    return s, t


def _rel_change(new, old, eps) -> float:
    return float(np.linalg.norm(new - old) / (np.linalg.norm(old) + eps))


def star_inner(O, s_weights, t_weights, params: StarParams, init_I, init_R,
               outer: int = 0) -> Decomposition:
    """Alternate exact I and R solves under fixed maps until converged or K steps."""
    O = as_grid(O, "O")
    I = as_grid(init_I, "init_I").copy()
    R = as_grid(init_R, "init_R").copy()
    Sx, Sy = s_weights
    Tx, Ty = t_weights
    for w in (Sx, Sy, Tx, Ty):
        if np.shape(w) != O.shape or not (np.asarray(w) > 0).all():
            raise InvalidInputError("weights must match O and be strictly positive")
    op = GradientOperator(*O.shape)
    o = O.ravel()

    def obj(i, r):
        return objective(O, i, r, Sx, Sy, Tx, Ty, params.alpha, params.beta)

    result = Decomposition(I, R, stage_start_objectives=[obj(I, R)])
    for k in range(1, params.inner_iters + 1):
        try:
            var = "I"
            w_i = DiagonalWeights.from_factors(R.ravel(), Sx, Sy)
            I_new = solve_subproblem(op, w_i, R.ravel(), o, params.alpha, params.solver,
                                     x0=I.ravel()).reshape(O.shape)
            half = obj(I_new, R)
            var = "R"
            w_r = DiagonalWeights.from_factors(I_new.ravel(), Tx, Ty)
            R_new = solve_subproblem(op, w_r, I_new.ravel(), o, params.beta, params.solver,
                                     x0=R.ravel()).reshape(O.shape)
        except SolverError as exc:
            exc.context = (outer, k, var)
            exc.args = (f"{exc.args[0]} [outer={outer} inner={k} variable={var}]",)
            raise
        rel_i = _rel_change(I_new, I, params.eps_div)
        rel_r = _rel_change(R_new, R, params.eps_div)
        I, R = I_new, R_new
        result.trace.append(TraceRecord(outer, k, rel_i, rel_r, obj(I, R), half))
        if rel_i <= params.eps_conv or rel_r <= params.eps_conv:
            break
    result.illumination, result.reflectance = I, R
    return result


def star_decompose(V, params: StarParams = StarParams(), on_stage=None) -> Decomposition:
    """Full decomposition: one solve with the initial maps, then L map refreshes.

    Stage 0 uses maps built from I0 = R0 = V**0.5. Each of the following
    ``outer_iters`` stages rebuilds the maps from the current estimates and
    re-runs the alternation, warm-started from them.

    ``on_stage(stage, I, R)`` is called after every stage if given.
    """
    V = as_grid(V, "V")
    if V.min() < 0:
        raise InvalidInputError("V must be non-negative")
    I = np.sqrt(V)
    R = I.copy()
    out = Decomposition(I, R)
    for stage in range(params.outer_iters + 1):
        s, t = stage_weights(I, R, params)
        d = star_inner(V, s, t, params, I, R, outer=stage)
        I, R = d.illumination, d.reflectance
        out.trace += d.trace
        out.stage_start_objectives += d.stage_start_objectives
        if on_stage is not None:
            on_stage(stage, I, R)
        log.debug("stage %d: %d inner iterations, objective %.6g",
                  stage, d.iterations, d.final_objective)
    out.illumination, out.reflectance = I, R
    return out


# --- applications -------------------------------------------------------------

def recombine_value(illumination, reflectance, gamma_e: float) -> np.ndarray:
    """Enhanced value plane ``R * I**(1/gamma_e)`` clipped to [0, 1]."""
    if not gamma_e > 0:
        raise InvalidInputError("gamma_e must be > 0")
    lit = np.power(np.maximum(illumination, 0.0), 1.0 / gamma_e)
    return np.clip(reflectance * lit, 0.0, 1.0)


def enhance_lowlight(img, params: StarParams = StarParams(), gamma_e: float = 2.2,
                     return_decomposition: bool = False):
    """Brighten an RGB image by gamma-lifting the illumination of its V channel."""
    hsv = rgb_to_hsv(as_rgb(img))
    d = star_decompose(hsv.value, params)
    v_new = recombine_value(d.illumination, d.reflectance, gamma_e)
    out = np.clip(hsv_to_rgb(replace_value_channel(hsv, v_new)), 0.0, 1.0)
    return (out, d) if return_decomposition else out


def estimate_illuminant(img, params: StarParams = StarParams(), workers: int = 1,
                        return_decompositions: bool = False):
    """Per-channel mean of the decomposed illumination, as a length-3 array."""
    rgb = as_rgb(img)
    for c in range(3):
        if not (rgb[..., c] > 0).any():
            raise InvalidIlluminantError(f"channel {'RGB'[c]} is entirely black")
    planes = [rgb[..., c] for c in range(3)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, 3)) as pool:
            decs = list(pool.map(lambda p: star_decompose(p, params), planes))
    else:
        decs = [star_decompose(p, params) for p in planes]
    est = np.array([float(d.illumination.mean()) for d in decs])
    if not (est > 0).all():
        raise InvalidIlluminantError(f"non-positive illuminant estimate {est}")
    return (est, decs) if return_decompositions else est


def color_correct(img, est) -> np.ndarray:
    """Diagonal (von Kries) correction, scaled so a neutral estimate is the identity."""
    rgb = as_rgb(img)
    est = np.asarray(est, dtype=np.float64).ravel()
    if est.shape != (3,) or not np.isfinite(est).all() or (est <= 0).any():
        raise InvalidIlluminantError(f"illuminant estimate must be 3 positive values, got {est}")
    gain = np.linalg.norm(est) / (np.sqrt(3.0) * est)
    return np.clip(rgb * gain, 0.0, 1.0)


def angular_error(est, truth) -> float:
    """Angle in degrees between two RGB illuminant vectors."""
    a = np.asarray(est, dtype=np.float64).ravel()
    b = np.asarray(truth, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if a.shape != (3,) or b.shape != (3,) or na == 0 or nb == 0:
        raise InvalidInputError("angular_error needs two non-zero 3-vectors")
    cos = np.clip(a @ b / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


TRACE_COLUMNS = ("outer", "inner", "rel_change_I", "rel_change_R", "objective")


def write_trace_csv(decomposition: Decomposition, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in decomposition.trace:
        w.writerow([rec.outer, rec.inner, repr(rec.rel_change_I), repr(rec.rel_change_R),
                    repr(rec.objective)])

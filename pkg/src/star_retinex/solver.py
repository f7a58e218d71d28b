"""Weighted least-squares subproblems on a pixel grid.

Each half-step of the alternating scheme minimizes

    ||o - f * x||^2 + lam * (||wx^(1/2) * Gx x||^2 + ||wy^(1/2) * Gy x||^2)

over ``x``, whose normal equations are

    (diag(f^2) + lam * G^T diag(w) G + tikhonov * Id) x = f * o.

The system is SPD and sparse. Three solvers are available: sparse LU on the
assembled matrix (default), matrix-free Jacobi-preconditioned conjugate
gradients, and a dense Cholesky for small grids.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, SingularSystemError, SolverError


class Method(str, enum.Enum):
    SPARSE = "sparse"
    CG = "cg"
    DENSE = "dense"


DIRECT_TOL = 1e-10


@dataclass(frozen=True)
class SolverSettings:
    method: Method = Method.SPARSE
    cg_tol: float = 1e-8
    cg_max_iters: int = 10_000
    tikhonov: float = 1e-12
    dense_max_pixels: int = 64 * 64

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0.0 < self.cg_tol < 1.0:
            raise InvalidInputError("cg_tol must lie in (0, 1)")
        if self.cg_max_iters < 1:
            raise InvalidInputError("cg_max_iters must be >= 1")
        if self.tikhonov < 0:
            raise InvalidInputError("tikhonov must be >= 0")


@dataclass(frozen=True)
class GradientOperator:
    """Forward-difference pair (Gx, Gy) acting on row-major flattened grids."""

    height: int
    width: int

    @property
    def size(self) -> int:
        return self.height * self.width

    def _grid(self, v, name="v") -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.size:
            raise InvalidInputError(
                f"{name} has {v.size} entries, operator expects {self.height}x{self.width}")
        return v.reshape(self.height, self.width)

    def apply(self, v) -> tuple[np.ndarray, np.ndarray]:
        g = self._grid(v)
        gx = np.zeros_like(g)
        gy = np.zeros_like(g)
        np.subtract(g[:, 1:], g[:, :-1], out=gx[:, :-1])
        np.subtract(g[1:, :], g[:-1, :], out=gy[:-1, :])
        return gx.ravel(), gy.ravel()

    def apply_transpose(self, gx, gy) -> np.ndarray:
        px = self._grid(gx, "gx")
        py = self._grid(gy, "gy")
        out = np.zeros((self.height, self.width))
        out[:, 1:] += px[:, :-1]
        out[:, :-1] -= px[:, :-1]
        out[1:, :] += py[:-1, :]
        out[:-1, :] -= py[:-1, :]
        return out.ravel()

    def weighted_laplacian_diagonal(self, wx, wy) -> np.ndarray:
        """Diagonal of G^T diag(w) G without forming it."""
        wx = self._grid(wx, "wx")
        wy = self._grid(wy, "wy")
        d = np.zeros((self.height, self.width))
        d[:, :-1] += wx[:, :-1]
        d[:, 1:] += wx[:, :-1]
        d[:-1, :] += wy[:-1, :]
        d[1:, :] += wy[:-1, :]
        return d.ravel()


@dataclass(frozen=True)
class DiagonalWeights:
    """Squared diagonals of the data term and of the two regularizer terms."""

    data_diag: np.ndarray
    reg_diag_x: np.ndarray
    reg_diag_y: np.ndarray

    def __post_init__(self):
        for name in ("data_diag", "reg_diag_x", "reg_diag_y"):
            a = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.isfinite(a).all() or (a < 0).any():
                raise InvalidInputError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, a)
        if (self.reg_diag_x <= 0).any() or (self.reg_diag_y <= 0).any():
            raise InvalidInputError("regularizer diagonals must be strictly positive")

    @classmethod
    def from_factors(cls, fixed_factor, wx, wy) -> "DiagonalWeights":
        """Square the fixed factor and the (unsquared) per-direction weights."""
        f = np.asarray(fixed_factor, dtype=np.float64)
        wx = np.asarray(wx, dtype=np.float64)
        wy = np.asarray(wy, dtype=np.float64)
        return cls(f * f, wx * wx, wy * wy)


def normal_operator(op: GradientOperator, weights: DiagonalWeights, lam: float,
                    tikhonov: float = 0.0):
    """Return ``x -> A x`` for the subproblem's normal matrix."""
    data = weights.data_diag + tikhonov
    wx, wy = weights.reg_diag_x, weights.reg_diag_y

    def apply(x):
        x = np.asarray(x, dtype=np.float64).ravel()
        gx, gy = op.apply(x)
        return data * x + lam * op.apply_transpose(wx * gx, wy * gy)

    return apply


def _check_inputs(op, weights, fixed_factor, observation, lam):
    n = op.size
    f = np.asarray(fixed_factor, dtype=np.float64).ravel()
    o = np.asarray(observation, dtype=np.float64).ravel()
    for name, a in (("fixed_factor", f), ("observation", o), ("data_diag", weights.data_diag),
                    ("reg_diag_x", weights.reg_diag_x), ("reg_diag_y", weights.reg_diag_y)):
        if a.size != n:
            raise InvalidInputError(f"{name} has {a.size} entries, expected {n}")
    if not lam > 0:
        raise InvalidInputError(f"lambda must be > 0, got {lam}")
    if not (np.isfinite(f).all() and np.isfinite(o).all()):
        raise InvalidInputError("fixed_factor and observation must be finite")
    return f, o


def solve_subproblem(op: GradientOperator, weights: DiagonalWeights, fixed_factor, observation,
                     lam: float, settings: SolverSettings = SolverSettings(), x0=None) -> np.ndarray:
    """Solve the normal equations of one half-step; returns a flat vector.

    ``x0`` is the CG starting point (the previous iterate when warm starting).
    """
    f, o = _check_inputs(op, weights, fixed_factor, observation, lam)
    b = f * o
    apply_a = normal_operator(op, weights, lam, settings.tikhonov)
    if settings.method is Method.DENSE:
        return _dense_solve(op, apply_a, b, settings)
    if settings.method is Method.SPARSE:
        return _sparse_solve(op, weights, lam, settings, apply_a, b)
    diag = (weights.data_diag + settings.tikhonov
            + lam * op.weighted_laplacian_diagonal(weights.reg_diag_x, weights.reg_diag_y))
    x, _, _ = pcg(apply_a, b, x0=x0, diag=diag, tol=settings.cg_tol,
                  max_iters=settings.cg_max_iters)
    return x


@functools.lru_cache(maxsize=8)
def gradient_matrices(height: int, width: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse (Gx, Gy) matching :meth:`GradientOperator.apply`."""
    def diff(n):
        d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
        d[n - 1, n - 1] = 0.0
        return d.tocsr()
    gx = sp.kron(sp.identity(height), diff(width), format="csr")
    gy = sp.kron(diff(height), sp.identity(width), format="csr")
    return gx, gy


def assemble_sparse(op: GradientOperator, weights: DiagonalWeights, lam: float,
                    tikhonov: float = 0.0) -> sp.csc_matrix:
    gx, gy = gradient_matrices(op.height, op.width)
    reg = gx.T @ sp.diags(weights.reg_diag_x) @ gx + gy.T @ sp.diags(weights.reg_diag_y) @ gy
    return (sp.diags(weights.data_diag + tikhonov) + lam * reg).tocsc()


def _sparse_solve(op, weights, lam, settings, apply_a, b) -> np.ndarray:
    # Held to the same relative-residual contract as CG.
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    a = assemble_sparse(op, weights, lam, settings.tikhonov)
    try:
        lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(b)
    # One step of iterative refinement against the matrix-free operator.
    x += lu.solve(b - apply_a(x))
    res = np.linalg.norm(b - apply_a(x)) / bnorm
    if not np.isfinite(x).all() or res > settings.cg_tol:
        raise SingularSystemError(
            f"sparse solve relative residual {res:.3e} exceeds {settings.cg_tol}")
    return x


def _dense_solve(op, apply_a, b, settings) -> np.ndarray:
    n = op.size
    if n > settings.dense_max_pixels:
        raise InvalidInputError(
            f"dense solve limited to {settings.dense_max_pixels} pixels, grid has {n}")
    # Probe the matrix-free operator column by column.
    a = np.column_stack([apply_a(e) for e in np.eye(n)])
    a = 0.5 * (a + a.T)
    try:
        c = scipy.linalg.cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"normal matrix is not positive definite: {exc}") from exc
    x = scipy.linalg.cho_solve(c, b)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(a @ x - b)
    if not np.isfinite(x).all() or (bnorm > 0 and res > DIRECT_TOL * bnorm):
        raise SingularSystemError(f"dense solve residual {res / max(bnorm, 1e-300):.3e} too large")
    return x


def pcg(apply_a, b, x0=None, diag=None, tol=1e-8, max_iters=10_000):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= tol * ||b||``. Returns ``(x, iterations,
    relative_residual)``; raises ``SolverError`` past ``max_iters``.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64).ravel()
    inv_diag = np.ones_like(b) if diag is None else 1.0 / np.asarray(diag, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    target = tol * bnorm

    r = b - apply_a(x)
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > target:
        z = inv_diag * r
        p = z
        rz = r @ z
        while it < max_iters:
            ap = apply_a(p)
            step = rz / (p @ ap)
            x += step * p
            r -= step * ap
            it += 1
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                break
            z = inv_diag * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        # The recursive residual drifts; confirm against the true one and
        # restart from the current iterate if it disagrees.
        r = b - apply_a(x)
        rnorm = np.linalg.norm(r)
        if it >= max_iters and rnorm > target:
            raise SolverError(
                f"CG did not converge in {max_iters} iterations "
                f"(relative residual {rnorm / bnorm:.3e})",
                residual=rnorm / bnorm)
    if not np.isfinite(x).all():
        raise SolverError("CG produced non-finite values", residual=float("nan"))
    return x, it, rnorm / bnorm

"""Brute-force reference solvers for tests.

Everything here is built from explicit dense matrices so it shares no code
path with the matrix-free operator in :mod:`star_retinex.solver`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularSystemError, SolverError

MAX_DENSE = 64 * 64


@dataclass(frozen=True)
class DenseSystem:
    matrix: np.ndarray
    rhs: np.ndarray


def dense_gradient(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Explicit forward-difference matrices, zero rows on the last column/row."""
    n = height * width
    if n > MAX_DENSE:
        raise InvalidInputError(f"dense oracle limited to {MAX_DENSE} pixels")
    gx = np.zeros((n, n))
    gy = np.zeros((n, n))
    for r in range(height):
        for c in range(width):
            k = r * width + c
            if c + 1 < width:
                gx[k, k] = -1.0
                gx[k, k + 1] = 1.0
            if r + 1 < height:
                gy[k, k] = -1.0
                gy[k, k + width] = 1.0
    return gx, gy


def assemble_dense(op, weights, fixed_factor, lam, observation=None) -> DenseSystem:
    """Dense normal matrix ``diag(f^2) + lam * G^T diag(w) G`` and its right-hand side."""
    n = op.height * op.width
    if n > MAX_DENSE:
        raise InvalidInputError(f"grid {op.height}x{op.width} exceeds the dense cap")
    f = np.asarray(fixed_factor, dtype=np.float64).ravel()
    gx, gy = dense_gradient(op.height, op.width)
    m = (np.diag(f * f)
         + lam * (gx.T @ np.diag(weights.reg_diag_x) @ gx
                  + gy.T @ np.diag(weights.reg_diag_y) @ gy))
    o = np.zeros(n) if observation is None else np.asarray(observation, dtype=np.float64).ravel()
    return DenseSystem(m, f * o)


def dense_solve(system: DenseSystem) -> np.ndarray:
    a, b = system.matrix, system.rhs
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("matrix is not symmetric positive definite") from exc
    y = np.linalg.solve(chol, b)
    x = np.linalg.solve(chol.T, y)
    # Refine once; the Cholesky solve alone can miss 1e-10 on poorly scaled systems.
    x += np.linalg.solve(chol.T, np.linalg.solve(chol, b - a @ x))
    return x


def descent_minimize(fun, grad, x0, steps: int = 200_000, rate: float = 1e-2,
                     gtol: float = 1e-6) -> np.ndarray:
    """Fixed-step gradient descent until ``|grad| <= gtol * |grad(x0)|``.

    Raises ``SolverError`` if the objective rises for 100 consecutive steps or
    the step budget runs out.
    """
    x = np.array(x0, dtype=np.float64)
    g = grad(x)
    g0 = np.linalg.norm(g)
    if g0 == 0.0:
        return x
    f_prev = fun(x)
    rising = 0
    for _ in range(steps):
        x = x - rate * g
        g = grad(x)
        if np.linalg.norm(g) <= gtol * g0:
            return x
        f = fun(x)
        rising = rising + 1 if f > f_prev else 0
        if rising >= 100:
            raise SolverError("gradient descent diverged", residual=np.linalg.norm(g) / g0)
        f_prev = f
    raise SolverError("gradient descent step budget exhausted", residual=np.linalg.norm(g) / g0)


def subproblem_functions(height, width, fixed_factor, observation, reg_x, reg_y, lam):
    """Objective and gradient of one half-step, from dense matrices.

    ``reg_x``/``reg_y`` are the squared regularizer weights.
    """
    gx, gy = dense_gradient(height, width)
    f = np.asarray(fixed_factor, dtype=np.float64).ravel()
    o = np.asarray(observation, dtype=np.float64).ravel()
    wx = np.asarray(reg_x, dtype=np.float64).ravel()
    wy = np.asarray(reg_y, dtype=np.float64).ravel()

    def fun(x):
        dx, dy = gx @ x, gy @ x
        return float(np.sum((o - f * x) ** 2) + lam * (wx @ dx**2 + wy @ dy**2))

    def grad(x):
        return (-2.0 * f * (o - f * x)
                + 2.0 * lam * (gx.T @ (wx * (gx @ x)) + gy.T @ (wy * (gy @ x))))

    return fun, grad

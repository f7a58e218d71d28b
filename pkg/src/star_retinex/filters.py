"""Forward-difference derivatives and the structure/texture weight maps.

Horizontal and vertical derivatives are kept separate; every map and weight
comes as an (x, y) pair of grids.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .image import as_grid


class WeightKind(str, enum.Enum):
    ETV = "etv"
    EMLV = "emlv"


@dataclass(frozen=True)
class WindowSpec:
    radius: int = 1

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidInputError(f"window radius must be >= 0, got {self.radius}")

    @property
    def size(self) -> int:
        return 2 * self.radius + 1


@dataclass(frozen=True)
class WeightParams:
    gamma_s: float = 1.5
    gamma_t: float = 0.5
    eps_weight: float = 1e-4

    def __post_init__(self):
        if not self.gamma_s > 1.0:
            raise InvalidInputError("gamma_s must be > 1")
        if not self.gamma_t < 1.0:
            raise InvalidInputError("gamma_t must be < 1")
        if not self.eps_weight > 0.0:
            raise InvalidInputError("eps_weight must be > 0")


def forward_gradient(g) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with a zero last column (x) / last row (y)."""
    g = as_grid(g)
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    gx[:, :-1] = g[:, 1:] - g[:, :-1]
    gy[:-1, :] = g[1:, :] - g[:-1, :]
    return gx, gy


def tv_map(g) -> tuple[np.ndarray, np.ndarray]:
    gx, gy = forward_gradient(g)
    return np.abs(gx), np.abs(gy)


def _window_mean(a: np.ndarray, radius: int) -> np.ndarray:
    # Mean over the window clipped to the image: box sums of the data divided
    # by box sums of an all-ones mask.
    if radius == 0:
        return a.copy()
    size = 2 * radius + 1
    sums = ndimage.uniform_filter(a, size=size, mode="constant", cval=0.0)
    counts = ndimage.uniform_filter(np.ones_like(a), size=size, mode="constant", cval=0.0)
    return sums / counts


def mlv_map(g, window: WindowSpec = WindowSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Absolute local mean of each derivative plane."""
    gx, gy = forward_gradient(g)
    return (np.abs(_window_mean(gx, window.radius)),
            np.abs(_window_mean(gy, window.radius)))


def exponentiate_map(m, gamma: float) -> np.ndarray:
    m = as_grid(m, "map")
    if (m < 0).any():
        idx = tuple(int(i) for i in np.argwhere(m < 0)[0])
        raise InvalidInputError(f"map must be non-negative; pixel {idx} is {m[idx]!r}")
    return np.power(m, gamma)


def build_weight(source, gamma: float, eps_weight: float,
                 window: WindowSpec = WindowSpec(),
                 kind: WeightKind | str = WeightKind.EMLV) -> tuple[np.ndarray, np.ndarray]:
    """Per-direction weights ``1 / (map**gamma + eps_weight)``.

    ``map`` is the TV map (``kind="etv"``) or the MLV map (``kind="emlv"``) of
    ``source``. Outputs lie in ``(0, 1/eps_weight]``.
    """
    kind = WeightKind(kind)
    if not eps_weight > 0:
        raise InvalidInputError("eps_weight must be > 0")
    if kind is WeightKind.ETV:
        mx, my = tv_map(source)
    else:
        mx, my = mlv_map(source, window)
    return (1.0 / (exponentiate_map(mx, gamma) + eps_weight),
            1.0 / (exponentiate_map(my, gamma) + eps_weight))

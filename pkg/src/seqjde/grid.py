"""Uniform grids, multilinear interpolation and trapezoidal quadrature."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DegenerateDensityError(ValueError):
    """Raised when a density has no positive mass on the quadrature grid."""


@dataclass(frozen=True)
class Axis:
    lower: float
    upper: float
    count: int

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"axis needs lower < upper, got [{self.lower}, {self.upper}]")
        if self.count < 2:
            raise ValueError(f"axis needs at least 2 points, got {self.count}")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.count - 1)

    @property
    def nodes(self) -> np.ndarray:
        v = np.linspace(self.lower, self.upper, self.count)
        if self.lower == -self.upper:
            # exact mirror symmetry, so reflected states are bitwise reflections
            v = 0.5 * (v - v[::-1])
        return v


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product uniform grid; node arrays are flattened in C order."""

    axes: tuple[Axis, ...]

    @classmethod
    def from_bounds(cls, *bounds: Sequence[float]) -> "GridSpec":
        return cls(tuple(Axis(float(lo), float(hi), int(k)) for lo, hi, k in bounds))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        """All nodes as an array of shape (size, ndim)."""
        mesh = np.meshgrid(*[a.nodes for a in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def nearest_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat index of the nearest node and a flag for points outside the grid."""
        points = np.atleast_2d(points)
        flat = np.zeros(points.shape[0], dtype=np.int64)
        outside = np.zeros(points.shape[0], dtype=bool)
        for d, ax in enumerate(self.axes):
            u = (points[:, d] - ax.lower) / ax.spacing
            outside |= (u < -1e-9) | (u > ax.count - 1 + 1e-9)
            k = np.clip(np.rint(u), 0, ax.count - 1).astype(np.int64)
            flat = flat * ax.count + k
        return flat, outside

    def corner_weights(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Multilinear interpolation stencil for each point (clamped to the grid).

        Returns ``(index, weight)`` of shape ``(P, 2**ndim)``.
        """
        points = np.atleast_2d(points)
        P = points.shape[0]
        idx = np.zeros((P, 1), dtype=np.int64)
        wts = np.ones((P, 1))
        for d, ax in enumerate(self.axes):
            u = np.clip((points[:, d] - ax.lower) / ax.spacing, 0.0, ax.count - 1)
            k0 = np.minimum(np.floor(u).astype(np.int64), ax.count - 2)
            f = u - k0
            idx = np.concatenate([idx * ax.count + k0[:, None], idx * ax.count + k0[:, None] + 1], axis=1)
            wts = np.concatenate([wts * (1.0 - f)[:, None], wts * f[:, None]], axis=1)
        return idx, wts

    def mirror_index(self, axis: int = 0) -> np.ndarray:
        """Flat index of each node reflected through the centre of ``axis``."""
        grids = np.indices(self.shape)
        grids[axis] = self.shape[axis] - 1 - grids[axis]
        return np.ravel_multi_index(tuple(grids), self.shape).ravel()


@dataclass
class GridFunction:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    def __call__(self, points) -> np.ndarray:
        return interpolate(self, points)


def interpolate(f: GridFunction, points) -> np.ndarray | float:
    """Multilinear interpolation of ``f``; queries outside the grid are clamped."""
    arr = np.asarray(points, dtype=float)
    scalar = arr.ndim == 0 or (arr.ndim == 1 and f.grid.ndim > 1 and arr.size == f.grid.ndim)
    if arr.ndim <= 1:
        arr = arr.reshape(-1, f.grid.ndim) if f.grid.ndim > 1 else arr.reshape(-1, 1)
    idx, w = f.grid.corner_weights(arr)
    out = np.sum(f.values[idx] * w, axis=1)
    return float(out[0]) if scalar else out


def trapezoid_weights(axis: Axis) -> np.ndarray:
    w = np.full(axis.count, axis.spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def quadrature(values, weights, density=None) -> float:
    """Trapezoidal quadrature with precomputed ``weights``.

    If ``density`` is given the integral is taken against it after rescaling
    the density so that its own quadrature equals one.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if density is None:
        return float(np.dot(values, weights))
    density = np.asarray(density, dtype=float)
    mass = float(np.dot(density, weights))
    if not mass > 0.0:
        raise DegenerateDensityError(f"density has nonpositive mass {mass!r} on the grid")
    return float(np.dot(values * density, weights) / mass)

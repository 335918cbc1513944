"""Functions sampled on strictly increasing grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def geometric_grid(lo: float, hi: float, n: int, *, include_zero: bool = False, uniform_tail: int = 0) -> np.ndarray:
    """Geometric points on ``[lo, hi]``, optionally with 0 and extra uniform points.

    The uniform points resolve the far end of the grid, where geometric spacing
    is coarse in absolute terms.
    """
    pts = np.geomspace(lo, hi, n)
    if uniform_tail:
        pts = np.union1d(pts, np.linspace(hi / uniform_tail, hi, uniform_tail))
    if include_zero:
        pts = np.concatenate([[0.0], pts])
    return np.unique(pts)


@dataclass
class GridFunction:
    grid: np.ndarray
    values: np.ndarray
    space: str = "UnitInterval"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")

    def __call__(self, x, left=None, right=0.0):
        """Piecewise-linear interpolant. Outside the grid: ``left`` (default the
        first value) and ``right`` (default 0)."""
        left = self.values[0] if left is None else left
        return np.interp(x, self.grid, self.values, left=left, right=right)

    def l1_norm(self) -> float:
        return float(np.trapezoid(np.abs(self.values), self.grid))

    def integral(self, weight=None) -> float:
        v = self.values if weight is None else self.values * weight
        return float(np.trapezoid(v, self.grid))

    def is_decreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def worst_increase(self) -> float:
        d = np.diff(self.values)
        return float(d.max()) if d.size else 0.0

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid.copy(), self.values.copy(), self.space)

    def to_csv(self, path, header=("y", "value")) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for y, v in zip(self.grid, self.values):
                w.writerow([repr(float(y)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, space="UnitInterval") -> "GridFunction":
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(data[:, 0], data[:, 1], space)

"""Uniform-grid function container used by the Volterra machinery."""

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch


@dataclass
class GridFunction:
    """Samples of a function on the uniform grid t0 + h*arange(n).

    left_limit optionally records a one-sided limit at t0 for functions with
    a jump there (past correctors jump at 0).
    """

    t0: float
    h: float
    values: np.ndarray
    left_limit: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError("need a 1-d array of at least two samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        if self.h <= 0:
            raise ValueError("grid step must be positive")

    def __len__(self):
        return len(self.values)

    @property
    def t_end(self):
        return self.t0 + self.h * (len(self.values) - 1)

    def times(self):
        return self.t0 + self.h * np.arange(len(self.values))

    def value_at(self, t):
        """Linear interpolation inside the grid range."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12) or np.any(t > self.t_end + 1e-12):
            raise ValueError("query outside grid range")
        return np.interp(t, self.times(), self.values)

    def index_of(self, t, tol=1e-9):
        """Index of a grid-aligned time, or GridMismatch."""
        x = (t - self.t0) / self.h
        i = int(round(x))
        if abs(x - i) > tol or i < 0 or i >= len(self.values):
            raise GridMismatch(f"time {t} is not a grid node")
        return i

    def same_grid(self, other, tol=1e-12):
        return (abs(self.t0 - other.t0) <= tol
                and abs(self.h - other.h) <= tol * max(1.0, self.h)
                and len(self) == len(other))

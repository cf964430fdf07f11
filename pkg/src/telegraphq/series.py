"""Time-series container shared by the transform engine and the evolvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TimeSeries"]


@dataclass
class TimeSeries:
    """Sampled series: values[i] (scalar, vector or matrix) at time ts[i].

    err carries per-sample error estimates (same shape as values); meta is
    free-form provenance (method used, flagged points, ...).
    """

    ts: np.ndarray
    values: np.ndarray
    err: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ts = np.asarray(self.ts, dtype=float)
        self.values = np.asarray(self.values)
        if self.ts.ndim != 1:
            raise ValueError("ts must be one-dimensional")
        if self.ts.size and (np.any(np.diff(self.ts) <= 0) or self.ts[0] < 0):
            raise ValueError("ts must be strictly increasing and start at t >= 0")
        if self.values.shape[:1] != self.ts.shape:
            raise ValueError("values must have one entry per time")
        if self.err is not None:
            self.err = np.asarray(self.err)
            if self.err.shape != self.values.shape:
                raise ValueError("err must match values in shape")

    def __len__(self) -> int:
        return self.ts.size

    def component_norm(self) -> np.ndarray:
        """Euclidean norm over the trailing axes, per time sample."""
        v = self.values.reshape(self.ts.size, -1)
        return np.sqrt((v * v).sum(axis=1))

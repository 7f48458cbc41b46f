from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class TimeSeries:
    """Irregularly sampled series: strictly increasing times, finite values."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.ndim != 1 or t.shape != v.shape:
            raise ParameterError("times and values must be 1-D arrays of equal length")
        if len(t) < 2:
            raise ParameterError("a time series needs at least 2 observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ParameterError("times and values must be finite")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("times must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.times)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def shifted(self, offset: float) -> TimeSeries:
        return TimeSeries(self.times + offset, self.values)

    def with_values(self, values) -> TimeSeries:
        return TimeSeries(self.times, values)

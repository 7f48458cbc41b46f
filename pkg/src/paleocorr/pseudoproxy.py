"""Synthetic marine-sediment pseudoproxies.

A pair of coupled Ornstein-Uhlenbeck signals is generated on a regular
latent grid (one step per deposited layer), each value is given a layer of
gamma-distributed thickness, and the resulting column is sampled at regular
depth intervals.  Latent time grows downcore, i.e. it plays the role of age.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal

from .errors import EmptySampleError, ParameterError
from .timeseries import TimeSeries

#: Intervals the benchmark draws parameters from (inclusive bounds).
PARAM_RANGES = {
    "n_obs": (25, 300),
    "coupling": (0.1, 0.9),
    "drag": (0.01, 0.9),
    "sed_mean": (0.2, 0.5),
    "sed_skew": (1.0, 2.0),
}

#: Mean time between two depth samples, in OU time units.
DEFAULT_SAMPLE_INTERVAL = 6.0
#: Latent grid step (one sediment layer per step), in OU time units.
DEFAULT_DT = 0.05
#: Smallest layer thickness as a fraction of the mean thickness.
MIN_LAYER_FRACTION = 1e-9


@dataclass(frozen=True)
class PseudoproxyParams:
    n_obs: int
    coupling: float
    drag: float
    sed_mean: float
    sed_skew: float
    seed: int = 0

    def __post_init__(self):
        if self.n_obs < 2:
            raise ParameterError(f"n_obs must be >= 2, got {self.n_obs}")
        if not 0.0 <= self.coupling <= 1.0:
            raise ParameterError(f"coupling must lie in [0, 1], got {self.coupling}")
        for name in ("drag", "sed_mean", "sed_skew"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")

    def as_dict(self):
        return asdict(self)


def draw_params(rng, seed=0, ranges=None, **overrides) -> PseudoproxyParams:
    """Draw one parameter vector uniformly from ``ranges`` (default: PARAM_RANGES).

    Keyword overrides pin individual fields.
    """
    ranges = {**PARAM_RANGES, **(ranges or {})}
    lo, hi = ranges["n_obs"]
    values = {"n_obs": int(rng.integers(int(lo), int(hi) + 1))}
    for name in ("coupling", "drag", "sed_mean", "sed_skew"):
        lo, hi = ranges[name]
        values[name] = float(rng.uniform(lo, hi))
    values.update(overrides)
    return PseudoproxyParams(seed=seed, **values)


@dataclass(frozen=True)
class LatentPair:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not len(self.times) == len(self.x) == len(self.y):
            raise ParameterError("latent pair arrays must have equal length")


@dataclass(frozen=True)
class SedimentColumn:
    layer_top_depths: np.ndarray
    layer_times: np.ndarray
    assigned_values: np.ndarray
    thicknesses: np.ndarray = field(repr=False)

    @property
    def total_depth(self) -> float:
        return float(self.layer_top_depths[-1] + self.thicknesses[-1])

    def __len__(self):
        return len(self.layer_top_depths)


def generate_ou(n, dt, drag, rng) -> np.ndarray:
    """Stationary unit-variance OU path sampled exactly at step ``dt``."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if not drag > 0:
        raise ParameterError(f"drag must be positive, got {drag}")
    decay = np.exp(-drag * dt)
    innov = rng.standard_normal(n)
    innov[1:] *= np.sqrt(-np.expm1(-2.0 * drag * dt))
    # x[i] = decay * x[i-1] + innov[i], with x[0] = innov[0] ~ N(0, 1)
    return signal.lfilter([1.0], [1.0, -decay], innov)


def couple(x, coupling, rng, drag=None, dt=1.0) -> np.ndarray:
    """Return ``c*x + sqrt(1-c^2)*eps`` with ``eps`` an independent OU path.

    ``drag`` is the drag of ``eps``; it must match the one used for ``x`` so
    that both members of the pair share the same persistence.
    """
    if not 0.0 <= coupling <= 1.0:
        raise ParameterError(f"coupling must lie in [0, 1], got {coupling}")
    x = np.asarray(x, dtype=float)
    if coupling == 1.0:
        return x.copy()
    if drag is None:
        raise ParameterError("drag is required for the independent component")
    eps = generate_ou(len(x), dt, drag, rng)
    return coupling * x + np.sqrt(1.0 - coupling**2) * eps


def latent_pair(params: PseudoproxyParams, rng, sample_interval=DEFAULT_SAMPLE_INTERVAL,
                dt=DEFAULT_DT) -> LatentPair:
    """Coupled latent signals long enough to yield about ``n_obs`` core samples."""
    n = int(np.ceil(params.n_obs * sample_interval / dt)) + 1
    x = generate_ou(n, dt, params.drag, rng)
    y = couple(x, params.coupling, rng, drag=params.drag, dt=dt)
    return LatentPair(np.arange(n) * dt, x, y)


def gamma_shape_scale(sed_mean, sed_skew):
    """Gamma (shape, scale) with the given mean and skewness."""
    if not sed_mean > 0 or not sed_skew > 0:
        raise ParameterError("sedimentation mean and skewness must be positive")
    shape = (2.0 / sed_skew) ** 2
    return shape, sed_mean / shape


def deposit(values, sed_mean, sed_skew, rng, times=None) -> SedimentColumn:
    """Give every latent value a layer of gamma-distributed thickness."""
    values = np.asarray(values, dtype=float)
    shape, scale = gamma_shape_scale(sed_mean, sed_skew)
    thick = rng.gamma(shape, scale, size=len(values))
    # floor keeps cumulative depths strictly increasing for very small shapes
    thick = np.maximum(thick, MIN_LAYER_FRACTION * sed_mean)
    tops = np.concatenate([[0.0], np.cumsum(thick)[:-1]])
    if times is None:
        times = np.arange(len(values), dtype=float)
    return SedimentColumn(tops, np.asarray(times, dtype=float), values, thick)


def sample_positions(column: SedimentColumn, sample_spacing, offset=0.5):
    """Depths and layer indices of regular core samples.

    Samples sit at ``(k + offset) * sample_spacing``.  Consecutive samples
    falling into the same layer are collapsed onto the first of them.
    """
    if not sample_spacing > 0:
        raise ParameterError(f"sample_spacing must be positive, got {sample_spacing}")
    total = column.total_depth
    if sample_spacing > total:
        raise EmptySampleError(
            f"sample spacing {sample_spacing:g} exceeds core depth {total:g}")
    depths = (np.arange(int(total / sample_spacing) + 1) + offset) * sample_spacing
    depths = depths[depths < total]
    layer = np.searchsorted(column.layer_top_depths, depths, side="right") - 1
    keep = np.concatenate([[True], np.diff(layer) > 0])
    return depths[keep], layer[keep]


def sample_core(column: SedimentColumn, sample_spacing, offset=0.5) -> TimeSeries:
    """Sample the column at regular depths; each sample carries its layer's true time."""
    _, layer = sample_positions(column, sample_spacing, offset)
    if len(layer) < 2:
        raise EmptySampleError("core sampling yielded fewer than 2 observations")
    return TimeSeries(column.layer_times[layer], column.assigned_values[layer])


@dataclass(frozen=True)
class Core:
    """A sampled core: observation depths plus the true-time series."""

    depths: np.ndarray
    series: TimeSeries
    column: SedimentColumn = field(repr=False)


def make_core(values, times, params: PseudoproxyParams, rng,
              sample_interval=DEFAULT_SAMPLE_INTERVAL, column=None) -> Core:
    """Deposit ``values`` (unless a column is given) and core it.

    Layers have mean thickness ``sed_mean * dt`` (``dt`` being the latent
    step) and skewness ``sed_skew``, so ``sed_mean`` is a rate per time
    unit.  Samples are ``sample_interval * sed_mean`` apart in depth, i.e.
    one sample per ``sample_interval`` time units on average.  Passing
    ``column`` reuses its layer thicknesses, which is how two records share
    one sedimentation history.
    """
    times = np.asarray(times, dtype=float)
    if column is None:
        dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
        column = deposit(values, params.sed_mean * dt, params.sed_skew, rng, times=times)
    else:
        column = SedimentColumn(column.layer_top_depths, times,
                                np.asarray(values, dtype=float), column.thicknesses)
    depths, layer = sample_positions(column, sample_interval * params.sed_mean)
    if len(layer) < 2:
        raise EmptySampleError("core sampling yielded fewer than 2 observations")
    series = TimeSeries(column.layer_times[layer], column.assigned_values[layer])
    return Core(depths, series, column)

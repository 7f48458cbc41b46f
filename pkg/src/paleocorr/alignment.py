"""Concurrent pairs from unequally sampled series, plus series utilities.

Four approximation methods are provided:

``LI``  linear interpolation of y onto x's observation times,
``G``   Gaussian-kernel weighted mean of y at x's times (bandwidth h*dt),
``NV``  greedy single-use nearest-value matching within 0.5*dt,
``S``   slot means over a shared grid of width W*dt.

``dt`` is the pair-averaged mean sampling interval.  All methods refuse to
extrapolate beyond the observed span of either series.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientOverlapError,
    NoOverlapError,
    ParameterError,
    UndefinedPersistenceError,
    ZeroVarianceError,
)
from .timeseries import TimeSeries

METHODS = ("LI", "G", "NV", "S")
NV_LIMIT = 0.5
MIN_PAIRS = 3


@dataclass(frozen=True)
class AlignmentSpec:
    method: str
    scale: float = 1.0

    def __post_init__(self):
        method = self.method.upper()
        if method not in METHODS:
            raise ParameterError(f"unknown alignment method {self.method!r}")
        if not self.scale > 0:
            raise ParameterError(f"alignment scale must be positive, got {self.scale}")
        object.__setattr__(self, "method", method)
        if method == "NV":
            object.__setattr__(self, "scale", NV_LIMIT)

    @property
    def label(self) -> str:
        if self.method == "LI":
            return "LI"
        return f"{self.method}({self.scale:g})"

    @classmethod
    def parse(cls, text: str) -> AlignmentSpec:
        """Parse labels such as ``LI``, ``G(0.5)``, ``S2`` or ``NV``."""
        s = text.strip().upper().replace(" ", "")
        method = s.rstrip("0123456789.()")
        if method == s:
            return cls(method)
        number = s[len(method):].strip("()")
        try:
            return cls(method, float(number))
        except ValueError:
            raise ParameterError(f"cannot parse alignment spec {text!r}") from None


#: The six method settings of the benchmark.
DEFAULT_SPECS = (
    AlignmentSpec("LI"),
    AlignmentSpec("G", 0.5),
    AlignmentSpec("G", 2.0),
    AlignmentSpec("NV"),
    AlignmentSpec("S", 1.0),
    AlignmentSpec("S", 2.0),
)


@dataclass(frozen=True)
class AlignedPairs:
    x: np.ndarray
    y: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ParameterError("aligned x and y differ in length")
        if len(self.x) < MIN_PAIRS:
            raise InsufficientOverlapError(
                f"only {len(self.x)} concurrent pairs, need at least {MIN_PAIRS}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ParameterError("aligned values must be finite")

    @property
    def effective_n(self) -> int:
        return len(self.x)


def normalize(ts: TimeSeries) -> TimeSeries:
    """Zero mean, unit sample variance (ddof=1)."""
    v = ts.values
    sd = np.std(v, ddof=1)
    if not sd > 0 or np.ptp(v) == 0:
        raise ZeroVarianceError("series has zero variance and cannot be normalized")
    return ts.with_values((v - v.mean()) / sd)


def mean_dt(ts: TimeSeries) -> float:
    t = ts.times
    return float((t[-1] - t[0]) / (len(t) - 1))


def pair_dt(x: TimeSeries, y: TimeSeries) -> float:
    return 0.5 * (mean_dt(x) + mean_dt(y))


def overlap(x: TimeSeries, y: TimeSeries) -> tuple[float, float]:
    lo = max(x.times[0], y.times[0])
    hi = min(x.times[-1], y.times[-1])
    if not lo < hi:
        raise NoOverlapError(
            f"time ranges [{x.times[0]:g}, {x.times[-1]:g}] and "
            f"[{y.times[0]:g}, {y.times[-1]:g}] do not overlap")
    return float(lo), float(hi)


def kernel_mean(times, values, at, bandwidth) -> np.ndarray:
    """Nadaraya-Watson mean of ``values`` at ``at`` with a Gaussian kernel."""
    d = (np.asarray(at)[:, None] - np.asarray(times)[None, :]) / bandwidth
    logw = -0.5 * d * d
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return (w @ values) / w.sum(axis=1)


def _inside(t, lo, hi):
    return (t >= lo) & (t <= hi)


def _align_li(x, y, dt, scale):
    m = _inside(x.times, y.times[0], y.times[-1])
    t = x.times[m]
    return x.values[m], np.interp(t, y.times, y.values), t


def _align_g(x, y, dt, scale):
    m = _inside(x.times, y.times[0], y.times[-1])
    t = x.times[m]
    if len(t) == 0:
        return np.empty(0), np.empty(0), t
    return x.values[m], kernel_mean(y.times, y.values, t, scale * dt), t


def _align_nv(x, y, dt, scale):
    limit = NV_LIMIT * dt
    used = np.zeros(len(y), dtype=bool)
    ty = y.times
    xi, yi = [], []
    for i, tx in enumerate(x.times):
        if tx < ty[0] or tx > ty[-1]:
            continue
        lo = np.searchsorted(ty, tx - limit, side="left")
        hi = np.searchsorted(ty, tx + limit, side="right")
        best, best_d = -1, np.inf
        for j in range(lo, hi):
            if used[j]:
                continue
            d = abs(ty[j] - tx)
            # strict comparison keeps the earlier observation on ties
            if d < best_d:
                best, best_d = j, d
        if best >= 0 and best_d <= limit:
            used[best] = True
            xi.append(i)
            yi.append(best)
    xi = np.asarray(xi, dtype=int)
    yi = np.asarray(yi, dtype=int)
    return x.values[xi], y.values[yi], x.times[xi]


def _align_s(x, y, dt, scale):
    lo, hi = overlap(x, y)
    width = scale * dt
    n_slots = int(np.floor((hi - lo) / width + 1e-9))
    if n_slots < 1:
        return np.empty(0), np.empty(0), np.empty(0)
    edges = lo + width * np.arange(n_slots + 1)

    def slot_means(ts):
        idx = np.searchsorted(edges, ts.times, side="right") - 1
        ok = (idx >= 0) & (idx < n_slots)
        counts = np.bincount(idx[ok], minlength=n_slots)
        sums = np.bincount(idx[ok], weights=ts.values[ok], minlength=n_slots)
        return counts, sums

    cx, sx = slot_means(x)
    cy, sy = slot_means(y)
    both = (cx > 0) & (cy > 0)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return sx[both] / cx[both], sy[both] / cy[both], centers[both]


_ALIGNERS = {"LI": _align_li, "G": _align_g, "NV": _align_nv, "S": _align_s}


def align(x: TimeSeries, y: TimeSeries, spec: AlignmentSpec, dt=None) -> AlignedPairs:
    """Concurrent (x, y) pairs using ``spec``; y is mapped onto x's axis."""
    overlap(x, y)
    if dt is None:
        dt = pair_dt(x, y)
    xv, yv, t = _ALIGNERS[spec.method](x, y, dt, spec.scale)
    if len(xv) < MIN_PAIRS:
        raise InsufficientOverlapError(
            f"{spec.label} alignment produced {len(xv)} pairs, need at least {MIN_PAIRS}")
    return AlignedPairs(np.asarray(xv, dtype=float), np.asarray(yv, dtype=float), t)


def gacf(ts: TimeSeries, lag=None, bandwidth=None) -> float:
    """Gaussian-kernel autocorrelation at ``lag`` for irregular sampling.

    Defaults: ``lag = mean_dt``, ``bandwidth = mean_dt / 4``.  Self pairs are
    excluded; pairs whose kernel weight is below exp(-40) are skipped.
    """
    if lag is None:
        lag = mean_dt(ts)
    if bandwidth is None:
        bandwidth = 0.25 * mean_dt(ts)
    if not lag > 0 or not bandwidth > 0:
        raise ParameterError("lag and bandwidth must be positive")
    t, v = ts.times, ts.values
    reach = lag + np.sqrt(80.0) * bandwidth
    num = 0.0
    den = 0.0
    for k in range(1, len(t)):
        d = t[k:] - t[:-k]
        if d.min() > reach:
            break
        prod = v[k:] * v[:-k]
        # ordered pairs (i, i+k) have difference +d, (i+k, i) have -d
        for diff in (d, -d):
            z = (diff - lag) / bandwidth
            w = np.where(np.abs(z) < np.sqrt(80.0), np.exp(-0.5 * z * z), 0.0)
            num += float(w @ prod)
            den += float(w.sum())
    if den < 1e-12:
        raise UndefinedPersistenceError(
            f"no observation pairs near lag {lag:g}; persistence is undefined")
    return num / den


def highpass(ts: TimeSeries, cutoff, renormalize=True) -> TimeSeries:
    """Remove variability with wavelengths longer than about ``cutoff``.

    Subtracts a Gaussian-kernel smooth of bandwidth ``cutoff / (2 pi)``.
    """
    if not cutoff > 0:
        raise ParameterError(f"cutoff must be positive, got {cutoff}")
    smooth = kernel_mean(ts.times, ts.values, ts.times, cutoff / (2 * np.pi))
    out = ts.with_values(ts.values - smooth)
    if np.ptp(out.values) <= 1e-12 * max(1.0, np.abs(ts.values).max()):
        raise ZeroVarianceError("no variance left after high-pass filtering")
    return normalize(out) if renormalize else out


@dataclass(frozen=True)
class Window:
    start: float
    end: float
    x: TimeSeries | None
    y: TimeSeries | None
    n_x: int
    n_y: int
    flag: str = ""

    @property
    def ok(self) -> bool:
        return not self.flag


MIN_WINDOW_OBS = 5


def _slice(ts, start, end):
    m = (ts.times >= start) & (ts.times < end)
    n = int(m.sum())
    if n < 2:
        return None, n
    return TimeSeries(ts.times[m], ts.values[m]), n


def windows(x: TimeSeries, y: TimeSeries, width, step, min_obs=MIN_WINDOW_OBS) -> list[Window]:
    """Sliding windows over the joint span; sparse windows are flagged, not dropped."""
    if not width > 0:
        raise ParameterError(f"window width must be positive, got {width}")
    if not 0 < step <= width:
        raise ParameterError(f"window step must lie in (0, width], got {step}")
    t0 = min(x.times[0], y.times[0])
    t1 = max(x.times[-1], y.times[-1])
    span = t1 - t0
    n_win = max(1, int(np.ceil((span - width) / step - 1e-9)) + 1)
    out = []
    for k in range(n_win):
        start = t0 + k * step
        end = start + width
        if k == n_win - 1 and end >= t1:
            # include the final observation in the closing window
            end = np.nextafter(max(end, t1), np.inf)
        xs, nx = _slice(x, start, end)
        ys, ny = _slice(y, start, end)
        flag = ""
        if nx < min_obs or ny < min_obs:
            flag = f"insufficient: {nx} x / {ny} y observations (< {min_obs})"
        out.append(Window(float(start), float(start + width), xs, ys, nx, ny, flag))
    return out


@dataclass(frozen=True)
class LagScan:
    lags: np.ndarray
    modes: np.ndarray
    summaries: tuple
    best_lag: float

    def rows(self):
        for lag, s in zip(self.lags, self.summaries):
            yield float(lag), s


def lag_scan(x: TimeSeries, y: TimeSeries, lags, spec: AlignmentSpec = AlignmentSpec("LI"),
             cfg=None, alpha=0.05) -> LagScan:
    """Posterior correlation as a function of the lag applied to ``y``.

    At lag ``L`` the record ``y`` is compared on the time axis ``t - L``, so a
    ``y`` that trails ``x`` by 7 units peaks at ``L = 7``.  Lags leaving fewer
    than ``MIN_PAIRS`` pairs are kept with a ``None`` summary.  Every lag
    runs its chain from the same seed, so mode differences between lags are
    not inflated by sampler noise.
    """
    from . import bayes

    cfg = cfg or bayes.InferenceConfig()
    lags = np.asarray(lags, dtype=float)
    if lags.ndim != 1 or len(lags) == 0:
        raise ParameterError("lags must be a non-empty 1-D sequence")
    xn = normalize(x)
    modes = np.full(len(lags), np.nan)
    summaries = []
    for k, lag in enumerate(lags):
        try:
            ys = normalize(y.shifted(-lag))
            pairs = align(xn, ys, spec)
        except (NoOverlapError, InsufficientOverlapError, ZeroVarianceError):
            summaries.append(None)
            continue
        s = bayes.summarize(bayes.metropolis(pairs, cfg), alpha)
        summaries.append(s)
        modes[k] = s.mode
    if np.all(np.isnan(modes)):
        raise InsufficientOverlapError(
            f"no lag in [{lags.min():g}, {lags.max():g}] leaves {MIN_PAIRS} concurrent pairs")
    return LagScan(lags, modes, tuple(summaries), float(lags[np.nanargmax(modes)]))

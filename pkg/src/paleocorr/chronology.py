"""Radiocarbon dating, calibration and linear-interpolation age models."""
from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    CalibrationError,
    CurveRangeError,
    DegenerateChronologyError,
    ParameterError,
    ParseError,
)

DEFAULT_GRID_STEP = 5.0
DEFAULT_MEAS_SIGMA = 50.0
DEFAULT_N_DATES = 6
TRUNCATE_BELOW = 1e-9


@dataclass(frozen=True)
class CalibrationCurve:
    cal_age: np.ndarray
    c14_age: np.ndarray
    curve_sigma: np.ndarray

    def __post_init__(self):
        cal = np.asarray(self.cal_age, dtype=float)
        c14 = np.asarray(self.c14_age, dtype=float)
        sig = np.asarray(self.curve_sigma, dtype=float)
        if not (cal.shape == c14.shape == sig.shape) or cal.ndim != 1 or len(cal) < 2:
            raise ParameterError("curve needs >= 2 knots with three equal-length columns")
        if np.any(np.diff(cal) <= 0):
            raise ParameterError("calibration curve cal ages must be strictly increasing")
        if np.any(sig < 0):
            raise ParameterError("calibration curve sigmas must be non-negative")
        for a in (cal, c14, sig):
            a.setflags(write=False)
        object.__setattr__(self, "cal_age", cal)
        object.__setattr__(self, "c14_age", c14)
        object.__setattr__(self, "curve_sigma", sig)

    def __len__(self):
        return len(self.cal_age)

    @property
    def cal_range(self) -> tuple[float, float]:
        return float(self.cal_age[0]), float(self.cal_age[-1])

    def lookup(self, cal_age):
        """Interpolated (c14 mean, sigma) at ``cal_age``; errors outside the curve."""
        t = np.asarray(cal_age, dtype=float)
        lo, hi = self.cal_range
        if np.any(t < lo) or np.any(t > hi):
            raise CurveRangeError(
                f"calendar age outside calibration curve range [{lo:g}, {hi:g}]")
        return (np.interp(t, self.cal_age, self.c14_age),
                np.interp(t, self.cal_age, self.curve_sigma))


_SPLIT = re.compile(r"[,\s]+")


def load_calibration_curve(source) -> CalibrationCurve:
    """Parse a three-column (cal_age, c14_age, sigma) text curve.

    ``source`` is a path, a text/byte stream, or raw bytes.  Columns may be
    separated by commas and/or whitespace; blank lines and lines starting
    with ``#`` are skipped.  Extra columns (as in IntCal files) are ignored.
    """
    path = None
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        path = str(source)
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")

    rows = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in _SPLIT.split(line) if f]
        if len(fields) < 3:
            raise ParseError(f"expected 3 numeric columns, got {len(fields)}", lineno, path)
        try:
            row = [float(f) for f in fields[:3]]
        except ValueError:
            raise ParseError(f"non-numeric value in {line!r}", lineno, path) from None
        if not np.all(np.isfinite(row)):
            raise ParseError("non-finite value", lineno, path)
        if row[2] < 0:
            raise ParseError(f"negative sigma {row[2]:g}", lineno, path)
        if rows and row[0] <= rows[-1][0]:
            raise ParseError(
                f"calendar age {row[0]:g} does not increase (previous {rows[-1][0]:g})",
                lineno, path)
        rows.append(row)
    if len(rows) < 2:
        raise ParseError("calibration curve needs at least 2 rows", None, path)
    arr = np.asarray(rows)
    return CalibrationCurve(arr[:, 0], arr[:, 1], arr[:, 2])


def toy_marine_curve(max_age=150000.0, step=20.0, reservoir=400.0, sigma=30.0) -> CalibrationCurve:
    """Deterministic piecewise-linear stand-in for a marine calibration curve.

    Radiocarbon ages run slightly slower than calendar ages and carry two
    superimposed wiggles; the local slope stays above 0.3, so the curve is
    strictly monotone and every date calibrates to a single connected region.
    """
    cal = np.arange(0.0, max_age + step, step)
    c14 = (reservoir + 0.9 * cal
           + 60.0 * np.sin(2 * np.pi * cal / 1700.0)
           + 25.0 * np.sin(2 * np.pi * cal / 430.0 + 1.0))
    sig = sigma * (1.0 + cal / 30000.0)
    return CalibrationCurve(cal, c14, sig)


def write_curve(curve: CalibrationCurve, fh):
    fh.write("# cal_age,c14_age,sigma\n")
    for row in zip(curve.cal_age, curve.c14_age, curve.curve_sigma):
        fh.write("{:.6g},{:.6g},{:.6g}\n".format(*row))


@dataclass(frozen=True)
class RadiocarbonDate:
    depth: float
    measured_c14: float
    meas_sigma: float

    def __post_init__(self):
        if not self.meas_sigma >= 0 or not np.isfinite(self.meas_sigma):
            raise ParameterError(f"measurement sigma must be >= 0, got {self.meas_sigma}")


def forward_date(cal_age, curve: CalibrationCurve, meas_sigma, rng, depth=np.nan) -> RadiocarbonDate:
    """Simulate a radiocarbon measurement of a sample with known calendar age."""
    mu, sig_curve = curve.lookup(cal_age)
    sd = np.sqrt(meas_sigma**2 + sig_curve**2)
    noise = rng.standard_normal() * sd if sd > 0 else 0.0
    return RadiocarbonDate(float(depth), float(mu + noise), float(meas_sigma))


@dataclass(frozen=True)
class CalibratedDate:
    """Discrete probability distribution over calendar age."""

    grid: np.ndarray
    prob: np.ndarray

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.prob)])

    @property
    def mean(self) -> float:
        return float(self.grid @ self.prob)

    @property
    def std(self) -> float:
        return float(np.sqrt(((self.grid - self.mean) ** 2) @ self.prob))

    def sample(self, rng, size=None):
        cdf = np.cumsum(self.prob)
        u = rng.random(size) * cdf[-1]
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
        return self.grid[idx]


def calibrate_date(date: RadiocarbonDate, curve: CalibrationCurve,
                   grid_step=DEFAULT_GRID_STEP) -> CalibratedDate:
    """Calendar-age distribution of a radiocarbon date on a regular grid."""
    if not grid_step > 0:
        raise ParameterError(f"grid_step must be positive, got {grid_step}")
    lo, hi = curve.cal_range
    grid = lo + grid_step * np.arange(int(np.floor((hi - lo) / grid_step + 1e-9)) + 1)
    mu, sig = curve.lookup(grid)
    var = date.meas_sigma**2 + sig**2
    resid = date.measured_c14 - mu
    zero = var == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.exp(-0.5 * resid**2 / var)
    if np.any(zero):
        # noiseless: mass on the grid node(s) closest to the measured value
        w[zero] = 0.0
        if not np.any(w > 0):
            r = np.abs(resid)
            tol = 1e-9 * max(1.0, abs(date.measured_c14))
            exact = zero & (r <= r[zero].min() + tol)
            if r[zero].min() <= grid_step * np.abs(np.gradient(mu, grid)).max():
                w[exact] = 1.0
    total = w.sum()
    if not total > 0:
        raise CalibrationError(
            f"radiocarbon age {date.measured_c14:g} +/- {date.meas_sigma:g} has no support "
            f"on the calibration curve ({curve.c14_age.min():g}..{curve.c14_age.max():g})")
    keep = w >= TRUNCATE_BELOW * w.max()
    return CalibratedDate(grid[keep], w[keep] / w[keep].sum())


@dataclass(frozen=True)
class AgeEnsemble:
    depths: np.ndarray
    realizations: np.ndarray
    median_ages: np.ndarray
    n_attempts: int = 0

    @property
    def n_real(self) -> int:
        return self.realizations.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return self.n_real / self.n_attempts if self.n_attempts else 1.0


def _draw_control_ages(cal, rng, retry_cap):
    """One stratigraphically ordered draw, or None if a date could not be placed."""
    ages = np.empty(len(cal))
    prev = -np.inf
    for k, c in enumerate(cal):
        for _ in range(retry_cap):
            a = c.sample(rng)
            if a > prev:
                break
        else:
            return None
        ages[k] = prev = a
    return ages


def build_age_ensemble(obs_depths, dates, curve: CalibrationCurve, n_real, rng,
                       grid_step=DEFAULT_GRID_STEP, retry_cap=50, max_attempts=None) -> AgeEnsemble:
    """Linear-interpolation age models from calibrated control points.

    Each realization draws one calendar age per dated depth (in depth order),
    redrawing any age that is not older than the one above it.  A date that
    cannot be placed within ``retry_cap`` draws causes the whole realization
    to be discarded and restarted.
    """
    if n_real < 1:
        raise ParameterError(f"n_real must be >= 1, got {n_real}")
    dates = sorted(dates, key=lambda d: d.depth)
    if len(dates) < 2:
        raise ParameterError("an age model needs at least 2 dated depths")
    ddepth = np.array([d.depth for d in dates])
    if np.any(np.diff(ddepth) <= 0):
        raise ParameterError("dated depths must be distinct")
    obs_depths = np.asarray(obs_depths, dtype=float)
    if obs_depths.min() < ddepth[0] or obs_depths.max() > ddepth[-1]:
        raise CurveRangeError(
            f"observation depths [{obs_depths.min():g}, {obs_depths.max():g}] exceed the "
            f"dated span [{ddepth[0]:g}, {ddepth[-1]:g}]; no extrapolation")
    cal = [calibrate_date(d, curve, grid_step) for d in dates]
    if max_attempts is None:
        max_attempts = 100 * n_real

    rows = []
    attempts = 0
    while len(rows) < n_real and attempts < max_attempts:
        attempts += 1
        ages = _draw_control_ages(cal, rng, retry_cap)
        if ages is not None:
            rows.append(np.interp(obs_depths, ddepth, ages))
    if len(rows) < n_real:
        raise DegenerateChronologyError(
            f"only {len(rows)} of {n_real} stratigraphically consistent age models "
            f"after {attempts} attempts")
    real = np.array(rows)
    return AgeEnsemble(obs_depths, real, np.median(real, axis=0), attempts)


def read_dating_table(source):
    """Read a ``depth,c14_age,c14_sigma`` CSV into RadiocarbonDate objects."""
    import csv

    path = None
    if isinstance(source, str) or hasattr(source, "__fspath__"):
        path = str(source)
        fh = open(source, newline="")
    else:
        fh = source
    try:
        reader = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        header = [h.strip() for h in next(reader, [])]
        if header != ["depth", "c14_age", "c14_sigma"]:
            raise ParseError(f"expected header depth,c14_age,c14_sigma, got {','.join(header)}",
                             1, path)
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                depth, c14, sig = (float(v) for v in row)
                out.append(RadiocarbonDate(depth, c14, sig))
            except (ValueError, ParameterError) as exc:
                raise ParseError(str(exc), lineno, path) from None
        return out
    finally:
        if path is not None:
            fh.close()


def write_dating_table(dates, fh):
    fh.write("depth,c14_age,c14_sigma\n")
    for d in dates:
        fh.write(f"{d.depth:.6g},{d.measured_c14:.6g},{d.meas_sigma:.6g}\n")

"""Pseudoproxy benchmark: scenarios, realizations, sweeps and metrics."""
from __future__ import annotations

import csv
import logging
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from . import bayes, chronology as chron, pseudoproxy as pp
from .alignment import DEFAULT_SPECS, AlignmentSpec, align, gacf, normalize
from .errors import DataError, NumericalError, ParameterError
from .timeseries import TimeSeries

log = logging.getLogger(__name__)

SCENARIOS = ("equal", "unequal", "agemodel_median", "agemodel_ensemble")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    n_ens: int = 10

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ParameterError(f"unknown scenario {self.kind!r}; expected one of {SCENARIOS}")
        if self.n_ens < 1:
            raise ParameterError("n_ens must be >= 1")


@dataclass(frozen=True)
class Geometry:
    """Forward-model settings that are not part of the swept parameters."""

    sample_interval: float = pp.DEFAULT_SAMPLE_INTERVAL
    dt: float = pp.DEFAULT_DT
    years_per_unit: float = 67.0
    top_age: float = 500.0
    n_dates: int = chron.DEFAULT_N_DATES
    meas_sigma: float = chron.DEFAULT_MEAS_SIGMA
    grid_step: float = chron.DEFAULT_GRID_STEP
    n_median: int = 101
    retry_cap: int = 50


@dataclass
class DatedCore:
    core: pp.Core
    dates: list
    ensemble: chron.AgeEnsemble
    geometry: Geometry

    def to_units(self, ages):
        g = self.geometry
        return (np.asarray(ages) - g.top_age) / g.years_per_unit

    def median_series(self) -> TimeSeries:
        return TimeSeries(self.to_units(self.ensemble.median_ages), self.core.series.values)

    def realization_series(self, k) -> TimeSeries:
        return TimeSeries(self.to_units(self.ensemble.realizations[k]), self.core.series.values)


def date_core(core: pp.Core, curve, rng, geometry=Geometry(), n_real=None) -> DatedCore:
    """Radiocarbon-date a core at evenly spaced depths and build its age ensemble."""
    g = geometry
    col = core.column
    depths = np.linspace(core.depths[0], core.depths[-1], g.n_dates)
    layer = np.searchsorted(col.layer_top_depths, depths, side="right") - 1
    ages = g.top_age + g.years_per_unit * col.layer_times[layer]
    dates = [chron.forward_date(a, curve, g.meas_sigma, rng, depth=d)
             for a, d in zip(ages, depths)]
    ens = chron.build_age_ensemble(core.depths, dates, curve, n_real or g.n_median, rng,
                                   grid_step=g.grid_step, retry_cap=g.retry_cap)
    return DatedCore(core, dates, ens, g)


@dataclass
class PairData:
    params: pp.PseudoproxyParams
    latent: pp.LatentPair
    x: pp.Core
    y_equal: pp.Core
    y: pp.Core
    x_dated: DatedCore | None = None
    y_dated: DatedCore | None = None
    chronology_error: str = ""

    def series(self, scenario: ScenarioSpec) -> list[tuple[TimeSeries, TimeSeries]]:
        """(x, y) series pairs on the time axis the scenario prescribes."""
        kind = scenario.kind
        if kind == "equal":
            return [(self.x.series, self.y_equal.series)]
        if kind == "unequal":
            return [(self.x.series, self.y.series)]
        if self.x_dated is None:
            raise chron.DegenerateChronologyError(self.chronology_error or "no age model")
        if kind == "agemodel_median":
            return [(self.x_dated.median_series(), self.y_dated.median_series())]
        n = min(scenario.n_ens, self.x_dated.ensemble.n_real)
        return [(self.x_dated.realization_series(k), self.y_dated.realization_series(k))
                for k in range(n)]


def simulate_pair(params: pp.PseudoproxyParams, rng, geometry=Geometry(), curve=None,
                  with_chronology=True, n_real=None) -> PairData:
    """All records one benchmark pair needs, from a single random stream."""
    g = geometry
    lat = pp.latent_pair(params, rng, g.sample_interval, g.dt)
    x = pp.make_core(lat.x, lat.times, params, rng, g.sample_interval)
    y_eq = pp.make_core(lat.y, lat.times, params, rng, g.sample_interval, column=x.column)
    y = pp.make_core(lat.y, lat.times, params, rng, g.sample_interval)
    data = PairData(params, lat, x, y_eq, y)
    if with_chronology:
        curve = curve or _default_curve()
        n_real = max(n_real or 0, g.n_median)
        try:
            data.x_dated = date_core(x, curve, rng, g, n_real)
            data.y_dated = date_core(y, curve, rng, g, n_real)
        except (chron.DegenerateChronologyError, chron.CalibrationError) as exc:
            data.x_dated = data.y_dated = None
            data.chronology_error = str(exc)
    return data


_CURVE = None


def _default_curve():
    global _CURVE
    if _CURVE is None:
        _CURVE = chron.toy_marine_curve()
    return _CURVE


@dataclass
class RealizationResult:
    pair_id: int
    params: pp.PseudoproxyParams
    method: AlignmentSpec
    scenario: ScenarioSpec
    mode: float = math.nan
    idr: float = math.nan
    sign: str = ""
    frac_positive: float = math.nan
    gacf_x: float = math.nan
    effective_n: int = 0
    n_draws: int = 0
    skipped: bool = False
    reason: str = ""
    posterior: bayes.PosteriorSample | None = field(default=None, repr=False)

    @property
    def coupling(self) -> float:
        return self.params.coupling

    @property
    def scaled_bias(self) -> float:
        return scaled_bias(self.mode, self.coupling)

    @property
    def scaled_idr(self) -> float:
        return self.idr / self.coupling


def _infer_one(x, y, method, cfg):
    pairs = align(normalize(x), normalize(y), method)
    return bayes.metropolis(pairs, cfg), pairs.effective_n


def run_realization(params, method: AlignmentSpec, scenario: ScenarioSpec, rng,
                    cfg=bayes.InferenceConfig(), data: PairData | None = None,
                    geometry=Geometry(), alpha=0.05, pair_id=0, keep_posterior=False):
    """Estimate the correlation of one pseudoproxy pair under one method and scenario.

    Alignment and chronology failures produce a result flagged ``skipped``.
    """
    if data is None:
        data = simulate_pair(params, rng, geometry,
                             with_chronology=scenario.kind.startswith("agemodel"),
                             n_real=scenario.n_ens)
    res = RealizationResult(pair_id, params, method, scenario)
    try:
        series = data.series(scenario)
        seeds = rng.integers(0, 2**63 - 1, size=len(series))
        samples, n_eff = [], []
        for (x, y), s in zip(series, seeds):
            post, n = _infer_one(x, y, method, cfg.with_seed(int(s)))
            samples.append(post)
            n_eff.append(n)
        post = bayes.pool_ensemble(samples)
        res.gacf_x = gacf(normalize(series[0][0] if len(series) == 1
                                    else data.x_dated.median_series()))
    except (DataError, NumericalError) as exc:
        res.skipped = True
        res.reason = f"{type(exc).__name__}: {exc}"
        return res
    summ = bayes.summarize(post, alpha)
    res.mode, res.idr, res.sign = summ.mode, summ.idr, summ.sign
    res.frac_positive = summ.frac_positive
    res.effective_n = int(round(np.mean(n_eff)))
    res.n_draws = len(post)
    if keep_posterior:
        res.posterior = post
    return res


# --- metrics -----------------------------------------------------------------

def scaled_bias(mode, c) -> float:
    """(mode - c) / c; a value of -1 means the coupling was missed entirely."""
    if c == 0:
        raise ParameterError("scaled bias is undefined for zero coupling; use mode - c")
    return (mode - c) / c


def _groups(results, key):
    out = defaultdict(list)
    for r in results:
        if not r.skipped:
            out[key(r)].append(r)
    return out


def _default_key(r):
    return (r.method.label, r.scenario.kind)


def rmse(results, key=_default_key) -> dict:
    """Root mean square of (mode - c) per group."""
    return {k: float(np.sqrt(np.mean([(r.mode - r.coupling) ** 2 for r in rs])))
            for k, rs in _groups(results, key).items()}


def sign_fractions(results, key=_default_key) -> dict:
    """(correct, wrong, indifferent) fractions per group; all couplings are positive."""
    out = {}
    for k, rs in _groups(results, key).items():
        n = len(rs)
        pos = sum(r.sign == bayes.POSITIVE for r in rs) / n
        neg = sum(r.sign == bayes.NEGATIVE for r in rs) / n
        out[k] = (pos, neg, 1.0 - pos - neg)
    return out


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(pos_scores, neg_scores, thresholds=None) -> RocCurve:
    """ROC of the rule ``score >= threshold`` with trapezoidal AUC.

    The default threshold set is every distinct score plus +inf, which
    traces the full empirical curve.
    """
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    if len(pos) == 0 or len(neg) == 0:
        raise ParameterError("ROC needs both positive and negative examples")
    if thresholds is None:
        thresholds = np.concatenate([[np.inf], np.unique(np.concatenate([pos, neg]))[::-1]])
    thr = np.sort(np.asarray(thresholds, dtype=float))[::-1]
    tpr = np.array([(pos >= t).mean() for t in thr])
    fpr = np.array([(neg >= t).mean() for t in thr])
    # close the curve at both corners so the area is well defined
    f = np.concatenate([[0.0], fpr, [1.0]])
    t = np.concatenate([[0.0], tpr, [1.0]])
    return RocCurve(thr, fpr, tpr, float(np.trapezoid(t, f)))


def sign_agreement(results) -> dict:
    """Per method pair: (fraction same sign, fraction opposite definite signs)."""
    cells = defaultdict(dict)
    for r in results:
        if not r.skipped:
            cells[(r.pair_id, r.scenario.kind)][r.method.label] = r.sign
    labels = sorted({m for c in cells.values() for m in c}, key=_method_order)
    out = {}
    for a, b in combinations(labels, 2):
        both = [(c[a], c[b]) for c in cells.values() if a in c and b in c]
        if not both:
            continue
        same = sum(s == t for s, t in both) / len(both)
        opposite = sum({s, t} == {bayes.POSITIVE, bayes.NEGATIVE} for s, t in both) / len(both)
        out[(a, b)] = (same, opposite)
    return out


def _method_order(label):
    labels = [s.label for s in DEFAULT_SPECS]
    return (labels.index(label) if label in labels else len(labels), label)


def decile_bins(lo, hi):
    """Lowest, middle and highest tenth of ``[lo, hi]``."""
    w = (hi - lo) / 10.0
    mid = 0.5 * (lo + hi)
    return {"low": (lo, lo + w), "mid": (mid - w / 2, mid + w / 2), "high": (hi - w, hi)}


GACF_EDGES = (-1.0, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

_BIN_FIELDS = {"coupling": "c", "n_obs": "n_obs", "drag": "theta"}


def _bin_key_funcs(ranges=pp.PARAM_RANGES):
    funcs = {"all": lambda r: "all"}
    for name, short in _BIN_FIELDS.items():
        bins = decile_bins(*ranges[name])

        def f(r, bins=bins, name=name):
            v = getattr(r.params, name)
            for label, (a, b) in bins.items():
                if a <= v <= b:
                    return label
            return None
        funcs[short] = f

    def g(r):
        v = r.gacf_x
        for a, b in zip(GACF_EDGES[:-1], GACF_EDGES[1:]):
            if a <= v < b or (b == GACF_EDGES[-1] and v == b):
                return f"[{a:g},{b:g})"
        return None
    funcs["gacf"] = g
    return funcs


METRIC_COLUMNS = ("bin_param", "bin", "method", "scenario", "n", "median_scaled_bias",
                  "q25_scaled_bias", "q75_scaled_bias", "median_scaled_idr", "rmse",
                  "frac_correct", "frac_wrong", "frac_indifferent")


def metrics_table(results, ranges=pp.PARAM_RANGES) -> list[dict]:
    """Grouped summaries by parameter bin, method and scenario."""
    rows = []
    for param, f in _bin_key_funcs(ranges).items():
        groups = _groups(results, lambda r: (f(r), r.method.label, r.scenario.kind))
        for (b, m, s), rs in sorted(groups.items(), key=lambda kv: (
                str(kv[0][0]), _method_order(kv[0][1]), SCENARIOS.index(kv[0][2]))):
            if b is None:
                continue
            sb = np.array([r.scaled_bias for r in rs])
            pos = sum(r.sign == bayes.POSITIVE for r in rs) / len(rs)
            neg = sum(r.sign == bayes.NEGATIVE for r in rs) / len(rs)
            rows.append({
                "bin_param": param, "bin": b, "method": m, "scenario": s, "n": len(rs),
                "median_scaled_bias": float(np.median(sb)),
                "q25_scaled_bias": float(np.percentile(sb, 25)),
                "q75_scaled_bias": float(np.percentile(sb, 75)),
                "median_scaled_idr": float(np.median([r.scaled_idr for r in rs])),
                "rmse": float(np.sqrt(np.mean([(r.mode - r.coupling) ** 2 for r in rs]))),
                "frac_correct": pos, "frac_wrong": neg, "frac_indifferent": 1.0 - pos - neg,
            })
    return rows


# --- sweep -----------------------------------------------------------------------

STORE_COLUMNS = ("pair_id", "method", "scale", "scenario", "c", "n_obs", "theta", "mu_s",
                 "gamma_s", "gacf", "mode", "idr", "sign", "effective_n", "skipped")
SCORE_COLUMNS = ("pair_id", "method", "scale", "scenario", "c", "frac_positive", "n_draws")

_PARAMS, _DATA, _CELL = 0, 1, 2


def _stable_key(text) -> int:
    return zlib.crc32(text.encode())


def pair_params(seed, pair_id, ranges=None, null=False) -> pp.PseudoproxyParams:
    """Parameter vector of benchmark pair ``pair_id``; independent of the sweep size."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_PARAMS, pair_id)))
    p = pp.draw_params(rng, seed=seed, ranges=ranges)
    return replace(p, coupling=0.0) if null else p


def _data_rng(seed, pair_id, null):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_DATA, pair_id, int(null))))


def _cell_rng(seed, pair_id, null, method, scenario):
    key = (_CELL, pair_id, int(null), _stable_key(method.label), _stable_key(scenario.kind))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class SuiteSettings:
    n_pairs: int = 200
    methods: tuple = DEFAULT_SPECS
    scenarios: tuple = tuple(ScenarioSpec(k) for k in SCENARIOS)
    seed: int = 0
    inference: bayes.InferenceConfig = bayes.InferenceConfig()
    geometry: Geometry = Geometry()
    ranges: tuple = tuple(sorted(pp.PARAM_RANGES.items()))
    null_sweep: bool = True
    alpha: float = 0.05

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ParameterError("n_pairs must be >= 1")


def run_pair(settings: SuiteSettings, pair_id: int, null=False) -> list[RealizationResult]:
    """Every method x scenario cell for one pair, in configuration order."""
    s = settings
    params = pair_params(s.seed, pair_id, dict(s.ranges), null)
    need_chron = any(sc.kind.startswith("agemodel") for sc in s.scenarios)
    n_ens = max((sc.n_ens for sc in s.scenarios), default=1)
    try:
        data = simulate_pair(params, _data_rng(s.seed, pair_id, null), s.geometry,
                             with_chronology=need_chron, n_real=n_ens)
    except DataError as exc:
        return [RealizationResult(pair_id, params, m, sc, skipped=True,
                                  reason=f"{type(exc).__name__}: {exc}")
                for m in s.methods for sc in s.scenarios]
    out = []
    for m in s.methods:
        for sc in s.scenarios:
            rng = _cell_rng(s.seed, pair_id, null, m, sc)
            out.append(run_realization(params, m, sc, rng, s.inference, data, s.geometry,
                                       s.alpha, pair_id))
    return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(round(v, 10))
    return str(v)


def store_row(r: RealizationResult) -> list[str]:
    p = r.params
    vals = [r.pair_id, r.method.method, r.method.scale, r.scenario.kind, p.coupling,
            p.n_obs, p.drag, p.sed_mean, p.sed_skew]
    if r.skipped:
        vals += [math.nan, math.nan, math.nan, "", "", 1]
    else:
        vals += [r.gacf_x, r.mode, r.idr, r.sign, r.effective_n, 0]
    return [_fmt(v) for v in vals]


def score_row(r: RealizationResult) -> list[str]:
    return [_fmt(v) for v in (r.pair_id, r.method.method, r.method.scale, r.scenario.kind,
                              r.params.coupling, r.frac_positive, r.n_draws)]


class CsvAppender:
    """Append-only CSV writer that flushes after every row."""

    def __init__(self, path, columns):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(columns)
        self.fh.flush()

    def write(self, row):
        self.writer.writerow(row)
        self.fh.flush()

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class SuiteResult:
    settings: SuiteSettings
    results: list
    null_results: list

    @property
    def n_skipped(self) -> int:
        return sum(r.skipped for r in self.results + self.null_results)

    def roc(self) -> dict:
        """ROC per (method, scenario) using the null sweep as negatives."""
        pos = defaultdict(list)
        neg = defaultdict(list)
        for r in self.results:
            if not r.skipped:
                pos[_default_key(r)].append(r.frac_positive)
        for r in self.null_results:
            if not r.skipped:
                neg[_default_key(r)].append(r.frac_positive)
        return {k: roc_curve(pos[k], neg[k]) for k in pos if neg.get(k)}


def _pair_job(args):
    settings, pair_id, null = args
    return run_pair(settings, pair_id, null)


def run_suite(settings: SuiteSettings, out_dir=None, workers=1, progress=None) -> SuiteResult:
    """Run every pair (and the coupling-free null twin of each pair, if enabled).

    Rows are written in (pair, method, scenario) order as soon as each pair
    finishes, so an interrupted run leaves a valid partial store.
    """
    from pathlib import Path

    jobs = [(settings, i, False) for i in range(settings.n_pairs)]
    if settings.null_sweep:
        jobs += [(settings, i, True) for i in range(settings.n_pairs)]

    writers = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        writers[False] = CsvAppender(out / "results.csv", STORE_COLUMNS)
        writers["scores"] = CsvAppender(out / "scores.csv", ("null",) + SCORE_COLUMNS)
        if settings.null_sweep:
            writers[True] = CsvAppender(out / "results_null.csv", STORE_COLUMNS)

    results, null_results = [], []
    try:
        if workers > 1:
            import multiprocessing as mp

            pool = mp.get_context("spawn").Pool(workers)
            it = pool.imap(_pair_job, jobs)
        else:
            pool = None
            it = map(_pair_job, jobs)
        for (_, pair_id, null), rows in zip(jobs, it):
            (null_results if null else results).extend(rows)
            if writers:
                for r in rows:
                    writers[null].write(store_row(r))
                    writers["scores"].write([str(int(null))] + score_row(r))
            if progress is not None:
                progress(pair_id, null, rows)
        if pool is not None:
            pool.close()
            pool.join()
    finally:
        for w in writers.values():
            w.close()
    suite = SuiteResult(settings, results, null_results)
    if out_dir is not None:
        write_summaries(suite, out_dir)
    return suite


def write_summaries(suite: SuiteResult, out_dir):
    from pathlib import Path

    out = Path(out_dir)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in metrics_table(suite.results, dict(suite.settings.ranges)):
            w.writerow({k: _fmt(v) for k, v in row.items()})
    with open(out / "roc.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("# negatives: parallel sweep with coupling c = 0 (assumed null class)",))
        w.writerow(("method", "scenario", "threshold", "fpr", "tpr", "auc"))
        for (m, s), roc in sorted(suite.roc().items(),
                                  key=lambda kv: (_method_order(kv[0][0]), SCENARIOS.index(kv[0][1]))):
            for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
                w.writerow((m, s, _fmt(float(t)), _fmt(float(f)), _fmt(float(p)), _fmt(roc.auc)))
    with open(out / "agreement.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method_a", "method_b", "same_sign", "opposite_sign"))
        for (a, b), (same, opp) in sign_agreement(suite.results).items():
            w.writerow((a, b, _fmt(same), _fmt(opp)))


def load_store(path) -> list[dict]:
    """Read a result store back as a list of dicts with typed values."""
    ints = {"pair_id", "n_obs", "effective_n", "skipped"}
    text = {"method", "scenario", "sign"}
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if k in text:
                    rec[k] = v
                elif v == "":
                    rec[k] = math.nan
                elif k in ints:
                    rec[k] = int(v)
                else:
                    rec[k] = float(v)
            rows.append(rec)
    return rows

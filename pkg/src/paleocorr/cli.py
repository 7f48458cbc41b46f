"""Command-line interface: ``paleocorr <verb> [options]``.

Exit status: 0 success, 2 configuration or usage error, 3 data error
(unreadable or inconsistent input), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bayes, chronology as chron, config as cfgmod, experiments as exp
from . import pseudoproxy as pp
from .alignment import align, highpass, lag_scan, normalize, windows
from .errors import ConfigError, DataError, NumericalError, ParameterError
from .records import read_ensemble, read_record, write_ensemble, write_record
from .timeseries import TimeSeries

log = logging.getLogger("paleocorr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _curve(cfg):
    path = cfg["paths"]["curve"]
    return chron.load_calibration_curve(path) if path else chron.toy_marine_curve()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 10))
    return str(v)


def _write_kv(path, mapping):
    with open(path, "w") as fh:
        for k, v in mapping.items():
            fh.write(f"{k}: {_fmt(v)}\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else _fmt(v) for v in row) + "\n")


# --- simulate ---------------------------------------------------------------------

def cmd_simulate(cfg, out: Path, args):
    s = cfg["simulate"]
    geo = cfgmod.geometry(cfg)
    try:
        params = pp.PseudoproxyParams(s["n_obs"], s["coupling"], s["drag"], s["sed_mean"],
                                      s["sed_skew"], seed=cfg["seed"])
    except ParameterError as exc:
        raise ConfigError(f"invalid simulate settings: {exc}") from None
    n_ens = cfg["scenario"]["n_ens"]
    data = exp.simulate_pair(params, _rng(cfg["seed"]), geo, _curve(cfg), n_real=n_ens)
    if data.x_dated is None:
        raise chron.DegenerateChronologyError(data.chronology_error)

    def years(t):
        return geo.top_age + geo.years_per_unit * np.asarray(t)

    lat = data.latent
    for name, values in (("a", lat.x), ("b", lat.y)):
        write_record(out / f"true_{name}.csv", values, age=years(lat.times),
                     meta={"name": f"latent {name}", "units": "years BP"})
    for name, dated in (("a", data.x_dated), ("b", data.y_dated)):
        core = dated.core
        write_record(out / f"record_{name}.csv", core.series.values, depth=core.depths,
                     age=years(core.series.times),
                     meta={"name": f"core {name}", "age": "true age, years BP",
                           "depth": "model depth units"})
        with open(out / f"dating_{name}.csv", "w") as fh:
            chron.write_dating_table(dated.dates, fh)
        ens = dated.ensemble
        write_ensemble(out / f"ensemble_{name}.csv", core.depths, ens.median_ages,
                       ens.realizations[:n_ens])
    log.info("simulated pair: %d and %d samples", len(data.x_dated.core.depths),
             len(data.y_dated.core.depths))


# --- calibrate ----------------------------------------------------------------------

def cmd_calibrate(cfg, out: Path, args):
    curve = _curve(cfg)
    dates = chron.read_dating_table(args.dating)
    if not dates:
        raise chron.CalibrationError(f"{args.dating}: no dates")
    grid_step = cfg["geometry"]["grid_step"]
    rows, dens = [], []
    for d in dates:
        c = chron.calibrate_date(d, curve, grid_step)
        cdf = np.cumsum(c.prob)
        lo = c.grid[np.searchsorted(cdf, 0.025)]
        hi = c.grid[min(np.searchsorted(cdf, 0.975), len(cdf) - 1)]
        rows.append((d.depth, d.measured_c14, d.meas_sigma, c.mode, c.mean, c.std, lo, hi))
        dens.extend((d.depth, a, p) for a, p in zip(c.grid, c.prob))
    _write_rows(out / "calibrated.csv",
                ("depth", "c14_age", "c14_sigma", "mode", "mean", "std", "q2.5", "q97.5"), rows)
    _write_rows(out / "calibrated_density.csv", ("depth", "cal_age", "prob"), dens)
    if args.record:
        rec = read_record(args.record)
        if rec.depth is None:
            raise DataError(f"{args.record}: a depth column is needed for an age model")
        n_real = args.n_real or cfg["scenario"]["n_ens"]
        ens = chron.build_age_ensemble(rec.depth, dates, curve, n_real, _rng(cfg["seed"]),
                                       grid_step, retry_cap=cfg["geometry"]["retry_cap"])
        write_ensemble(out / "ensemble.csv", rec.depth, ens.median_ages, ens.realizations)


# --- correlate / windows --------------------------------------------------------------

def _age_models(cfg, rec, dating, ens_file, n_ens, rng, label):
    """Candidate age axes for one record: a list of age arrays (length 1 without ensemble)."""
    if ens_file:
        depths, median, real = read_ensemble(ens_file)
        if rec.depth is None or len(depths) != len(rec.depth) or not np.allclose(depths, rec.depth):
            raise DataError(f"{ens_file}: ensemble depths do not match record {label}")
        if n_ens:
            if len(real) < n_ens:
                raise DataError(f"{ens_file}: holds {len(real)} realizations, {n_ens} requested")
            return list(real[:n_ens])
        return [median]
    if dating:
        if rec.depth is None:
            raise DataError(f"record {label} needs a depth column to use a dating table")
        g = cfg["geometry"]
        ens = chron.build_age_ensemble(
            rec.depth, chron.read_dating_table(dating), _curve(cfg),
            max(n_ens, g["n_median"]), rng, g["grid_step"], retry_cap=g["retry_cap"])
        return list(ens.realizations[:n_ens]) if n_ens else [ens.median_ages]
    if rec.age is None:
        raise DataError(f"record {label} has no age column; give a dating table or ensemble")
    return [rec.age] * max(n_ens, 1)


def _prepare(ts, cfg):
    cutoff = cfg["correlate"]["detrend_cutoff"]
    ts = normalize(ts)
    return highpass(ts, cutoff) if cutoff else ts


def _load_pairs(cfg, args):
    axis = cfg["correlate"]["axis"]
    n_ens = args.ensemble if args.ensemble is not None else cfg["correlate"]["ensemble"]
    if n_ens < 0:
        raise ConfigError("ensemble size must be >= 0")
    a, b = read_record(args.record_a), read_record(args.record_b)
    if axis == "depth":
        return [(a.series("depth"), b.series("depth"))], n_ens
    if axis != "age":
        raise ConfigError(f"correlate.axis must be 'age' or 'depth', got {axis!r}")
    rng = _rng(cfg["seed"], 1)
    ages_a = _age_models(cfg, a, args.dating_a, args.ensemble_a, n_ens, rng, "a")
    ages_b = _age_models(cfg, b, args.dating_b, args.ensemble_b, n_ens, rng, "b")
    out = []
    for ta, tb in zip(ages_a, ages_b):
        # age realizations are ordered by depth; time series want increasing time
        ia, ib = np.argsort(ta, kind="stable"), np.argsort(tb, kind="stable")
        out.append((TimeSeries(ta[ia], a.values[ia]), TimeSeries(tb[ib], b.values[ib])))
    return out, n_ens


def _chain_seeds(cfg, n):
    return np.random.SeedSequence(cfg["seed"], spawn_key=(2,)).generate_state(n, dtype=np.uint64)


def cmd_correlate(cfg, out: Path, args):
    spec = cfgmod.alignment_spec(cfg)
    inf = cfgmod.inference_config(cfg)
    pairs_list, n_ens = _load_pairs(cfg, args)
    seeds = _chain_seeds(cfg, len(pairs_list))
    samples, n_eff = [], []
    for (x, y), s in zip(pairs_list, seeds):
        pairs = align(_prepare(x, cfg), _prepare(y, cfg), spec)
        samples.append(bayes.metropolis(pairs, inf.with_seed(int(s))))
        n_eff.append(pairs.effective_n)
    post = bayes.pool_ensemble(samples)
    summ = bayes.summarize(post, cfg["inference"]["alpha"])
    _write_kv(out / "summary.txt", {
        "mode": summ.mode, "idr": summ.idr, "q5": summ.q5, "q95": summ.q95,
        "sign": summ.sign, "frac_positive": summ.frac_positive,
        "effective_n": int(round(float(np.mean(n_eff)))), "n_draws": summ.n_draws,
        "n_age_models": len(samples), "method": spec.label,
        "converged": str(all(s.converged for s in samples)).lower(),
    })
    with open(out / "draws.csv", "w") as fh:
        fh.write("rho\n")
        for v in post.rho_draws:
            fh.write(f"{v:.10g}\n")
    print(f"mode {summ.mode:.3f}  IDR {summ.idr:.3f}  sign {summ.sign}  "
          f"n_eff {int(round(float(np.mean(n_eff))))}  draws {summ.n_draws}")


def cmd_windows(cfg, out: Path, args):
    w = cfg["windows"]
    spec = cfgmod.alignment_spec(cfg)
    inf = cfgmod.inference_config(cfg)
    alpha = cfg["inference"]["alpha"]
    args.ensemble = 0
    (x, y), = _load_pairs(cfg, args)[0][:1]
    x, y = _prepare(x, cfg), _prepare(y, cfg)
    lag = 0.0
    if w["lag_scan"]:
        lags = np.arange(w["lag_min"], w["lag_max"] + 0.5 * w["lag_step"], w["lag_step"])
        scan = lag_scan(x, y, lags, spec, inf, alpha)
        lag = scan.best_lag
        _write_rows(out / "lags.csv", ("lag", "mode", "q5", "q95", "sign"),
                    [(L, s.mode, s.q5, s.q95, s.sign) if s else (L, None, None, None, "")
                     for L, s in scan.rows()])
        print(f"best lag {lag:g}")
        y = y.shifted(-lag)
    rows = []
    wins = windows(x, y, w["width"], w["step"], w["min_obs"])
    seeds = _chain_seeds(cfg, len(wins))
    for win, s in zip(wins, seeds):
        row = [win.start, win.end, None, None, None, "", win.n_x, win.n_y, win.flag]
        if win.ok:
            try:
                pairs = align(normalize(win.x), normalize(win.y), spec)
                summ = bayes.summarize(bayes.metropolis(pairs, inf.with_seed(int(s))), alpha)
                row[2:6] = [summ.mode, summ.q5, summ.q95, summ.sign]
            except (DataError, NumericalError) as exc:
                row[8] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    _write_rows(out / "windows.csv",
                ("start", "end", "mode", "q5", "q95", "sign", "n_a", "n_b", "flag"), rows)
    print(f"{len(rows)} windows, {sum(not r[8] for r in rows)} evaluated, lag {lag:g}")


# --- experiment ----------------------------------------------------------------------

def cmd_experiment(cfg, out: Path, args):
    settings = cfgmod.suite_settings(cfg)
    if args.n_pairs is not None:
        if args.n_pairs < 1:
            raise ConfigError("n_pairs must be >= 1")
        from dataclasses import replace
        settings = replace(settings, n_pairs=args.n_pairs)
    total = settings.n_pairs * (2 if settings.null_sweep else 1)
    done = [0]

    def progress(pair_id, null, rows):
        done[0] += 1
        skipped = sum(r.skipped for r in rows)
        print(f"[{done[0]}/{total}] pair {pair_id}{' (null)' if null else ''}"
              f"{f', {skipped} skipped' if skipped else ''}", file=sys.stderr, flush=True)

    suite = exp.run_suite(settings, out, workers=cfg["workers"], progress=progress)
    fr = exp.sign_fractions(suite.results)
    sb = {}
    for r in suite.results:
        if not r.skipped:
            sb.setdefault((r.method.label, r.scenario.kind), []).append(r.scaled_bias)
    print(f"{'method':<9} {'scenario':<18} {'med.bias':>8} {'correct':>8} {'indiff':>8}")
    for key in sorted(sb, key=lambda k: (exp._method_order(k[0]), exp.SCENARIOS.index(k[1]))):
        c, _, i = fr[key]
        print(f"{key[0]:<9} {key[1]:<18} {np.median(sb[key]):8.3f} {c:8.3f} {i:8.3f}")
    print(f"skipped realizations: {suite.n_skipped}")


# --- entry point ---------------------------------------------------------------------

def _common(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="YAML config file")
    parser.add_argument("--seed", type=int, default=d, help="master seed")
    parser.add_argument("--out", default=d, help="output directory (default: out)")
    parser.add_argument("--workers", type=int, default=d, help="parallel worker processes")
    parser.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)


def build_parser():
    p = argparse.ArgumentParser(prog="paleocorr", description=__doc__.splitlines()[0],
                                epilog=f"Config keys may be overridden by {cfgmod.ENV_PREFIX}"
                                       "SECTION__KEY environment variables.")
    _common(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate one pseudoproxy pair with dating and age models")
    _common(s, suppress=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="calibrate a dating table, optionally build an age ensemble")
    _common(c, suppress=True)
    c.add_argument("dating", help="CSV with header depth,c14_age,c14_sigma")
    c.add_argument("--record", help="record file whose depths receive the age ensemble")
    c.add_argument("--n-real", type=int, help="number of age realizations")
    c.set_defaults(func=cmd_calibrate)

    for name, func, hlp in (("correlate", cmd_correlate, "posterior correlation of two records"),
                            ("windows", cmd_windows, "sliding-window correlation")):
        q = sub.add_parser(name, help=hlp)
        _common(q, suppress=True)
        q.add_argument("record_a")
        q.add_argument("record_b")
        q.add_argument("--dating-a", help="dating table for record a (age model from depth)")
        q.add_argument("--dating-b", help="dating table for record b")
        q.add_argument("--ensemble-a", help="age ensemble file for record a")
        q.add_argument("--ensemble-b", help="age ensemble file for record b")
        if name == "correlate":
            q.add_argument("--ensemble", type=int,
                           help="pool inference over this many age realizations (0: median)")
        q.set_defaults(func=func)

    e = sub.add_parser("experiment", help="run the pseudoproxy benchmark sweep")
    _common(e, suppress=True)
    e.add_argument("--n-pairs", type=int, help="override sweep.n_pairs")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            overrides["workers"] = args.workers
        cfg = cfgmod.load_config(args.config, overrides)
        out = Path(args.out or "out")
        out.mkdir(parents=True, exist_ok=True)
        cfgmod.dump_config(cfg, out / cfgmod.RESOLVED_NAME)
        args.func(cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

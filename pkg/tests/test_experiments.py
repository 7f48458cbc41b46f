import csv
from dataclasses import replace
from itertools import product

import numpy as np
import pytest

from paleocorr import bayes, experiments as exp, pseudoproxy as pp
from paleocorr.alignment import AlignmentSpec, normalize
from paleocorr.errors import ParameterError

LI = AlignmentSpec("LI")
FAST = bayes.InferenceConfig(n_steps=6000, n_keep=500)


def fake(mode, c=0.5, sign=bayes.POSITIVE, method=LI, kind="equal", pair_id=0, **kw):
    params = pp.PseudoproxyParams(100, c, 0.3, 0.3, 1.5)
    return exp.RealizationResult(pair_id, params, method, exp.ScenarioSpec(kind), mode=mode,
                                 idr=0.2, sign=sign, **kw)


class TestMetrics:
    @pytest.mark.parametrize("mode,c,expected", [(0.0, 0.3, -1.0), (0.3, 0.3, 0.0), (0.6, 0.3, 1.0)])
    def test_scaled_bias(self, mode, c, expected):
        assert exp.scaled_bias(mode, c) == pytest.approx(expected)

    def test_scaled_bias_zero_coupling(self):
        with pytest.raises(ParameterError):
            exp.scaled_bias(0.1, 0.0)

    def test_rmse(self):
        key = ("LI", "equal")
        assert exp.rmse([fake(0.5), fake(0.5)])[key] == 0.0
        assert exp.rmse([fake(0.6), fake(0.4), fake(0.6), fake(0.4)])[key] == pytest.approx(0.1)
        assert exp.rmse([fake(0.5), fake(0.7)])[key] == pytest.approx(np.sqrt(0.02))

    def test_sign_fractions(self):
        key = ("LI", "equal")
        assert exp.sign_fractions([fake(0.5)] * 3)[key] == (1.0, 0.0, 0.0)
        rs = [fake(0.5, sign=s) for s in (bayes.POSITIVE, bayes.NEGATIVE,
                                          bayes.INDIFFERENT, bayes.INDIFFERENT)]
        assert exp.sign_fractions(rs)[key] == pytest.approx((0.25, 0.25, 0.5))

    def test_skipped_excluded(self):
        rs = [fake(0.5), fake(np.nan, skipped=True)]
        assert exp.rmse(rs)[("LI", "equal")] == 0.0


def pairwise_auc(pos, neg):
    return np.mean([1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg])


class TestRoc:
    def test_eight_ninths(self):
        pos, neg = [0.9, 0.8, 0.4], [0.6, 0.3, 0.1]
        roc = exp.roc_curve(pos, neg)
        assert pairwise_auc(pos, neg) == pytest.approx(8 / 9)
        assert roc.auc == pytest.approx(8 / 9)

    def test_separated(self):
        assert exp.roc_curve([0.9, 0.95, 1.0], [0.1, 0.2]).auc == 1.0

    def test_no_skill(self, rng):
        s = rng.uniform(size=4000)
        roc = exp.roc_curve(s[:2000], s[2000:])
        assert abs(roc.auc - 0.5) < 0.03

    def test_ties_and_oracle(self, rng):
        pos = rng.integers(0, 10, 200) / 10
        neg = rng.integers(0, 8, 150) / 10
        assert exp.roc_curve(pos, neg).auc == pytest.approx(pairwise_auc(pos, neg))

    def test_single_class(self):
        with pytest.raises(ParameterError):
            exp.roc_curve([0.5], [])

    def test_monotone(self, rng):
        roc = exp.roc_curve(rng.uniform(size=50), rng.uniform(size=50))
        assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)


def test_sign_agreement():
    g = AlignmentSpec("G", 0.5)
    s = AlignmentSpec("S", 2.0)
    P, N, I = bayes.POSITIVE, bayes.NEGATIVE, bayes.INDIFFERENT
    rs = []
    for pid, (a, b, c) in enumerate([(P, P, I), (P, P, N), (I, I, I), (N, I, P)]):
        rs += [fake(0, sign=a, pair_id=pid), fake(0, sign=b, method=g, pair_id=pid),
               fake(0, sign=c, method=s, pair_id=pid)]
    agree = exp.sign_agreement(rs)
    assert agree[("LI", "G(0.5)")] == (0.75, 0.0)
    assert agree[("LI", "S(2)")] == (0.25, 0.5)


class TestRealization:
    def test_equal_scenario_recovers_coupling(self):
        params = pp.PseudoproxyParams(300, 0.9, 0.1, 0.35, 1.5)
        hits, gaps = 0, []
        for k in range(50):
            rng = np.random.default_rng(k)
            data = exp.simulate_pair(params, rng, with_chronology=False)
            r = exp.run_realization(params, LI, exp.ScenarioSpec("equal"), rng, FAST, data)
            x, y = data.series(exp.ScenarioSpec("equal"))[0]
            assert np.array_equal(x.times, y.times)
            pearson = np.corrcoef(x.values, y.values)[0, 1]
            gaps.append(abs(r.mode - pearson))
            hits += abs(r.mode - 0.9) < 0.15
        assert hits >= 45
        assert np.median(gaps) < 0.03

    def test_unequal_weak_persistence_misses_coupling(self):
        sb = []
        for k in range(30):
            params = pp.PseudoproxyParams(150, 0.6, 0.9, 0.35, 1.5)
            r = exp.run_realization(params, LI, exp.ScenarioSpec("unequal"),
                                    np.random.default_rng(k), FAST)
            sb.append(r.scaled_bias)
        assert -1.2 <= np.median(sb) <= -0.6

    def test_ensemble_pooling_size(self, rng):
        params = pp.PseudoproxyParams(80, 0.8, 0.05, 0.35, 1.5)
        r = exp.run_realization(params, LI, exp.ScenarioSpec("agemodel_ensemble", 10), rng,
                                FAST, keep_posterior=True)
        assert not r.skipped
        assert r.n_draws == 10 * FAST.n_keep
        assert r.posterior.provenance == "pooled(10)"

    def test_skip_record(self, rng):
        params = pp.PseudoproxyParams(4, 0.8, 0.05, 0.35, 1.5)
        r = exp.run_realization(params, AlignmentSpec("S", 2.0), exp.ScenarioSpec("unequal"),
                                rng, FAST)
        assert r.skipped and "Overlap" in r.reason

    def test_scenario_validation(self):
        with pytest.raises(ParameterError):
            exp.ScenarioSpec("other")
        with pytest.raises(ParameterError):
            exp.ScenarioSpec("agemodel_ensemble", 0)


def small_settings(**kw):
    base = dict(n_pairs=2, methods=(LI, AlignmentSpec("S", 2.0)),
                scenarios=(exp.ScenarioSpec("equal"), exp.ScenarioSpec("agemodel_ensemble", 3)),
                inference=FAST, ranges=tuple(sorted({**pp.PARAM_RANGES, "n_obs": (40, 60)}.items())))
    base.update(kw)
    return exp.SuiteSettings(**base)


class TestSuite:
    def test_single_cell(self, tmp_path):
        s = small_settings(n_pairs=1, methods=(LI,), scenarios=(exp.ScenarioSpec("equal"),),
                           null_sweep=False)
        exp.run_suite(s, tmp_path)
        rows = exp.load_store(tmp_path / "results.csv")
        assert len(rows) == 1
        with open(tmp_path / "results.csv") as fh:
            assert fh.readline().strip() == ",".join(exp.STORE_COLUMNS)

    def test_deterministic(self, tmp_path):
        s = small_settings()
        exp.run_suite(s, tmp_path / "a")
        exp.run_suite(s, tmp_path / "b")
        for name in ("results.csv", "results_null.csv", "scores.csv", "metrics.csv", "roc.csv",
                     "agreement.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_cell_independent_of_ordering(self):
        s = small_settings(null_sweep=False)
        flipped = replace(s, methods=s.methods[::-1], scenarios=s.scenarios[::-1])
        alone = replace(s, methods=s.methods[1:], scenarios=s.scenarios[1:])

        def by_cell(res):
            return {(r.pair_id, r.method.label, r.scenario.kind): (r.mode, r.idr, r.sign)
                    for r in res.results}
        a = by_cell(exp.run_suite(s))
        assert a == by_cell(exp.run_suite(flipped))
        b = by_cell(exp.run_suite(alone))
        assert all(a[k] == v for k, v in b.items())

    def test_pair_params_independent_of_size(self):
        assert exp.pair_params(3, 5) == exp.pair_params(3, 5)
        assert exp.pair_params(3, 5).coupling != exp.pair_params(3, 6).coupling
        assert exp.pair_params(3, 5, null=True).coupling == 0.0

    def test_interrupted_store_is_valid(self, tmp_path):
        s = small_settings(n_pairs=3, null_sweep=False)

        def stop(pair_id, null, rows):
            if pair_id == 1:
                raise KeyboardInterrupt

        with pytest.raises(KeyboardInterrupt):
            exp.run_suite(s, tmp_path, progress=stop)
        rows = exp.load_store(tmp_path / "results.csv")
        assert len(rows) == 2 * len(s.methods) * len(s.scenarios)
        assert [r["pair_id"] for r in rows] == sorted(r["pair_id"] for r in rows)

    def test_metrics_and_roc_files(self, tmp_path):
        res = exp.run_suite(small_settings(n_pairs=3), tmp_path)
        for row in exp.metrics_table(res.results):
            assert row["frac_correct"] + row["frac_wrong"] + row["frac_indifferent"] == \
                pytest.approx(1.0, abs=1e-12)
        with open(tmp_path / "roc.csv") as fh:
            assert fh.readline().startswith("# negatives")
            header = next(csv.reader(fh))
        assert header == ["method", "scenario", "threshold", "fpr", "tpr", "auc"]
        assert set(res.roc()) == set(product(["LI", "S(2)"], ["equal", "agemodel_ensemble"]))

    def test_decile_bins(self):
        bins = exp.decile_bins(0.1, 0.9)
        assert bins["low"] == pytest.approx((0.1, 0.18))
        assert bins["mid"] == pytest.approx((0.46, 0.54))
        assert bins["high"] == pytest.approx((0.82, 0.9))


def test_gacf_recorded_for_persistent_pairs():
    params = pp.PseudoproxyParams(200, 0.5, 0.01, 0.35, 1.5)
    data = exp.simulate_pair(params, np.random.default_rng(0), with_chronology=False)
    from paleocorr.alignment import gacf
    assert gacf(normalize(data.x.series)) > 0.7

import numpy as np
import pytest

from paleocorr import cli, pseudoproxy as pp
from paleocorr.records import read_record, write_record


def run(*argv):
    return cli.main([str(a) for a in argv])


def write_yaml(path, text):
    path.write_text(text)
    return path


FAST = "inference:\n  n_steps: 6000\n  n_keep: 500\n"


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--out", out, "--seed", 4) == 0
    return out


class TestSimulate:
    def test_manifest(self, sim):
        for name in ("record_a.csv", "record_b.csv", "dating_a.csv", "dating_b.csv",
                     "config.resolved.yaml", "true_a.csv", "true_b.csv",
                     "ensemble_a.csv", "ensemble_b.csv"):
            assert (sim / name).exists(), name

    def test_deterministic(self, sim, tmp_path):
        assert run("simulate", "--out", tmp_path, "--seed", 4) == 0
        for f in sim.iterdir():
            assert (tmp_path / f.name).read_bytes() == f.read_bytes(), f.name

    def test_unit_coupling(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", "simulate:\n  coupling: 1.0\n  n_obs: 40\n")
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
        a = read_record(tmp_path / "o" / "true_a.csv")
        b = read_record(tmp_path / "o" / "true_b.csv")
        assert np.array_equal(a.values, b.values)

    def test_reproducible_from_resolved_config(self, sim, tmp_path):
        assert run("simulate", "--config", sim / "config.resolved.yaml", "--out", tmp_path) == 0
        assert (tmp_path / "record_b.csv").read_bytes() == (sim / "record_b.csv").read_bytes()


class TestCorrelate:
    def test_self(self, sim, tmp_path):
        assert run("correlate", sim / "record_a.csv", sim / "record_a.csv", "--out", tmp_path) == 0
        summary = dict(line.split(": ") for line in (tmp_path / "summary.txt").read_text().splitlines())
        assert float(summary["mode"]) > 0.95
        assert summary["sign"] == "positive"
        assert set(summary) >= {"mode", "idr", "sign", "effective_n", "n_draws"}

    def test_ensemble_draw_count(self, sim, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", FAST)
        args = ["correlate", sim / "record_a.csv", sim / "record_b.csv", "--config", cfg,
                "--dating-a", sim / "dating_a.csv", "--dating-b", sim / "dating_b.csv"]
        assert run(*args, "--out", tmp_path / "one") == 0
        assert run(*args, "--ensemble", 10, "--out", tmp_path / "ten") == 0
        n1 = len((tmp_path / "one" / "draws.csv").read_text().splitlines()) - 1
        n10 = len((tmp_path / "ten" / "draws.csv").read_text().splitlines()) - 1
        assert n10 == 10 * n1 == 5000

    def test_ensemble_files(self, sim, tmp_path):
        assert run("correlate", sim / "record_a.csv", sim / "record_b.csv",
                   "--ensemble-a", sim / "ensemble_a.csv", "--ensemble-b", sim / "ensemble_b.csv",
                   "--ensemble", 3, "--out", tmp_path) == 0

    def test_independent_noise_mostly_indifferent(self, tmp_path):
        # under independence the sign rule fires on either side with probability
        # about alpha each, so the oracle indifferent rate is 1 - 2 alpha
        cfg = write_yaml(tmp_path / "c.yaml", FAST)
        n_runs, indifferent = 40, 0
        for seed in range(n_runs):
            rng = np.random.default_rng(seed)
            t = np.arange(100.0) * 50
            write_record(tmp_path / "a.csv", rng.standard_normal(100), age=t)
            write_record(tmp_path / "b.csv", rng.standard_normal(100), age=t)
            assert run("correlate", tmp_path / "a.csv", tmp_path / "b.csv", "--config", cfg,
                       "--seed", seed, "--out", tmp_path / "o") == 0
            indifferent += "sign: indifferent" in (tmp_path / "o" / "summary.txt").read_text()
        p = 0.9
        assert indifferent / n_runs >= p - 3 * np.sqrt(p * (1 - p) / n_runs)

    def test_highpass_option(self, sim, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", FAST + "correlate:\n  detrend_cutoff: 2000\n")
        assert run("correlate", sim / "record_a.csv", sim / "record_b.csv", "--config", cfg,
                   "--out", tmp_path) == 0


class TestWindows:
    @staticmethod
    def coupled(tmp_path, n=400, span=20_000.0, c=0.95):
        rng = np.random.default_rng(1)
        t = np.linspace(0, span, n)
        x = pp.generate_ou(n, 1.0, 0.2, rng)
        y = pp.couple(x, c, rng, drag=0.2)
        write_record(tmp_path / "a.csv", x, age=t)
        write_record(tmp_path / "b.csv", y, age=t)
        return tmp_path / "a.csv", tmp_path / "b.csv"

    def test_rows_and_signs(self, tmp_path):
        a, b = self.coupled(tmp_path)
        cfg = write_yaml(tmp_path / "c.yaml", FAST)
        assert run("windows", a, b, "--config", cfg, "--out", tmp_path / "o") == 0
        lines = (tmp_path / "o" / "windows.csv").read_text().splitlines()
        assert lines[0] == "start,end,mode,q5,q95,sign,n_a,n_b,flag"
        rows = [r.split(",") for r in lines[1:]]
        assert len(rows) == 7
        assert all(r[5] == "positive" for r in rows if not r[8])

    def test_sparse_window_flagged(self, tmp_path):
        t = np.concatenate([[0.0, 100.0], np.linspace(5000, 9900, 60)])
        v = np.random.default_rng(0).standard_normal(len(t))
        write_record(tmp_path / "a.csv", v, age=t)
        write_record(tmp_path / "b.csv", v[::-1].copy(), age=t)
        cfg = write_yaml(tmp_path / "c.yaml", FAST)
        assert run("windows", tmp_path / "a.csv", tmp_path / "b.csv", "--config", cfg,
                   "--out", tmp_path / "o") == 0
        first = (tmp_path / "o" / "windows.csv").read_text().splitlines()[1].split(",")
        assert first[6] == "2" and first[8].startswith("insufficient")

    def test_lag_scan_first(self, tmp_path):
        a, b = self.coupled(tmp_path)
        cfg = write_yaml(tmp_path / "c.yaml", FAST + "windows:\n  lag_scan: true\n"
                         "  lag_min: -200\n  lag_max: 200\n  lag_step: 10\n")
        assert run("windows", a, b, "--config", cfg, "--out", tmp_path / "o") == 0
        assert (tmp_path / "o" / "lags.csv").exists()


class TestExperiment:
    CFG = ("sweep:\n  n_pairs: 2\n  methods: [LI]\n  scenarios: [equal]\n  null_sweep: false\n"
           "  ranges:\n    n_obs: [30, 50]\n" + FAST)

    def test_two_rows_and_rerun(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", self.CFG)
        assert run("experiment", "--config", cfg, "--out", tmp_path / "a") == 0
        assert run("experiment", "--config", cfg, "--out", tmp_path / "b") == 0
        store = (tmp_path / "a" / "results.csv").read_text().splitlines()
        assert len(store) == 3
        for name in ("results.csv", "metrics.csv", "config.resolved.yaml"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_workers_do_not_change_results(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", self.CFG)
        assert run("experiment", "--config", cfg, "--out", tmp_path / "a") == 0
        assert run("experiment", "--config", cfg, "--workers", 2, "--out", tmp_path / "b") == 0
        assert (tmp_path / "a" / "results.csv").read_bytes() == \
            (tmp_path / "b" / "results.csv").read_bytes()

    def test_n_pairs_flag(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", self.CFG)
        assert run("experiment", "--config", cfg, "--n-pairs", 1, "--out", tmp_path) == 0
        assert len((tmp_path / "results.csv").read_text().splitlines()) == 2


class TestCalibrate:
    def test_outputs(self, sim, tmp_path):
        assert run("calibrate", sim / "dating_a.csv", "--record", sim / "record_a.csv",
                   "--n-real", 5, "--out", tmp_path) == 0
        rows = (tmp_path / "calibrated.csv").read_text().splitlines()
        assert len(rows) == 7
        header = (tmp_path / "ensemble.csv").read_text().splitlines()[0]
        assert header == "depth,median,r0,r1,r2,r3,r4"


class TestExitCodes:
    def test_config_error(self, tmp_path):
        cfg = write_yaml(tmp_path / "c.yaml", "inferense: {}\n")
        assert run("simulate", "--config", cfg, "--out", tmp_path) == cli.EXIT_CONFIG

    def test_env_config_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PALEOCORR_SEED", "abc")
        assert run("simulate", "--out", tmp_path) == cli.EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert run("correlate", tmp_path / "no.csv", tmp_path / "no.csv",
                   "--out", tmp_path) == cli.EXIT_DATA

    def test_no_overlap(self, tmp_path):
        write_record(tmp_path / "a.csv", [1.0, 2.0, 0.5, 3.0], age=[0, 1, 2, 3])
        write_record(tmp_path / "b.csv", [1.0, 2.0, 0.5, 3.0], age=[10, 11, 12, 13])
        assert run("correlate", tmp_path / "a.csv", tmp_path / "b.csv",
                   "--out", tmp_path) == cli.EXIT_DATA

    def test_numerical(self, tmp_path):
        write_record(tmp_path / "a.csv", [1.0, 1.0, 1.0, 1.0], age=[0, 1, 2, 3])
        write_record(tmp_path / "b.csv", [1.0, 2.0, 0.5, 3.0], age=[0, 1, 2, 3])
        assert run("correlate", tmp_path / "a.csv", tmp_path / "b.csv",
                   "--out", tmp_path) == cli.EXIT_NUMERICAL

    def test_env_override_reaches_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PALEOCORR_SIMULATE__N_OBS", "33")
        assert run("simulate", "--out", tmp_path) == 0
        assert "n_obs: 33" in (tmp_path / "config.resolved.yaml").read_text()

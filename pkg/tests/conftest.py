import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion for the end-of-run report."""
    def report(number, title, passed, detail=""):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}")


@pytest.fixture(scope="session")
def benchmark_suite(tmp_path_factory):
    """The 200-pair benchmark with its coupling-free twin, run once per session."""
    import time

    from paleocorr import experiments as exp

    out = tmp_path_factory.mktemp("benchmark")
    start = time.perf_counter()
    suite = exp.run_suite(exp.SuiteSettings(n_pairs=200, seed=0), out)
    return suite, time.perf_counter() - start, out


def pytest_collection_modifyitems(items):
    for item in items:
        if "benchmark_suite" in getattr(item, "fixturenames", ()):
            item.add_marker(pytest.mark.slow)

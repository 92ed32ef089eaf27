import numpy as np
import pytest
from hypothesis import settings

from leadwarn.features import engineer_features
from leadwarn.ingest import TransactionLog, TransactionRecord
from leadwarn.synth import SynthConfig, generate_stream

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_log(rows, source_id="toy"):
    """rows: (timestamp, recv, cp, usd[, label]) tuples."""
    recs = []
    for i, r in enumerate(rows):
        ts, recv, cp, usd = r[:4]
        label = r[4] if len(r) > 4 else 0
        recs.append(TransactionRecord(int(ts), recv, cp, f"h{i}", usd / 50000.0, float(usd), label))
    return TransactionLog.from_records(recs, source_id)


@pytest.fixture(scope="session")
def small_stream():
    return generate_stream(SynthConfig(n_rows=3000, n_addresses=300, seed=3))


@pytest.fixture(scope="session")
def small_table(small_stream):
    return engineer_features(small_stream)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one pass/fail line per acceptance criterion at the end of the run
_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split("_")[2])):
        status = {"passed": "PASS", "failed": "FAIL"}.get(_CRITERIA[name], _CRITERIA[name].upper())
        terminalreporter.write_line(f"{status}  {name}")

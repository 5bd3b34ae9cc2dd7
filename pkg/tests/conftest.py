import json
from datetime import date, datetime, timedelta, timezone

import pytest

from tempest import synth
from tempest.ingest import RawObservation


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


def obs(city, ts, temp=70.0, **kw):
    fields = dict(dewpoint_f=60.0, humidity_pct=55.0, pressure_inhg=30.0, wind_mph=5.0, wind_dir="N", condition="Clear")
    fields.update(kw)
    return RawObservation(city=city, timestamp=ts, temp_f=temp, **fields)


def fixture_entry(time_local, temp=70.0, **kw):
    entry = {
        "time_local": time_local,
        "temp_f": temp,
        "dewpoint_f": 60.0,
        "humidity_pct": 55.0,
        "pressure_inhg": 30.01,
        "wind_mph": 5.0,
        "wind_dir": "N",
        "condition": "Clear",
    }
    entry.update(kw)
    return entry


def fixture_text(city="nashville", day="2018-09-01", offset=0, entries=None):
    if entries is None:
        entries = [fixture_entry(f"{h:02d}:00", 60.0 + h) for h in range(24)]
    return json.dumps({"city": city, "date": day, "utc_offset_minutes": offset, "observations": entries})


@pytest.fixture(scope="session")
def small_corpus_config():
    """Four cities, 30 days: fast enough for per-test pipelines."""
    return synth.SynthConfig(cities=tuple(synth.TENNESSEE[:4]), start=date(2018, 8, 1), days=30, seed=11)


@pytest.fixture(scope="session")
def small_corpus(small_corpus_config):
    return synth.generate(small_corpus_config)


# -- acceptance reporting ----------------------------------------------------
# Acceptance tests append (criterion, passed, detail); the summary prints one
# line per criterion at the end of the run.

ACCEPTANCE: list[tuple[str, bool, str]] = []
SUITE_BUDGET_S = 600.0
_session = {}


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        ACCEPTANCE.append((criterion, bool(passed), detail))
        return passed

    return _record


def pytest_sessionstart(session):
    import time

    _session["start"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import time

    if not ACCEPTANCE:
        return
    elapsed = time.perf_counter() - _session["start"]
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: (int(r[0].split()[0].rstrip("ab")), r[0])):
        tr.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    # only meaningful when the whole suite ran
    if len(config.args) <= 1 and not config.option.keyword:
        ok = elapsed < SUITE_BUDGET_S
        tr.write_line(f"criterion 11 (suite runtime): {'PASS' if ok else 'FAIL'}  {elapsed:.0f} s < {SUITE_BUDGET_S:.0f} s")

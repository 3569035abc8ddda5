"""Shared fixtures.

The seeded benchmark world (corpus -> graph -> index -> scenarios -> router)
is expensive, so it is built once per session and shared by the acceptance
tests, the ablation checks and the determinism re-run.
"""

from __future__ import annotations

import pytest

from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.bench.runner import (
    PRESET_ORDER,
    BenchData,
    build_index,
    fit_router,
    run_benchmark,
)
from homeconsult.bench.scenarios import generate_scenarios
from homeconsult.kb import ingest_corpus

# ---------------------------------------------------------------------------
# benchmark world (seeds fixed; every consumer sees identical artifacts)
# ---------------------------------------------------------------------------

CORPUS_SEED = 7
CORPUS_SIZE = 2000
SCENARIO_SEED = 11
BENCH_SEED = 23


@pytest.fixture(scope="session")
def bench_corpus():
    return generate_corpus(CORPUS_SEED, CORPUS_SIZE)


@pytest.fixture(scope="session")
def bench_kg(bench_corpus):
    return ingest_corpus(bench_corpus.listings, bench_corpus.amenities, BENCH_INGEST)


@pytest.fixture(scope="session")
def bench_index(bench_kg):
    return build_index(bench_kg)


@pytest.fixture(scope="session")
def bench_scenarios(bench_corpus, bench_index):
    listings = [l.to_dict() for l in bench_corpus.listings]
    return generate_scenarios(SCENARIO_SEED, listings, bench_corpus.amenities, index=bench_index)


@pytest.fixture(scope="session")
def bench_router(bench_scenarios, bench_index):
    model, _info = fit_router(bench_scenarios, bench_index)
    return model


@pytest.fixture(scope="session")
def bench_data(bench_kg, bench_index, bench_scenarios, bench_router):
    return BenchData(kg=bench_kg, index=bench_index, scenarios=bench_scenarios, router=bench_router)


@pytest.fixture(scope="session")
def bench_run(bench_data):
    """(report, turn_rows) for the full preset sweep at the canonical seed."""
    return run_benchmark(bench_data, list(PRESET_ORDER), BENCH_SEED, keep_turn_rows=True)


# a smaller world for unit tests that need a realistic graph but not 2000 docs
@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(5, 260)


@pytest.fixture(scope="session")
def small_kg(small_corpus):
    return ingest_corpus(small_corpus.listings, small_corpus.amenities, BENCH_INGEST)


@pytest.fixture(scope="session")
def small_index(small_kg):
    return build_index(small_kg)


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion id at the end of the
# run, derived from the outcome of every test carrying that criterion marker
# ---------------------------------------------------------------------------

_CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(id, description): acceptance criterion this test verifies",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid, desc = str(marker.args[0]), str(marker.args[1])
    entry = _CRITERIA.setdefault(cid, {"desc": desc, "passed": 0, "failed": 0, "skipped": 0})
    if rep.when == "call":
        if rep.passed:
            entry["passed"] += 1
        elif rep.skipped:
            entry["skipped"] += 1
        else:
            entry["failed"] += 1
    elif rep.when == "setup" and (rep.failed or rep.skipped):
        entry["failed" if rep.failed else "skipped"] += 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: (len(c), c)):
        e = _CRITERIA[cid]
        ok = e["failed"] == 0 and e["skipped"] == 0 and e["passed"] > 0
        counts = f"{e['passed']} passed"
        if e["failed"]:
            counts += f", {e['failed']} failed"
        if e["skipped"]:
            counts += f", {e['skipped']} skipped"
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {e['desc']} ({counts})"
        )

import numpy as np
import pytest

from convmatch.plant import ConverterParams


@pytest.fixture
def p():
    return ConverterParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---- acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}
    config.addinivalue_line("markers", "criterion(id): acceptance criterion checked by the test")


@pytest.fixture
def report(request):
    """``report(ok, detail)`` records the outcome for the test's criterion and asserts it."""
    results = request.config.stash[_RESULTS]
    cid = request.node.get_closest_marker("criterion").args[0]

    def record(ok, detail):
        results[cid] = (bool(ok), detail)
        print(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.passed or rep.when == "teardown":
        return
    results = item.config.stash[_RESULTS]
    if mark.args[0] not in results:
        results[mark.args[0]] = (False, f"error in {rep.when}: {call.excinfo.typename if call.excinfo else '?'}")


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results, key=lambda c: (int("".join(ch for ch in c if ch.isdigit())), c)):
        ok, detail = results[cid]
        terminalreporter.write_line(f"criterion {cid:>3}: {'PASS' if ok else 'FAIL'}  {detail}")

import itertools

import pytest

from teekv import gp_client as gp
from teekv.emulator import boot

_names = itertools.count()


@pytest.fixture
def emu(tmp_path):
    e = boot(store_root=tmp_path / "store", seed=1234, device_name=f"test-emu-{next(_names)}")
    yield e
    e.close()


@pytest.fixture
def ctx(emu):
    c = gp.initialize_context(emu.device_name)
    yield c
    if c.live:
        gp.finalize_context(c)


# -- acceptance reporting: one PASS/FAIL line per criterion ---------------------

_criteria = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    label = dict(report.user_properties).get("criterion")
    if label:
        _criteria.append(("PASS" if report.passed else "FAIL", label))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, label in _criteria:
        terminalreporter.write_line(f"{outcome}  {label}")


@pytest.fixture
def criterion(record_property):
    def _mark(label):
        record_property("criterion", label)
    return _mark

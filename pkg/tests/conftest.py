import numpy as np
import pytest

from semcad import synth
from semcad.data_model import AlarmRecord, fit_encoder, transform


def make_record(ts=1_600_000_000, label=0, **kw):
    base = dict(
        severity="major",
        alarm_type="LOS",
        site_code="S1",
        city="Jakarta",
        domain="TX",
        segment_name="SEG-A",
        management_system="NMS-1",
        port_type="GE",
        equipment_type="RTN",
    )
    base.update(kw)
    return AlarmRecord(report_time=ts, label=label, **base)


@pytest.fixture(scope="session")
def small_records():
    cfg = synth.SynthConfig(n_rows=1500, anomaly_rate=0.06, seed=3)
    return synth.generate(cfg)


@pytest.fixture(scope="session")
def small_dataset(small_records):
    enc = fit_encoder(small_records)
    return enc, transform(small_records, enc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])

import numpy as np
import pytest

from solarprob.harness.config import bundled_data_dir
from solarprob.ingest import QC_FIELDS, RecordSeries


def make_series(times, zenith, ghi, *, station="Test", met=None, qc=None) -> RecordSeries:
    """Build a RecordSeries from arrays; met fields default to plausible constants."""
    times = np.asarray(times, dtype="datetime64[m]")
    n = times.size
    met = met or {}
    cols = {
        "temp_c": np.full(n, 20.0),
        "rh_pct": np.full(n, 50.0),
        "wind_speed": np.full(n, 3.0),
        "wind_dir_deg": np.full(n, 180.0),
        "pressure_mb": np.full(n, 970.0),
    }
    cols.update({k: np.asarray(v, dtype=float) for k, v in met.items()})
    return RecordSeries(
        station=station,
        latitude=40.0,
        longitude=-100.0,
        elevation=300.0,
        times=times,
        zenith_deg=np.broadcast_to(np.asarray(zenith, dtype=float), (n,)).copy(),
        ghi=np.broadcast_to(np.asarray(ghi, dtype=float), (n,)).copy(),
        qc=qc or {name: np.zeros(n, dtype=np.int64) for name in QC_FIELDS},
        **cols,
    )


@pytest.fixture(scope="session")
def sample_dir():
    return bundled_data_dir()


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from calfwatch.cwa import Recording
from calfwatch.timeutil import parse_iso

T0 = parse_iso("2022-01-21T08:00:00Z")


def grid_recording(n, rng=None, rate_hz=25.0, range_g=8.0, start_ms=T0):
    """Random Recording on the device's 1/256 g grid and a uniform time grid."""
    rng = rng or np.random.default_rng(0)
    step = round(1000.0 / rate_hz)
    t = start_ms + step * np.arange(n, dtype=np.int64)
    counts = rng.integers(-int(range_g * 256), int(range_g * 256) + 1, size=(n, 3))
    return Recording(
        t=t,
        xyz=counts.astype(np.float64) / 256.0,
        rate_hz=rate_hz,
        device_meta={"session_id": 7, "device_id": 3, "range_g": range_g},
        source="csv",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

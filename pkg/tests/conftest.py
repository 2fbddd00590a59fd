import os
import tempfile

# logs go to a scratch directory, set before src.logger is first imported
os.environ.setdefault("ZFCOUNT_LOG_DIR", tempfile.mkdtemp(prefix="zfcount-logs-"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from src.components.event_io import EVENT_DTYPE, StreamHeader  # noqa: E402


def make_events(rows):
    """EVENT_DTYPE array from (t, x, y, polarity, gray) tuples."""
    return np.array([tuple(r) for r in rows], dtype=EVENT_DTYPE)


def random_events(rng, n, width=64, height=48, t_max=1_000_000):
    events = np.zeros(n, dtype=EVENT_DTYPE)
    events["t"] = np.sort(rng.integers(0, t_max, size=n))
    events["x"] = rng.integers(0, width, size=n)
    events["y"] = rng.integers(0, height, size=n)
    events["polarity"] = rng.integers(0, 2, size=n)
    events["gray"] = rng.integers(0, 256, size=n)
    return events


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_header():
    return StreamHeader(64, 48)

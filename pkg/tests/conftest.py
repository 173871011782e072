import datetime as dt
import os

import numpy as np
import pytest

from logrisk.ingest import CaseRow, CaseTable
from logrisk.model import MISSING

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")

EPOCH = dt.datetime(2020, 1, 6, 8, 0, 0, tzinfo=dt.timezone.utc)


@pytest.fixture
def demo_xes_path():
    return os.path.join(FIXTURES, "demo.xes")


@pytest.fixture
def demo_csv_path():
    return os.path.join(FIXTURES, "demo.csv")


@pytest.fixture
def demo_mapping_path():
    return os.path.join(FIXTURES, "demo_mapping.json")


def random_table(rng, max_cases=40, max_len=8, n_case_attrs=2,
                 n_event_attrs=1, n_activities=5, cats=3,
                 with_timestamps=True, missing_rate=0.1):
    """A random in-memory log shaped like real parsed input.

    Timestamps are distinct and increasing across the whole log so
    second-resolution projections separate every event; attribute values
    are small category sets with occasional missing event values.
    """
    n_cases = int(rng.integers(1, max_cases + 1))
    case_names = tuple(f"ca{i}" for i in range(n_case_attrs))
    event_names = tuple(f"ea{i}" for i in range(n_event_attrs))
    activities = [f"act{i}" for i in range(n_activities)]
    rows = {}
    tick = 0
    for c in range(n_cases):
        length = int(rng.integers(1, max_len + 1))
        case_values = tuple(
            f"v{rng.integers(0, cats)}" for _ in range(n_case_attrs)
        )
        acts = tuple(activities[i] for i in rng.integers(0, n_activities, length))
        stamps = []
        for _ in range(length):
            tick += int(rng.integers(1, 90))
            stamps.append(EPOCH + dt.timedelta(seconds=tick))
        event_values = tuple(
            tuple(
                MISSING if rng.random() < missing_rate
                else f"w{rng.integers(0, cats)}"
                for _ in range(length)
            )
            for _ in range(n_event_attrs)
        )
        if not with_timestamps:
            stamps = [MISSING] * length
        cid = f"c{c}"
        rows[cid] = CaseRow(cid, case_values, acts, tuple(stamps), event_values)
    return CaseTable(case_names, event_names, rows)


def make_rng(seed):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    """Print the one-line acceptance verdicts collected during the run."""
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if not LINES:
        return
    terminalreporter.section("acceptance checks")
    for line in sorted(LINES):
        terminalreporter.write_line(line)

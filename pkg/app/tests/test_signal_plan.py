import random

import pytest

from app.errors import DataError, InvariantError
from app.ingestion.signal_plan import compute_green_split, merge_intervals
from app.models import SignalEvent


def _cycle_starts(cycle, n_cycles, phase=2):
    return [SignalEvent(timestamp=k * cycle, phase=phase, kind="cycle_start") for k in range(n_cycles + 1)]


def _greens(phase, intervals):
    events = []
    for start, end in intervals:
        events.append(SignalEvent(timestamp=start, phase=phase, kind="green_start"))
        events.append(SignalEvent(timestamp=end, phase=phase, kind="green_end"))
    return events


def test_constant_plan():
    """Cycle 100 s with a 40 s phase-2 green gives g = 0.4"""
    events = _cycle_starts(100.0, 10) + _greens(2, [(k * 100.0 + 10, k * 100.0 + 50) for k in range(10)])
    stats = compute_green_split(events)
    assert stats.mean_cycle == pytest.approx(100.0, abs=1e-9)
    assert stats.mean_green == pytest.approx(40.0, abs=1e-9)
    assert stats.g == pytest.approx(0.4, abs=1e-9)


def test_coincident_major_phases_are_counted_once():
    """Phases 2 and 6 green together give the union, not the sum"""
    intervals = [(k * 100.0 + 10, k * 100.0 + 50) for k in range(10)]
    events = _cycle_starts(100.0, 10) + _greens(2, intervals) + _greens(6, intervals)
    assert compute_green_split(events).g == pytest.approx(0.4, abs=1e-9)


def test_overlapping_major_phases_use_interval_union():
    """Staggered phase 2 and 6 greens merge into one longer interval"""
    events = (_cycle_starts(100.0, 10)
              + _greens(2, [(k * 100.0 + 10, k * 100.0 + 50) for k in range(10)])
              + _greens(6, [(k * 100.0 + 30, k * 100.0 + 60) for k in range(10)]))
    assert compute_green_split(events).g == pytest.approx(0.5, abs=1e-9)


def test_actuated_greens_are_averaged():
    """Varying green durations average over completed intervals"""
    durations = [30.0, 40.0, 50.0] * 4
    events = _cycle_starts(120.0, 12) + _greens(2, [(k * 120.0 + 5, k * 120.0 + 5 + d)
                                                  for k, d in enumerate(durations)])
    stats = compute_green_split(events)
    assert stats.mean_green == pytest.approx(40.0, abs=1e-9)
    assert stats.g == pytest.approx(40.0 / 120.0, abs=1e-9)


def test_other_phases_are_ignored():
    """Greens of phases outside the selection do not count"""
    events = (_cycle_starts(100.0, 5)
              + _greens(2, [(k * 100.0, k * 100.0 + 40) for k in range(5)])
              + _greens(4, [(k * 100.0 + 50, k * 100.0 + 90) for k in range(5)]))
    assert compute_green_split(events).g == pytest.approx(0.4, abs=1e-9)
    assert compute_green_split(events, phases=[4]).g == pytest.approx(0.4, abs=1e-9)


def test_row_order_does_not_matter():
    """Shuffled event lists give the same statistics"""
    events = _cycle_starts(114.0, 8) + _greens(2, [(k * 114.0 + 10, k * 114.0 + 67) for k in range(8)])
    shuffled = list(events)
    random.Random(5).shuffle(shuffled)
    assert compute_green_split(shuffled) == compute_green_split(events)


def test_window_limits_events():
    """Only events inside the half-open window are used"""
    events = (_cycle_starts(100.0, 10)
              + _greens(2, [(k * 100.0 + 10, k * 100.0 + 50) for k in range(5)])
              + _greens(2, [(k * 100.0 + 10, k * 100.0 + 80) for k in range(5, 10)]))
    assert compute_green_split(events, window=(0.0, 500.0)).g == pytest.approx(0.4, abs=1e-9)
    assert compute_green_split(events, window=(500.0, 1000.5)).g == pytest.approx(0.7, abs=1e-9)


def test_preconditions():
    """One cycle start or no complete green is a DataError; g of one is an InvariantError"""
    with pytest.raises(DataError):
        compute_green_split(_cycle_starts(100.0, 0) + _greens(2, [(10.0, 50.0)]))
    with pytest.raises(DataError):
        compute_green_split(_cycle_starts(100.0, 3))
    with pytest.raises(InvariantError):
        compute_green_split(_cycle_starts(100.0, 2) + _greens(2, [(0.0, 100.0), (100.0, 200.0)]))


def test_merge_intervals_keeps_touching_intervals_apart():
    assert merge_intervals([(0.0, 10.0), (5.0, 12.0), (12.0, 20.0)]) == [(0.0, 12.0), (12.0, 20.0)]

"""
Average cycle length and green split from signal phase events
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.errors import DataError, InvariantError
from app.fd.config import PROTOCOL_CONFIG
from app.ingestion.parsers import sort_events
from app.models import SignalEvent, SignalPlanStats

logger = logging.getLogger(__name__)


def green_intervals(events: Sequence[SignalEvent], phases: Iterable[int]) -> List[Tuple[float, float]]:
    """Completed (start, end) green intervals of the selected phases, in start order"""
    phases = set(phases)
    opened = {}
    intervals = []
    for event in events:
        if event.phase not in phases:
            continue
        if event.kind == "green_start":
            opened[event.phase] = event.timestamp
        elif event.kind == "green_end" and event.phase in opened:
            intervals.append((opened.pop(event.phase), event.timestamp))
    return sorted(intervals)


def merge_intervals(intervals: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Union of overlapping intervals; touching intervals stay separate"""
    merged = []
    for start, end in sorted(intervals):
        if merged and start < merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def compute_green_split(events: Sequence[SignalEvent], phases: Iterable[int] = PROTOCOL_CONFIG["phases"],
                        window: Optional[Tuple[float, float]] = None,
                        segment_id: str = "segment") -> SignalPlanStats:
    """
    Mean cycle, mean green and green split over a signal event log.

    Concurrent greens of the selected phases are merged by interval union
    before averaging, so phases 2 and 6 running together count once.
    window is a half-open (start, end) range in event seconds.
    """
    events = sort_events(list(events))
    if window is not None:
        events = [e for e in events if window[0] <= e.timestamp < window[1]]

    cycle_starts = np.array([e.timestamp for e in events if e.kind == "cycle_start"])
    if cycle_starts.size < 2:
        raise DataError(f"segment {segment_id}: need at least 2 cycle_start events, got {cycle_starts.size}")
    greens = merge_intervals(green_intervals(events, phases))
    if not greens:
        raise DataError(f"segment {segment_id}: no complete green interval for phases {sorted(set(phases))}")

    mean_cycle = float(np.mean(np.diff(cycle_starts)))
    mean_green = float(np.mean([end - start for start, end in greens]))
    g = mean_green / mean_cycle
    if not 0 < g < 1:
        raise InvariantError(f"segment {segment_id}: green split {g:.6f} outside (0, 1)")
    try:
        stats = SignalPlanStats(segment_id=segment_id, mean_cycle=mean_cycle, mean_green=mean_green, g=g)
    except ValidationError as e:
        raise InvariantError(f"segment {segment_id}: inconsistent plan statistics: {e.errors()[0]['msg']}") from e
    logger.info(f"signal plan segment={segment_id} mean_cycle={mean_cycle:.3f} mean_green={mean_green:.3f} g={g:.4f}")
    return stats

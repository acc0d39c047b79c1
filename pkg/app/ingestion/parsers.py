"""
CSV parsers for lane counts, segment speeds and signal phase events
"""
import logging
import math
import re
from pathlib import Path
from typing import List

import pandas as pd

from app.errors import ConfigError, OrderError, ParseError
from app.models import CountRecord, SignalEvent, SpeedRecord

logger = logging.getLogger(__name__)

COUNTS_COLUMNS = ["segment_id", "lane_id", "timestamp", "count"]
SPEEDS_COLUMNS = ["segment_id", "timestamp", "speed_kmh"]
EVENTS_COLUMNS = ["timestamp", "phase", "kind"]
EVENT_KINDS = ("green_start", "green_end", "cycle_start")

# Tie-break for events sharing a timestamp: close greens before opening new ones
KIND_ORDER = {"green_end": 0, "cycle_start": 1, "green_start": 2}

_EPOCH = pd.Timestamp(0)
# ASCII digits only; str.isdigit also accepts superscripts that int() rejects
_COUNT_PATTERN = re.compile(r"[0-9]+")
_PHASE_PATTERN = re.compile(r"-?[0-9]+")


def _read_rows(path, columns: List[str]) -> pd.DataFrame:
    """Read a CSV as strings, checking the header; data rows start at file line 2"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=columns)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(int(match.group(1)) if match else None, f"{path.name}: malformed row ({e})") from e
    if [c.strip() for c in df.columns] != columns:
        raise ParseError(1, f"{path.name}: expected header {','.join(columns)}, got {','.join(df.columns)}")
    df.columns = columns
    return df


def _is_blank(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value)) or str(value).strip() == ""


def _rows(df: pd.DataFrame, path):
    """Yield (line, row) pairs, skipping fully blank lines and rejecting partial rows"""
    for line, values in enumerate(df.itertuples(index=False, name=None), start=2):
        row = dict(zip(df.columns, values))
        blanks = [_is_blank(v) for v in values]
        if all(blanks):
            continue
        if any(blanks):
            missing = [name for name, blank in zip(df.columns, blanks) if blank]
            raise ParseError(line, f"{Path(path).name}: missing {', '.join(missing)}")
        yield line, row


def _parse_timestamp(value: str, line: int) -> pd.Timestamp:
    try:
        ts = pd.Timestamp(value.strip())
    except (ValueError, TypeError) as e:
        raise ParseError(line, f"invalid timestamp {value!r}") from e
    if ts is pd.NaT:
        raise ParseError(line, f"invalid timestamp {value!r}")
    # Keep the local wall-clock reading
    return ts.tz_localize(None) if ts.tzinfo is not None else ts


def _parse_float(value: str, line: int, field: str) -> float:
    try:
        number = float(value)
    except ValueError as e:
        raise ParseError(line, f"{field} is not a number: {value!r}") from e
    if not math.isfinite(number):
        raise ParseError(line, f"{field} is not finite: {value!r}")
    return number


def parse_counts(path) -> List[CountRecord]:
    """Lane-level vehicle counts; header segment_id,lane_id,timestamp,count"""
    records = []
    for line, row in _rows(_read_rows(path, COUNTS_COLUMNS), path):
        count = row["count"].strip()
        if not _COUNT_PATTERN.fullmatch(count):
            raise ParseError(line, f"count must be a non-negative integer, got {row['count']!r}")
        records.append(CountRecord(segment_id=row["segment_id"].strip(), lane_id=row["lane_id"].strip(),
                                   timestamp=_parse_timestamp(row["timestamp"], line).to_pydatetime(),
                                   count=int(count)))
    logger.info(f"parsed counts path={path} rows={len(records)}")
    return records


def parse_speeds(path) -> List[SpeedRecord]:
    """Segment space-mean speeds; header segment_id,timestamp,speed_kmh"""
    records = []
    for line, row in _rows(_read_rows(path, SPEEDS_COLUMNS), path):
        speed = _parse_float(row["speed_kmh"], line, "speed_kmh")
        if speed < 0:
            raise ParseError(line, f"speed_kmh must be non-negative, got {row['speed_kmh']!r}")
        records.append(SpeedRecord(segment_id=row["segment_id"].strip(),
                                   timestamp=_parse_timestamp(row["timestamp"], line).to_pydatetime(),
                                   speed=speed))
    logger.info(f"parsed speeds path={path} rows={len(records)}")
    return records


def _event_seconds(value: str, line: int) -> float:
    """Decimal seconds, or an ISO-8601 timestamp converted to seconds since the epoch"""
    try:
        return _parse_float(value, line, "timestamp")
    except ParseError:
        return (_parse_timestamp(value, line) - _EPOCH).total_seconds()


def sort_events(events: List[SignalEvent]) -> List[SignalEvent]:
    return sorted(events, key=lambda e: (e.timestamp, KIND_ORDER[e.kind], e.phase))


def check_event_order(events: List[SignalEvent]) -> None:
    """Raise OrderError when a phase ends green without an open green interval"""
    open_phases = set()
    for event in events:
        if event.kind == "green_start":
            open_phases.add(event.phase)
        elif event.kind == "green_end":
            if event.phase not in open_phases:
                raise OrderError(f"green_end for phase {event.phase} at t={event.timestamp} has no green_start")
            open_phases.discard(event.phase)


def parse_signal_events(path) -> List[SignalEvent]:
    """Signal phase events sorted by time; header timestamp,phase,kind"""
    events = []
    for line, row in _rows(_read_rows(path, EVENTS_COLUMNS), path):
        phase = row["phase"].strip()
        if not _PHASE_PATTERN.fullmatch(phase):
            raise ParseError(line, f"phase must be an integer, got {row['phase']!r}")
        kind = row["kind"].strip()
        if kind not in EVENT_KINDS:
            raise ParseError(line, f"kind must be one of {', '.join(EVENT_KINDS)}, got {row['kind']!r}")
        events.append(SignalEvent(timestamp=_event_seconds(row["timestamp"].strip(), line), phase=int(phase), kind=kind))

    events = sort_events(events)
    check_event_order(events)
    logger.info(f"parsed signal events path={path} rows={len(events)}")
    return events

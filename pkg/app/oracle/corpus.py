"""
Synthetic corpus writer: counts, speeds, signal events and segments config
in the ingestion file formats
"""
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from app.errors import ConfigError
from app.fd.config import ORACLE_CONFIG, PROTOCOL_CONFIG, THETA_CONFIG
from app.ingestion.csv_io import atomic_write_text
from app.ingestion.parsers import COUNTS_COLUMNS, EVENTS_COLUMNS, KIND_ORDER, SPEEDS_COLUMNS
from app.ingestion.segments import dump_segments_config
from app.models import SegmentConfig, SegmentObservation, SyntheticSegmentSpec
from app.oracle.simulator import capacity_from_signal, default_demand_grid, simulate_segment

logger = logging.getLogger(__name__)

SPEC_DEFAULTS = {
    "length": ORACLE_CONFIG["length_m"],
    "v_max": ORACLE_CONFIG["v_max_kmh"],
    "cycle": ORACLE_CONFIG["cycle_s"],
    "sat_flow": ORACLE_CONFIG["sat_flow"],
    "lane_count": ORACLE_CONFIG["lane_count"],
    "noise_sigma": 0.0,
}


def _csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, lineterminator="\n")


def _split(total: int, parts: int) -> List[int]:
    """Integer split of total into parts that differ by at most one"""
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _vehicles(spec: SyntheticSegmentSpec, flow: float) -> int:
    total = flow * spec.lane_count
    if abs(total - round(total)) > 1e-9:
        raise ConfigError(
            f"segment {spec.segment_id}: demand {flow} x {spec.lane_count} lanes is not a whole vehicle count"
        )
    return int(round(total))


def _count_rows(spec: SyntheticSegmentSpec, observations: Sequence[SegmentObservation]) -> List[dict]:
    per_hour = ORACLE_CONFIG["records_per_hour"]
    step = pd.Timedelta(minutes=60 // per_hour)
    rows = []
    for obs in observations:
        for lane, lane_total in enumerate(_split(_vehicles(spec, obs.flow), spec.lane_count), start=1):
            for slot, count in enumerate(_split(lane_total, per_hour)):
                stamp = pd.Timestamp(obs.hour_start) + slot * step
                rows.append({"segment_id": spec.segment_id, "lane_id": f"L{lane}",
                             "timestamp": stamp.isoformat(), "count": count})
    return rows


def _speed_rows(spec: SyntheticSegmentSpec, observations: Sequence[SegmentObservation]) -> List[dict]:
    offset = pd.Timedelta(minutes=ORACLE_CONFIG["speed_offset_min"])
    return [{"segment_id": spec.segment_id, "timestamp": (pd.Timestamp(o.hour_start) + offset).isoformat(),
             "speed_kmh": o.speed} for o in observations]


def event_log(cycle: float, g: float, phases: Sequence[int] = PROTOCOL_CONFIG["phases"],
              n_cycles: int = ORACLE_CONFIG["n_cycles"]) -> pd.DataFrame:
    """Fixed-time plan: every listed phase green for g * cycle seconds once per cycle"""
    offset = min(ORACLE_CONFIG["green_offset_s"], (1.0 - g) * cycle / 2.0)
    rows = [{"timestamp": k * cycle, "phase": phases[0], "kind": "cycle_start"} for k in range(n_cycles + 1)]
    for k in range(n_cycles):
        start = k * cycle + offset
        for phase in phases:
            rows.append({"timestamp": start, "phase": phase, "kind": "green_start"})
            rows.append({"timestamp": start + g * cycle, "phase": phase, "kind": "green_end"})
    df = pd.DataFrame(rows, columns=EVENTS_COLUMNS)
    df["order"] = df["kind"].map(KIND_ORDER)
    return df.sort_values(["timestamp", "order", "phase"], kind="stable").drop(columns="order")


def generate_corpus(specs: Sequence[SyntheticSegmentSpec], out_dir) -> Dict[str, object]:
    """
    Write a synthetic corpus under out_dir:

        counts.csv, speeds.csv, segments.yaml, events/<segment_id>.csv

    Each hour carries one simulated demand value split over lanes and
    quarter-hours; the event logs realize each spec's cycle and green split.
    Returns the written paths.
    """
    if not specs:
        raise ConfigError("at least one synthetic segment spec is required")
    duplicates = sorted(sid for sid, n in Counter(s.segment_id for s in specs).items() if n > 1)
    if duplicates:
        raise ConfigError(f"duplicate segment ids: {', '.join(duplicates)}")

    out_dir = Path(out_dir)
    count_rows, speed_rows, segments, events = [], [], {}, {}
    for spec in specs:
        observations = simulate_segment(spec)
        count_rows.extend(_count_rows(spec, observations))
        speed_rows.extend(_speed_rows(spec, observations))

        relative = f"events/{spec.segment_id}.csv"
        events[spec.segment_id] = atomic_write_text(out_dir / relative, _csv(event_log(spec.cycle, spec.g)))
        segments[spec.segment_id] = SegmentConfig(lane_count=spec.lane_count, v_max_kmh=spec.v_max,
                                                  q_cap=capacity_from_signal(spec.g, spec.sat_flow), events=relative)

    paths = {
        "counts": atomic_write_text(out_dir / "counts.csv", _csv(pd.DataFrame(count_rows, columns=COUNTS_COLUMNS))),
        "speeds": atomic_write_text(out_dir / "speeds.csv", _csv(pd.DataFrame(speed_rows, columns=SPEEDS_COLUMNS))),
        "segments": atomic_write_text(out_dir / "segments.yaml", dump_segments_config(segments)),
        "events": events,
    }
    logger.info(f"generated corpus out_dir={out_dir} segments={len(specs)} hours={len(speed_rows)}")
    return paths


def green_grid_specs(n: int = 10, g_lo: float = THETA_CONFIG["g_lo"], g_hi: float = THETA_CONFIG["g_hi"],
                     seed: int = 0, scale_length: bool = ORACLE_CONFIG["length_scales_with_red"],
                     **overrides) -> List[SyntheticSegmentSpec]:
    """
    n specs S01..Sn with green splits evenly spaced over [g_lo, g_hi].

    With scale_length the given length applies at g_lo and each segment's
    length is scaled by (1 - g) / (1 - g_lo), so uniform delay relative to
    free-flow time falls linearly in g across the grid.
    """
    if n < 1:
        raise ConfigError(f"green grid needs at least one segment, got {n}")
    fields = {**SPEC_DEFAULTS, **overrides}
    greens = np.linspace(g_lo, g_hi, n) if n > 1 else np.array([g_lo])
    specs = []
    for i, g in enumerate(greens):
        g = float(g)
        length = fields["length"] * (1.0 - g) / (1.0 - g_lo) if scale_length else fields["length"]
        specs.append(_build_spec({**fields, "segment_id": f"S{i + 1:02d}", "g": g, "seed": seed + i,
                                  "length": length}))
    return specs


def _build_spec(fields: dict) -> SyntheticSegmentSpec:
    fields = dict(fields)
    if fields.get("demand_grid") is None and "g" in fields:
        fields["demand_grid"] = default_demand_grid(fields["g"], fields["sat_flow"])
    try:
        return SyntheticSegmentSpec(**fields)
    except ValidationError as e:
        raise ConfigError(f"invalid synthetic segment {fields.get('segment_id')}: {e.errors()[0]['msg']}") from e


def load_synthetic_specs(path) -> List[SyntheticSegmentSpec]:
    """
    Load synthetic segment specs from YAML. Either list them:

        defaults: {length: 3000, v_max: 50, cycle: 114, sat_flow: 1800}
        segments:
          - {segment_id: S01, g: 0.3, seed: 1}

    or request an evenly spaced green grid:

        green_grid: {n: 10, g_lo: 0.3, g_hi: 0.8, seed: 0, scale_length: true}

    Missing demand grids default to bin centers below 95% of g * sat_flow.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"synthetic spec file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"synthetic spec file {path} is not valid YAML: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"synthetic spec file {path} must be a mapping")

    defaults = {**SPEC_DEFAULTS, **(document.get("defaults") or {})}
    if "green_grid" in document:
        grid = dict(document["green_grid"] or {})
        try:
            return green_grid_specs(**{**defaults, **grid})
        except TypeError as e:
            raise ConfigError(f"invalid green_grid in {path}: {e}") from e

    entries = document.get("segments")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"synthetic spec file {path} needs a non-empty 'segments' list or a 'green_grid'")
    specs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"segment entry {i} in {path} must be a mapping")
        specs.append(_build_spec({"seed": i, **defaults, **entry}))
    return specs

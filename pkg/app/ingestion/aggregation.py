"""
Hourly per-lane aggregation of counts and speeds
"""
import logging
from typing import Mapping, Sequence

import pandas as pd

from app.errors import ConfigError
from app.models import CountRecord, HourlyAggregate, SegmentObservation, SkipReport, SpeedRecord

logger = logging.getLogger(__name__)


def aggregate_hourly(counts: Sequence[CountRecord], speeds: Sequence[SpeedRecord],
                     lane_counts: Mapping[str, int]) -> HourlyAggregate:
    """
    Join hourly per-lane flow with hourly mean speed per segment.

    flow = vehicles counted over all lanes in the hour / lane_count; speed is
    the record-weighted mean of speed records in the hour. Segment-hours that
    lack either side are dropped and tallied in the skip report.
    """
    count_df = pd.DataFrame([c.model_dump() for c in counts], columns=["segment_id", "lane_id", "timestamp", "count"])
    speed_df = pd.DataFrame([s.model_dump() for s in speeds], columns=["segment_id", "timestamp", "speed"])

    missing = sorted(set(count_df["segment_id"]) - set(lane_counts))
    if missing:
        raise ConfigError(f"no lane_count configured for segments: {', '.join(missing)}")

    keys = ["segment_id", "hour_start"]
    count_df["hour_start"] = pd.to_datetime(count_df["timestamp"]).dt.floor("h")
    speed_df["hour_start"] = pd.to_datetime(speed_df["timestamp"]).dt.floor("h")

    totals = count_df.groupby(keys)["count"].sum().rename("vehicles")
    mean_speeds = speed_df.groupby(keys)["speed"].mean().rename("speed")
    joined = pd.concat([totals, mean_speeds], axis=1).sort_index()

    counts_only = int(joined["speed"].isna().sum())
    speeds_only = int(joined["vehicles"].isna().sum())
    joined = joined.dropna()
    skipped = SkipReport(counts_without_speed=counts_only, speeds_without_counts=speeds_only)
    if counts_only or speeds_only:
        logger.warning(f"dropped segment-hours counts_without_speed={counts_only} speeds_without_counts={speeds_only}")

    observations = []
    for (segment_id, hour_start), row in joined.iterrows():
        observations.append(SegmentObservation(
            segment_id=segment_id,
            hour_start=hour_start.to_pydatetime(),
            flow=float(row["vehicles"]) / lane_counts[segment_id],
            speed=float(row["speed"]),
        ))
    logger.info(f"aggregated hourly observations rows={len(observations)}")
    return HourlyAggregate(observations=observations, skipped=skipped)

"""
Synthetic segment observations with known ground truth.

Two generators: samples drawn from the FD itself (for estimator self-tests)
and an independent signalized-segment model where speed comes from free-flow
travel time plus the uniform-delay term of a fixed-time signal.
"""
import logging
from datetime import datetime
from typing import Iterator, List

import numpy as np
import pandas as pd

from app.errors import DomainError, ParamError
from app.fd.config import ORACLE_CONFIG, PROTOCOL_CONFIG
from app.fd.fd_model import eval_speed, eval_speed_array
from app.models import BinnedPoint, FdParams, SegmentObservation, SyntheticSegmentSpec

logger = logging.getLogger(__name__)


def study_hours(start: str = ORACLE_CONFIG["corpus_start"]) -> Iterator[datetime]:
    """Consecutive hour starts inside the weekday study window, from start onwards"""
    hour = pd.Timestamp(start).floor("h")
    while True:
        if (hour.weekday() in PROTOCOL_CONFIG["study_weekdays"]
                and PROTOCOL_CONFIG["study_start_hour"] <= hour.hour < PROTOCOL_CONFIG["study_end_hour"]):
            yield hour.to_pydatetime()
        hour += pd.Timedelta(hours=1)


def _observations(segment_id: str, flows: np.ndarray, speeds: np.ndarray) -> List[SegmentObservation]:
    return [
        SegmentObservation(segment_id=segment_id, hour_start=hour, flow=float(q), speed=float(v))
        for hour, q, v in zip(study_hours(), flows, speeds)
    ]


def sample_from_fd(params: FdParams, n: int, noise_sigma: float, seed: int,
                   segment_id: str = "synthetic") -> List[SegmentObservation]:
    """
    n observations scattered around the FD curve.

    Flows are uniform over (0.02, 0.98) * q_cap; speeds get Gaussian noise of
    noise_sigma km/h and are clipped to [0, v_max]. Same seed, same output.
    """
    if n < 1:
        raise ParamError(f"n must be at least 1, got {n}")
    if noise_sigma < 0:
        raise ParamError(f"noise_sigma must be non-negative, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    flows = rng.uniform(ORACLE_CONFIG["flow_low_fraction"] * params.q_cap,
                        ORACLE_CONFIG["flow_high_fraction"] * params.q_cap, n)
    noise = rng.normal(0.0, noise_sigma, n)
    speeds = np.clip(eval_speed_array(params, flows) + noise, 0.0, params.v_max)
    return _observations(segment_id, flows, speeds)


def capacity_from_signal(g: float, sat_flow: float) -> float:
    """Per-lane capacity of a signalized approach: green share of saturation flow"""
    return g * sat_flow


def uniform_delay(cycle: float, g: float, sat_flow: float, demand: np.ndarray) -> np.ndarray:
    """Average uniform signal delay (s) for undersaturated arrivals"""
    return cycle * (1.0 - g) ** 2 / (2.0 * (1.0 - demand / (g * sat_flow)))


def simulate_segment(spec: SyntheticSegmentSpec) -> List[SegmentObservation]:
    """
    One observation per demand value from the signalized-segment delay model.

    Speed is length / (length / v_max + delay); seeded Gaussian noise of
    noise_sigma km/h is added and speeds are kept inside (0, v_max].
    """
    demand = np.asarray(spec.demand_grid, dtype=float)
    capacity = capacity_from_signal(spec.g, spec.sat_flow)
    saturated = demand[(demand < 0) | (demand >= capacity)]
    if saturated.size:
        raise DomainError(f"segment {spec.segment_id}: demand {saturated[0]} outside [0, g*s={capacity})")

    free_flow_time = spec.length / (spec.v_max / 3.6)
    delay = uniform_delay(spec.cycle, spec.g, spec.sat_flow, demand)
    speeds = 3.6 * spec.length / (free_flow_time + delay)

    rng = np.random.default_rng(spec.seed)
    speeds = speeds + rng.normal(0.0, spec.noise_sigma, demand.size)
    speeds = np.clip(speeds, ORACLE_CONFIG["min_speed_fraction"] * spec.v_max, spec.v_max)
    logger.debug(f"simulated segment={spec.segment_id} g={spec.g} demands={demand.size}")
    return _observations(spec.segment_id, demand, speeds)


def default_demand_grid(g: float, sat_flow: float, width: float = PROTOCOL_CONFIG["bin_width"],
                        fraction: float = ORACLE_CONFIG["demand_fraction"]) -> List[float]:
    """Bin-center demands strictly below fraction * g * sat_flow"""
    limit = fraction * capacity_from_signal(g, sat_flow)
    count = int(np.ceil(limit / width - 0.5))
    return [(k + 0.5) * width for k in range(max(count, 0)) if (k + 0.5) * width < limit]


def binned_from_fd(params: FdParams, width: float = PROTOCOL_CONFIG["bin_width"], count: int = 1) -> List[BinnedPoint]:
    """Exact FD speeds at every bin center strictly inside (0, q_cap)"""
    if width <= 0 or count < 1:
        raise ParamError(f"need width > 0 and count >= 1, got width={width} count={count}")
    points = []
    k = 0
    while (k + 0.5) * width < params.q_cap:
        center = (k + 0.5) * width
        points.append(BinnedPoint(bin_index=k, bin_center=center, mean_speed=eval_speed(params, center), count=count))
        k += 1
    return points

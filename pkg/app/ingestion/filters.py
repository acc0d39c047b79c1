"""
Study filters: weekday time window and cycle-length selection
"""
import logging
from typing import List, Sequence

from app.fd.config import PROTOCOL_CONFIG
from app.models import SegmentObservation, SignalPlanStats

logger = logging.getLogger(__name__)


def in_study_window(obs: SegmentObservation, start_hour: int = PROTOCOL_CONFIG["study_start_hour"],
                    end_hour: int = PROTOCOL_CONFIG["study_end_hour"],
                    weekdays: Sequence[int] = PROTOCOL_CONFIG["study_weekdays"]) -> bool:
    """Weekday hour inside the half-open window [start_hour, end_hour)"""
    return obs.hour_start.weekday() in weekdays and start_hour <= obs.hour_start.hour < end_hour


def filter_study_window(obs: Sequence[SegmentObservation], start_hour: int = PROTOCOL_CONFIG["study_start_hour"],
                        end_hour: int = PROTOCOL_CONFIG["study_end_hour"],
                        weekdays: Sequence[int] = PROTOCOL_CONFIG["study_weekdays"]) -> List[SegmentObservation]:
    kept = [o for o in obs if in_study_window(o, start_hour, end_hour, weekdays)]
    if len(kept) < len(obs):
        logger.info(f"study window dropped={len(obs) - len(kept)} kept={len(kept)}")
    return kept


def filter_cycle_length(stats: Sequence[SignalPlanStats], target: float = PROTOCOL_CONFIG["cycle_target"],
                        tol: float = PROTOCOL_CONFIG["cycle_tolerance"]) -> List[SignalPlanStats]:
    """Keep plans whose mean cycle is within tol of target, boundaries included"""
    kept = [s for s in stats if abs(s.mean_cycle - target) <= tol]
    for s in stats:
        if abs(s.mean_cycle - target) > tol:
            logger.warning(f"cycle filter dropped segment={s.segment_id} mean_cycle={s.mean_cycle:.3f}")
    return kept

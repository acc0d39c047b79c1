"""
Segments configuration (YAML): lane count, speed limit, optional capacity and event log per segment
"""
import logging
from pathlib import Path
from typing import Dict

import yaml
from pydantic import ValidationError

from app.errors import ConfigError
from app.models import SegmentConfig

logger = logging.getLogger(__name__)


def load_segments_config(path) -> Dict[str, SegmentConfig]:
    """
    Load a mapping of segment_id to SegmentConfig.

    Expected layout:

        segments:
          S01:
            lane_count: 2
            v_max_kmh: 50
            q_cap: 540        # optional
            events: events/S01.csv   # optional, relative to this file
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"segments config not found: {path}")
    try:
        document = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"segments config {path} is not valid YAML: {e}") from e

    entries = document.get("segments") if isinstance(document, dict) else None
    if not isinstance(entries, dict):
        raise ConfigError(f"segments config {path} must contain a 'segments' mapping")

    segments = {}
    for segment_id, entry in entries.items():
        try:
            config = SegmentConfig(**(entry or {}))
        except (ValidationError, TypeError) as e:
            raise ConfigError(f"segment {segment_id} in {path}: {e}") from e
        if config.events is not None:
            config = config.model_copy(update={"events": str(path.parent / config.events)})
        segments[str(segment_id)] = config
    logger.info(f"loaded segments config path={path} segments={len(segments)}")
    return segments


def dump_segments_config(segments: Dict[str, SegmentConfig]) -> str:
    """YAML text for a segments mapping, keys sorted for stable output"""
    body = {sid: cfg.model_dump(exclude_none=True) for sid, cfg in sorted(segments.items())}
    return yaml.safe_dump({"segments": body}, sort_keys=True)

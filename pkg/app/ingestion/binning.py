"""
Flow binning of hourly observations
"""
import math
from collections import defaultdict
from typing import List, Sequence

import numpy as np

from app.errors import DataError
from app.fd.config import PROTOCOL_CONFIG
from app.models import BinnedPoint, SegmentObservation


def bin_index(flow: float, width: float = PROTOCOL_CONFIG["bin_width"]) -> int:
    """Half-open bins [k * width, (k + 1) * width)"""
    return int(math.floor(flow / width))


def bin_flows(obs: Sequence[SegmentObservation], width: float = PROTOCOL_CONFIG["bin_width"]) -> List[BinnedPoint]:
    """Group observations by flow bin; empty bins are omitted, output sorted by bin index"""
    if width <= 0:
        raise DataError(f"bin width must be positive, got {width}")
    members = defaultdict(list)
    for o in obs:
        members[bin_index(o.flow, width)].append(o.speed)
    return [
        BinnedPoint(bin_index=k, bin_center=(k + 0.5) * width, mean_speed=float(np.mean(members[k])),
                    count=len(members[k]))
        for k in sorted(members)
    ]

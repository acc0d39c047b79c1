"""
SVG overlay of binned observations and FD curves, speed normalized by the speed limit
"""
import io
import logging
from typing import Mapping, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.config import settings  # noqa: E402
from app.errors import ConfigError, DataError  # noqa: E402
from app.models import BinnedPoint  # noqa: E402

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


def _colors(n: int):
    cmap = plt.get_cmap("tab10" if n <= 10 else "viridis")
    return [cmap(i if n <= 10 else i / max(n - 1, 1)) for i in range(n)]


def render_overlay(binned: Mapping[str, Sequence[BinnedPoint]], curves: Mapping[str, Sequence[Point]],
                   v_max: Mapping[str, float], title: str = "Signal-parametrized FDs and observed data") -> str:
    """
    One color per segment: binned points as a scatter series with gid
    points-<id>, curves as a dash-dot line with gid curve-<id>.
    The same inputs always give the same bytes.
    """
    unknown = sorted(set(curves) - set(binned))
    if unknown:
        raise DataError(f"curves for segments without binned data: {', '.join(unknown)}")
    missing = sorted(sid for sid in binned if sid not in v_max)
    if missing:
        raise ConfigError(f"no speed limit for segments: {', '.join(missing)}")

    segment_ids = sorted(binned)
    with plt.rc_context({"svg.hashsalt": settings.PLOT_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 5))
        for sid, color in zip(segment_ids, _colors(len(segment_ids))):
            points = binned[sid]
            scatter = ax.scatter([b.bin_center for b in points], [b.mean_speed / v_max[sid] for b in points],
                                 s=14, color=color)
            scatter.set_gid(f"points-{sid}")
            if sid in curves:
                (line,) = ax.plot([q for q, _ in curves[sid]], [v / v_max[sid] for _, v in curves[sid]],
                                  linestyle="-.", color=color)
                line.set_gid(f"curve-{sid}")
        ax.set_xlabel("Flow (veh/hr-lane)")
        ax.set_ylabel("Speed / speed limit")
        ax.set_ylim(0.0, 1.05)
        ax.set_title(title)

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.info(f"rendered overlay segments={len(segment_ids)} curves={len(curves)}")
    return buffer.getvalue()


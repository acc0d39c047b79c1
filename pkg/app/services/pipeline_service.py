"""
File-to-file pipeline steps behind the command line: ingest, fit, fit-theta,
predict, simulate and audit
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from app.errors import ConfigError, DataError
from app.fd.calibration import (
    audit_fitted_curves, estimate_qcap, filter_above_capacity, fit_segments, fit_theta_joint, fit_theta_two_stage,
)
from app.fd.config import AUDIT_CONFIG, THETA_CONFIG
from app.fd.fd_model import audit_monotone_in_green, predict_curve
from app.ingestion.aggregation import aggregate_hourly
from app.ingestion.binning import bin_flows
from app.ingestion.csv_io import (
    atomic_write_text, read_binned, read_fits, read_plan_stats, read_theta, write_binned, write_curve, write_fits,
    write_plan_stats, write_theta,
)
from app.ingestion.filters import filter_cycle_length, filter_study_window
from app.ingestion.parsers import parse_counts, parse_signal_events, parse_speeds
from app.ingestion.segments import load_segments_config
from app.ingestion.signal_plan import compute_green_split
from app.models import AuditReport, FdCurve, RunConfig, SegmentConfig, SegmentData, SkipReport, ThetaFit
from app.oracle.corpus import generate_corpus, load_synthetic_specs

logger = logging.getLogger(__name__)


def _required(value: Optional[str], what: str) -> Path:
    if not value:
        raise ConfigError(f"no {what} path configured")
    return Path(value)


class PipelineService:
    """Pipeline steps reading and writing the toolkit's file formats"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = Path(config.out_dir)

    # Intermediate artifacts default to the output directory
    def _artifact(self, configured: Optional[str], name: str) -> Path:
        return Path(configured) if configured else self.out_dir / name

    @property
    def binned_path(self) -> Path:
        return self._artifact(self.config.binned, "binned.csv")

    @property
    def plans_path(self) -> Path:
        return self._artifact(self.config.plans, "plans.csv")

    @property
    def fits_path(self) -> Path:
        return self._artifact(self.config.fits, "fits.csv")

    @property
    def theta_path(self) -> Path:
        return self._artifact(self.config.theta, "theta.csv")

    def _segments(self) -> Dict[str, SegmentConfig]:
        return load_segments_config(_required(self.config.segments, "segments config"))

    def _q_cap(self, segment: SegmentConfig, binned) -> float:
        if segment.q_cap is not None:
            return segment.q_cap
        return estimate_qcap(binned, self.config.min_bin_count, self.config.bin_width)

    def ingest(self) -> Dict[str, object]:
        """Counts, speeds and event logs to binned observations, plan statistics and a skip report"""
        cfg = self.config
        segments = self._segments()
        counts = parse_counts(_required(cfg.counts, "counts"))
        speeds = parse_speeds(_required(cfg.speeds, "speeds"))
        aggregate = aggregate_hourly(counts, speeds, {sid: seg.lane_count for sid, seg in segments.items()})
        skipped = SkipReport(**aggregate.skipped.model_dump())

        observations = filter_study_window(aggregate.observations, cfg.study_start_hour, cfg.study_end_hour)
        skipped.outside_study_window = len(aggregate.observations) - len(observations)
        by_segment: Dict[str, List] = {}
        for obs in observations:
            by_segment.setdefault(obs.segment_id, []).append(obs)

        plans = []
        for sid in sorted(by_segment):
            events_path = segments[sid].events
            if events_path is None:
                logger.warning(f"no signal events configured segment={sid} dropped={len(by_segment[sid])}")
                skipped.without_signal_plan += len(by_segment[sid])
                continue
            plans.append(compute_green_split(parse_signal_events(events_path), cfg.phases, segment_id=sid))

        kept_plans = filter_cycle_length(plans, cfg.cycle_target, cfg.cycle_tolerance)
        kept_ids = {p.segment_id for p in kept_plans}
        skipped.outside_cycle_filter = sum(len(by_segment[p.segment_id]) for p in plans if p.segment_id not in kept_ids)

        binned = {}
        for plan in kept_plans:
            sid = plan.segment_id
            points = bin_flows(by_segment[sid], cfg.bin_width)
            kept, dropped = filter_above_capacity(points, self._q_cap(segments[sid], points))
            if dropped:
                skipped.above_capacity += sum(b.count for b in points) - sum(b.count for b in kept)
            binned[sid] = kept

        if skipped.total():
            logger.warning(f"ingest skipped rows {' '.join(f'{k}={v}' for k, v in skipped.model_dump().items())}")
        paths = {
            "binned": write_binned(self.binned_path, binned),
            "plans": write_plan_stats(self.plans_path, kept_plans),
            "skipped": atomic_write_text(self.out_dir / "skipped.json", skipped.model_dump_json(indent=2) + "\n"),
        }
        logger.info(f"ingest done segments={len(binned)} bins={sum(len(b) for b in binned.values())}")
        return {"paths": paths, "skipped": skipped, "segments": sorted(binned)}

    def segment_data(self) -> List[SegmentData]:
        """Binned data joined with plan statistics and segment settings, sorted by segment id"""
        binned = read_binned(self.binned_path)
        if not any(binned.values()):
            raise DataError(f"{self.binned_path} holds no binned observations")
        plans = read_plan_stats(self.plans_path)
        segments = self._segments()
        data = []
        for sid in sorted(binned):
            if sid not in plans:
                raise DataError(f"segment {sid} has binned data but no signal plan statistics")
            if sid not in segments:
                raise ConfigError(f"segment {sid} is missing from the segments config")
            seg = segments[sid]
            data.append(SegmentData(segment_id=sid, binned=binned[sid], v_max=seg.v_max_kmh,
                                    q_cap=self._q_cap(seg, binned[sid]), g=plans[sid].g))
        return data

    def fit(self) -> Path:
        """Per-segment shape fits written one row per segment"""
        fits = fit_segments(self.segment_data(), self.config.fit, self.config.workers)
        return write_fits(self.fits_path, fits)

    def fit_theta(self, method: str = "two_stage") -> ThetaFit:
        """City-wide theta by two-stage regression on the fits file or by a joint pooled fit"""
        data = self.segment_data()
        if method == "two_stage":
            v_max = {seg.segment_id: seg.v_max for seg in data}
            fits = read_fits(self.fits_path, v_max)
            theta_fit = fit_theta_two_stage(fits, [seg for seg in data if seg.segment_id in {f.segment_id for f in fits}])
        elif method == "joint":
            theta_fit = fit_theta_joint(data, opts=self.config.fit)
        else:
            raise ConfigError(f"unknown theta method {method!r}; use two_stage or joint")
        write_theta(self.theta_path, theta_fit)
        return theta_fit

    def predict(self, g: float, v_max: float, q_cap: float, n_points: int, out: Path,
                segment_id: str = "") -> FdCurve:
        curve = predict_curve(read_theta(self.theta_path), g, v_max, q_cap, n_points)
        write_curve(out, curve.points, segment_id, curve.g)
        return curve

    def predict_segments(self, n_points: int, out_dir: Path) -> Dict[str, Path]:
        """One theta curve per ingested segment at its own g, v_max and q_cap"""
        theta = read_theta(self.theta_path)
        paths = {}
        for seg in self.segment_data():
            curve = predict_curve(theta, seg.g, seg.v_max, seg.q_cap, n_points)
            paths[seg.segment_id] = write_curve(Path(out_dir) / f"{seg.segment_id}.csv", curve.points,
                                                seg.segment_id, curve.g)
        return paths

    def audit_theta(self, v_max: float, q_cap: float, g_lo: float = THETA_CONFIG["g_lo"],
                    g_hi: float = THETA_CONFIG["g_hi"], n_green: int = AUDIT_CONFIG["n_green"],
                    n_flow: int = AUDIT_CONFIG["n_flow"]) -> AuditReport:
        """Monotone-in-g audit of the theta file on a uniform (g, q) grid with flows strictly inside (0, q_cap)"""
        if n_green < 2 or n_flow < 1:
            raise ConfigError(f"audit grid needs n_green >= 2 and n_flow >= 1, got {n_green} and {n_flow}")
        g_grid = np.linspace(g_lo, g_hi, n_green)
        q_grid = q_cap * np.arange(1, n_flow + 1) / (n_flow + 1)
        return audit_monotone_in_green(read_theta(self.theta_path), v_max, q_cap, g_grid, q_grid)

    def audit_fits(self, n_flow: int = AUDIT_CONFIG["n_flow"]) -> AuditReport:
        """Monotone-in-g audit across the per-segment fitted curves"""
        data = self.segment_data()
        fits = read_fits(self.fits_path, {seg.segment_id: seg.v_max for seg in data})
        q_top = max(b.bin_center for seg in data for b in seg.binned)
        q_low = min(b.bin_center for seg in data for b in seg.binned)
        return audit_fitted_curves(fits, np.linspace(q_low, q_top, n_flow))

    @staticmethod
    def simulate(spec_path, out_dir) -> Dict[str, object]:
        return generate_corpus(load_synthetic_specs(spec_path), out_dir)

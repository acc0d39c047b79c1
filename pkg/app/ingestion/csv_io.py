"""
CSV codecs for pipeline artifacts, written atomically
"""
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd
from pydantic import ValidationError

from app.errors import ConfigError, DataError, IoError, ParamError
from app.models import BinnedPoint, FdParams, SegmentFit, SignalPlanStats, SignalTheta, ThetaFit

BINNED_COLUMNS = ["segment_id", "bin_index", "bin_center", "mean_speed", "count"]
PLAN_COLUMNS = ["segment_id", "mean_cycle", "mean_green", "g"]
FIT_COLUMNS = ["segment_id", "g", "alpha", "beta", "q_cap", "rmse", "r2", "n", "converged"]
THETA_COLUMNS = ["method", "theta0", "theta1", "theta2", "theta3", "g_lo", "g_hi", "pooled_rmse"]
CURVE_COLUMNS = ["segment_id", "g", "flow", "speed"]

# Binned speeds and centers are written with a fixed 6 decimals
BINNED_FLOAT_FORMAT = "%.6f"


def atomic_write_text(path, text: str) -> Path:
    """Write text to path through a temp file in the same directory and a rename"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}") from e
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _write_frame(path, df: pd.DataFrame, float_format: str | None = None) -> Path:
    return atomic_write_text(path, df.to_csv(index=False, lineterminator="\n", float_format=float_format))


def _read_frame(path, columns: List[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, float_precision="round_trip", dtype={"segment_id": str})
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=columns)
    if list(df.columns) != columns:
        raise DataError(f"{path.name}: expected header {','.join(columns)}, got {','.join(map(str, df.columns))}")
    return df


def write_binned(path, binned: Dict[str, Sequence[BinnedPoint]]) -> Path:
    rows = [
        {"segment_id": sid, **b.model_dump()}
        for sid in sorted(binned) for b in binned[sid]
    ]
    return _write_frame(path, pd.DataFrame(rows, columns=BINNED_COLUMNS), BINNED_FLOAT_FORMAT)


def read_binned(path) -> Dict[str, List[BinnedPoint]]:
    df = _read_frame(path, BINNED_COLUMNS)
    binned: Dict[str, List[BinnedPoint]] = {}
    for line, row in enumerate(df.to_dict("records"), start=2):
        try:
            point = BinnedPoint(bin_index=int(row["bin_index"]), bin_center=float(row["bin_center"]),
                                mean_speed=float(row["mean_speed"]), count=int(row["count"]))
        except (ValidationError, ValueError) as e:
            raise DataError(f"{Path(path).name} line {line}: invalid bin ({e})") from e
        binned.setdefault(str(row["segment_id"]), []).append(point)
    return binned


def write_plan_stats(path, stats: Sequence[SignalPlanStats]) -> Path:
    rows = [s.model_dump() for s in sorted(stats, key=lambda s: s.segment_id)]
    return _write_frame(path, pd.DataFrame(rows, columns=PLAN_COLUMNS))


def read_plan_stats(path) -> Dict[str, SignalPlanStats]:
    df = _read_frame(path, PLAN_COLUMNS)
    try:
        return {str(row["segment_id"]): SignalPlanStats(**{**row, "segment_id": str(row["segment_id"])})
                for row in df.to_dict("records")}
    except ValidationError as e:
        raise DataError(f"{Path(path).name}: invalid plan statistics ({e.errors()[0]['msg']})") from e


def write_fits(path, fits: Sequence[SegmentFit]) -> Path:
    rows = [
        {"segment_id": f.segment_id, "g": f.g, "alpha": f.params.alpha, "beta": f.params.beta,
         "q_cap": f.params.q_cap, "rmse": f.rmse, "r2": f.r2, "n": f.n_points, "converged": f.converged}
        for f in fits
    ]
    return _write_frame(path, pd.DataFrame(rows, columns=FIT_COLUMNS))


def read_fits(path, v_max: Dict[str, float]) -> List[SegmentFit]:
    """Segment fits; v_max per segment comes from the segments config since the file does not carry it"""
    df = _read_frame(path, FIT_COLUMNS)
    fits = []
    for row in df.to_dict("records"):
        sid = str(row["segment_id"])
        if sid not in v_max:
            raise DataError(f"fit for segment {sid} has no configured v_max")
        try:
            params = FdParams(v_max=v_max[sid], q_cap=row["q_cap"], alpha=row["alpha"], beta=row["beta"])
            fits.append(SegmentFit(segment_id=sid, params=params, g=row["g"], rmse=row["rmse"], r2=row["r2"],
                                   n_points=int(row["n"]), converged=bool(row["converged"]), iterations=0))
        except ValidationError as e:
            raise DataError(f"fit row for segment {sid} is invalid: {e.errors()[0]['msg']}") from e
    return fits


def write_theta(path, fit: ThetaFit) -> Path:
    t = fit.theta
    row = {"method": fit.method, "theta0": t.theta0, "theta1": t.theta1, "theta2": t.theta2, "theta3": t.theta3,
           "g_lo": t.g_lo, "g_hi": t.g_hi, "pooled_rmse": fit.residual_summary}
    return _write_frame(path, pd.DataFrame([row], columns=THETA_COLUMNS))


def read_theta(path) -> SignalTheta:
    df = _read_frame(path, THETA_COLUMNS)
    if len(df) != 1:
        raise DataError(f"{Path(path).name}: expected exactly one theta row, got {len(df)}")
    row = df.iloc[0]
    try:
        return SignalTheta(**{k: float(row[k]) for k in ("theta0", "theta1", "theta2", "theta3", "g_lo", "g_hi")})
    except ValidationError as e:
        raise ParamError(f"{Path(path).name}: infeasible theta ({e.errors()[0]['msg']})") from e


def write_curve(path, points: Sequence[tuple], segment_id: str = "", g: float | None = None) -> Path:
    rows = [{"segment_id": segment_id, "g": g, "flow": q, "speed": v} for q, v in points]
    return _write_frame(path, pd.DataFrame(rows, columns=CURVE_COLUMNS))


def read_curves(paths: Sequence) -> Dict[str, List[tuple]]:
    """Curve points grouped by segment id across one or more curve files"""
    curves: Dict[str, List[tuple]] = {}
    for path in paths:
        df = _read_frame(path, CURVE_COLUMNS)
        df["segment_id"] = df["segment_id"].fillna("").astype(str)
        for sid, group in df.groupby("segment_id", sort=True):
            curves.setdefault(sid, []).extend(zip(group["flow"].astype(float), group["speed"].astype(float)))
    return curves

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Literal, Tuple
from datetime import datetime

from app.fd.config import FIT_CONFIG, PROTOCOL_CONFIG, THETA_CONFIG


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True)


# ------------------ FD model ------------------
class FdParams(FrozenModel):
    v_max: float = Field(gt=0, allow_inf_nan=False)  # km/h
    q_cap: float = Field(gt=0, allow_inf_nan=False)  # veh/hr-lane
    alpha: float = Field(gt=0, allow_inf_nan=False)
    beta: float = Field(gt=0, allow_inf_nan=False)


class GreenSplit(FrozenModel):
    g: float = Field(gt=0, lt=1)

    @classmethod
    def of(cls, value: "GreenSplit | float") -> "GreenSplit":
        return value if isinstance(value, GreenSplit) else cls(g=value)

    def __float__(self) -> float:
        return self.g


class SignalTheta(FrozenModel):
    theta0: float
    theta1: float
    theta2: float
    theta3: float
    g_lo: float = THETA_CONFIG["g_lo"]
    g_hi: float = THETA_CONFIG["g_hi"]

    @model_validator(mode="after")
    def check_supported_range(self):
        if not 0 < self.g_lo <= self.g_hi < 1:
            raise ValueError(f"green split range [{self.g_lo}, {self.g_hi}] must lie in (0, 1)")
        # Both lines are linear in g, so the endpoints decide positivity
        for g in (self.g_lo, self.g_hi):
            if self.beta_at(g) <= 0 or self.ratio_at(g) <= 0:
                raise ValueError(f"theta yields non-positive beta or beta/alpha at g={g}")
        return self

    def beta_at(self, g: float) -> float:
        return self.theta0 + self.theta1 * g

    def ratio_at(self, g: float) -> float:
        return self.theta2 + self.theta3 * g

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.theta0, self.theta1, self.theta2, self.theta3)


class FdCurve(FrozenModel):
    points: List[Tuple[float, float]]  # (flow, speed)
    params: FdParams
    g: Optional[float] = None

    @model_validator(mode="after")
    def check_shape(self):
        flows = [p[0] for p in self.points]
        speeds = [p[1] for p in self.points]
        if any(b <= a for a, b in zip(flows, flows[1:])):
            raise ValueError("curve flows must be strictly increasing")
        if flows and (flows[0] < 0 or flows[-1] > self.params.q_cap):
            raise ValueError("curve flows must lie within [0, q_cap]")
        if any(b > a for a, b in zip(speeds, speeds[1:])):
            raise ValueError("curve speeds must be non-increasing")
        return self


class AuditViolation(FrozenModel):
    q: float
    g_low: float
    g_high: float
    delta_v: float  # speed(g_high) - speed(g_low), negative on violation


class AuditReport(FrozenModel):
    passed: bool
    violations: List[AuditViolation] = []
    comparisons: int = 0


# ------------------ Observations ------------------
class CountRecord(FrozenModel):
    segment_id: str
    lane_id: str
    timestamp: datetime
    count: int = Field(ge=0)


class SpeedRecord(FrozenModel):
    segment_id: str
    timestamp: datetime
    speed: float = Field(ge=0, allow_inf_nan=False)  # km/h, space-mean


class SegmentObservation(FrozenModel):
    segment_id: str
    hour_start: datetime
    flow: float = Field(ge=0, allow_inf_nan=False)  # veh/hr-lane
    speed: float = Field(ge=0, allow_inf_nan=False)  # km/h

    @field_validator("hour_start")
    @classmethod
    def check_hour_aligned(cls, value: datetime) -> datetime:
        if value.minute or value.second or value.microsecond:
            raise ValueError(f"hour_start {value.isoformat()} is not aligned to the hour")
        return value


class BinnedPoint(FrozenModel):
    bin_index: int = Field(ge=0)
    bin_center: float  # veh/hr-lane
    mean_speed: float = Field(ge=0, allow_inf_nan=False)
    count: int = Field(ge=1)


class SkipReport(BaseModel):
    counts_without_speed: int = 0
    speeds_without_counts: int = 0
    outside_study_window: int = 0
    outside_cycle_filter: int = 0
    without_signal_plan: int = 0
    above_capacity: int = 0

    def total(self) -> int:
        return sum(self.model_dump().values())


class HourlyAggregate(FrozenModel):
    observations: List[SegmentObservation]
    skipped: SkipReport


# ------------------ Signal plans ------------------
class SignalEvent(FrozenModel):
    timestamp: float  # seconds
    phase: int
    kind: Literal["green_start", "green_end", "cycle_start"]


class SignalPlanStats(FrozenModel):
    segment_id: str
    mean_cycle: float  # seconds
    mean_green: float  # seconds
    g: float = Field(gt=0, lt=1)

    @model_validator(mode="after")
    def check_green_within_cycle(self):
        if not 0 < self.mean_green < self.mean_cycle:
            raise ValueError("mean green must lie strictly between 0 and the mean cycle")
        return self


# ------------------ Calibration ------------------
class FitOptions(FrozenModel):
    max_iter: int = Field(default=FIT_CONFIG["max_iter"], ge=1)
    grad_tol: float = Field(default=FIT_CONFIG["grad_tol"], gt=0)
    step_tol: float = Field(default=FIT_CONFIG["step_tol"], gt=0)
    initial_alpha: float = Field(default=FIT_CONFIG["initial_alpha"], gt=0)
    initial_beta: float = Field(default=FIT_CONFIG["initial_beta"], gt=0)
    lambda0: float = Field(default=FIT_CONFIG["lambda0"], gt=0)
    weight_by_count: bool = FIT_CONFIG["weight_by_count"]


class LmResult(FrozenModel):
    solution: Tuple[float, ...]
    converged: bool
    iterations: int
    cost: float  # 0.5 * ||r||^2 at the solution
    cost_history: List[float] = []  # cost after every accepted step, starting with the initial cost


class SegmentFit(FrozenModel):
    segment_id: str
    params: FdParams
    g: float = Field(gt=0, lt=1)
    rmse: float = Field(ge=0)  # km/h, count-weighted
    r2: float = Field(le=1)
    n_points: int = Field(ge=3)
    converged: bool
    iterations: int = Field(ge=0)


class ThetaFit(FrozenModel):
    theta: SignalTheta
    method: Literal["two_stage", "joint"]
    per_segment: List[SegmentFit] = Field(min_length=1)
    residual_summary: Optional[float] = None  # pooled rmse of normalized speeds
    converged: bool = True
    iterations: int = 0

    @model_validator(mode="after")
    def check_green_spread(self):
        if len({fit.g for fit in self.per_segment}) < 2:
            raise ValueError("theta fit needs at least two distinct green splits")
        return self


class Metrics(FrozenModel):
    rmse: float
    r2: float
    n: int


class SegmentData(FrozenModel):
    segment_id: str
    binned: List[BinnedPoint]
    v_max: float = Field(gt=0)
    q_cap: float = Field(gt=0)
    g: float = Field(gt=0, lt=1)


# ------------------ Configuration ------------------
class SegmentConfig(FrozenModel):
    lane_count: int = Field(ge=1)
    v_max_kmh: float = Field(gt=0)
    q_cap: Optional[float] = Field(default=None, gt=0)
    events: Optional[str] = None  # signal event CSV, relative to the config file


class SyntheticSegmentSpec(FrozenModel):
    segment_id: str
    length: float = Field(gt=0)  # m
    v_max: float = Field(gt=0)  # km/h
    cycle: float = Field(gt=0)  # s
    g: float = Field(gt=0, lt=1)
    sat_flow: float = Field(gt=0)  # veh/hr-lane
    demand_grid: List[float]  # veh/hr-lane
    noise_sigma: float = Field(default=0.0, ge=0)  # km/h
    seed: int = 0
    lane_count: int = Field(default=2, ge=1)


class RunConfig(BaseModel):
    counts: Optional[str] = None
    speeds: Optional[str] = None
    segments: Optional[str] = None
    binned: Optional[str] = None
    plans: Optional[str] = None
    fits: Optional[str] = None
    theta: Optional[str] = None
    out_dir: str = "out"
    study_start_hour: int = Field(default=PROTOCOL_CONFIG["study_start_hour"], ge=0, le=24)
    study_end_hour: int = Field(default=PROTOCOL_CONFIG["study_end_hour"], ge=0, le=24)
    bin_width: float = Field(default=PROTOCOL_CONFIG["bin_width"], gt=0)
    cycle_target: float = PROTOCOL_CONFIG["cycle_target"]
    cycle_tolerance: float = Field(default=PROTOCOL_CONFIG["cycle_tolerance"], ge=0)
    phases: List[int] = list(PROTOCOL_CONFIG["phases"])
    min_bin_count: int = Field(default=PROTOCOL_CONFIG["min_bin_count_for_capacity"], ge=1)
    fit: FitOptions = FitOptions()
    workers: int = Field(default=1, ge=1)

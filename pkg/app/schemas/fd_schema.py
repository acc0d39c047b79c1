from pydantic import BaseModel, Field
from typing import List

from app.fd.config import AUDIT_CONFIG, THETA_CONFIG
from app.models import FdParams, SignalTheta


class SpeedRequest(BaseModel):
    params: FdParams
    flows: List[float] = Field(min_length=1)  # veh/hr-lane


class CurveRequest(BaseModel):
    theta: SignalTheta
    g: float = Field(gt=0, lt=1)
    v_max: float = Field(gt=0)
    q_cap: float = Field(gt=0)
    n_points: int = Field(default=50, ge=2, le=10000)


class AuditRequest(BaseModel):
    theta: SignalTheta
    v_max: float = Field(gt=0)
    q_cap: float = Field(gt=0)
    g_lo: float = Field(default=THETA_CONFIG["g_lo"], gt=0, lt=1)
    g_hi: float = Field(default=THETA_CONFIG["g_hi"], gt=0, lt=1)
    n_green: int = Field(default=AUDIT_CONFIG["n_green"], ge=2, le=1000)
    n_flow: int = Field(default=AUDIT_CONFIG["n_flow"], ge=1, le=10000)

from pydantic import BaseModel, Field
from typing import List, Optional

from app.models import BinnedPoint, FitOptions, SegmentFit


class SegmentFitRequest(BaseModel):
    segment_id: str = "segment"
    binned: List[BinnedPoint] = Field(min_length=1)
    v_max: float = Field(gt=0)
    g: float = Field(gt=0, lt=1)
    q_cap: Optional[float] = Field(default=None, gt=0)  # estimated from the bins when omitted
    options: FitOptions = FitOptions()


class ThetaFitRequest(BaseModel):
    fits: List[SegmentFit] = Field(min_length=2)

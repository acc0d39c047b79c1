from fastapi import APIRouter, HTTPException

from app.schemas.calibration_schema import SegmentFitRequest, ThetaFitRequest
from app.services.fd_service import FdService

router = APIRouter(prefix="/calibration", tags=["Calibration"])

# Initialize service
fd_service = FdService()


@router.post("/segment")
async def fit_segment(request: SegmentFitRequest):
    """Fit the FD shape of one segment to its binned observations"""
    result = await fd_service.fit_segment(request)
    if result.get("success"):
        return {"message": "Segment fitted successfully", "data": result["data"]}
    raise HTTPException(status_code=422, detail=result["message"])


@router.post("/theta")
async def fit_theta(request: ThetaFitRequest):
    """Two-stage theta regression over per-segment fits"""
    result = await fd_service.fit_theta(request)
    if result.get("success"):
        return {"message": "Theta fitted successfully", "data": result["data"]}
    raise HTTPException(status_code=422, detail=result["message"])

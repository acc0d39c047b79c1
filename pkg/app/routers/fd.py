from fastapi import APIRouter, HTTPException

from app.schemas.fd_schema import AuditRequest, CurveRequest, SpeedRequest
from app.services.fd_service import FdService

router = APIRouter(prefix="/fd", tags=["Fundamental Diagram"])

# Initialize service
fd_service = FdService()


@router.post("/speed")
async def evaluate_speed(request: SpeedRequest):
    """Speeds on a segment FD at the given flows"""
    result = await fd_service.speed(request)
    if result.get("success"):
        return {"message": "Speeds evaluated successfully", "data": result["data"]}
    raise HTTPException(status_code=422, detail=result["message"])


@router.post("/curve")
async def predict_curve(request: CurveRequest):
    """Signal-parametrized FD curve sampled over [0, q_cap]"""
    result = await fd_service.curve(request)
    if result.get("success"):
        return {"message": "Curve predicted successfully", "data": result["data"]}
    raise HTTPException(status_code=422, detail=result["message"])


@router.post("/audit")
async def audit_theta(request: AuditRequest):
    """Check that curves do not drop as the green split grows"""
    result = await fd_service.audit(request)
    if result.get("success"):
        return {"message": "Audit completed", "data": result["data"]}
    raise HTTPException(status_code=422, detail=result["message"])

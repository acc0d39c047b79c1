"""
FD evaluation and calibration service for the HTTP surface
"""
import logging
from typing import Dict

import numpy as np

from app.errors import FdToolkitError
from app.fd.calibration import estimate_qcap, filter_above_capacity, fit_segment, fit_theta_two_stage
from app.fd.fd_model import audit_monotone_in_green, eval_speed_array, predict_curve
from app.schemas.calibration_schema import SegmentFitRequest, ThetaFitRequest
from app.schemas.fd_schema import AuditRequest, CurveRequest, SpeedRequest

logger = logging.getLogger(__name__)


class FdService:
    """Wraps the FD library calls in success/message result dicts"""

    async def speed(self, request: SpeedRequest) -> Dict:
        try:
            speeds = eval_speed_array(request.params, request.flows)
            return {"success": True, "data": {"flows": request.flows, "speeds": [float(v) for v in speeds]}}
        except FdToolkitError as e:
            return {"success": False, "message": str(e)}

    async def curve(self, request: CurveRequest) -> Dict:
        try:
            curve = predict_curve(request.theta, request.g, request.v_max, request.q_cap, request.n_points)
            return {"success": True, "data": curve.model_dump()}
        except FdToolkitError as e:
            return {"success": False, "message": str(e)}

    async def audit(self, request: AuditRequest) -> Dict:
        try:
            if request.g_hi <= request.g_lo:
                return {"success": False, "message": "g_hi must exceed g_lo"}
            g_grid = np.linspace(request.g_lo, request.g_hi, request.n_green)
            q_grid = request.q_cap * np.arange(1, request.n_flow + 1) / (request.n_flow + 1)
            report = audit_monotone_in_green(request.theta, request.v_max, request.q_cap, g_grid, q_grid)
            return {"success": True, "data": report.model_dump()}
        except FdToolkitError as e:
            return {"success": False, "message": str(e)}

    async def fit_segment(self, request: SegmentFitRequest) -> Dict:
        try:
            q_cap = request.q_cap or estimate_qcap(request.binned)
            binned, dropped = filter_above_capacity(request.binned, q_cap)
            fit = fit_segment(binned, request.v_max, q_cap, request.g, request.options, request.segment_id)
            return {"success": True, "data": {**fit.model_dump(), "dropped_bins": dropped}}
        except FdToolkitError as e:
            logger.warning(f"segment fit rejected segment={request.segment_id} error={e}")
            return {"success": False, "message": str(e)}

    async def fit_theta(self, request: ThetaFitRequest) -> Dict:
        try:
            return {"success": True, "data": fit_theta_two_stage(request.fits).model_dump()}
        except FdToolkitError as e:
            return {"success": False, "message": str(e)}

"""
Calibration of per-segment FD shapes and city-wide theta coefficients
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.errors import DataError, ParamError
from app.fd.config import AUDIT_CONFIG, PROTOCOL_CONFIG
from app.fd.fd_model import (
    as_green_split, eval_speed_array, make_params, normalized_speed, normalized_speed_grad, params_from_signal,
)
from app.fd.solver import lm_minimize
from app.models import (
    AuditReport, AuditViolation, BinnedPoint, FitOptions, Metrics, SegmentData, SegmentFit, SignalTheta, ThetaFit,
)

logger = logging.getLogger(__name__)


def estimate_qcap(binned: Sequence[BinnedPoint], min_count: int = PROTOCOL_CONFIG["min_bin_count_for_capacity"],
                  width: float = PROTOCOL_CONFIG["bin_width"]) -> float:
    """Upper edge of the highest-flow bin holding at least min_count observations"""
    qualifying = [b for b in binned if b.count >= min_count]
    if not qualifying:
        raise DataError(f"no bin has at least {min_count} observations; cannot estimate capacity")
    top = max(qualifying, key=lambda b: b.bin_center)
    return top.bin_center + width / 2.0


def filter_above_capacity(binned: Sequence[BinnedPoint], q_cap: float) -> Tuple[List[BinnedPoint], int]:
    """Keep bins whose center lies strictly inside (0, q_cap); return kept bins and the dropped count"""
    kept = [b for b in binned if 0.0 < b.bin_center < q_cap]
    dropped = len(binned) - len(kept)
    if dropped:
        logger.warning(f"dropped bins outside (0, q_cap) count={dropped} q_cap={q_cap}")
    return kept, dropped


def weighted_metrics(observed: Sequence[float], predicted: Sequence[float],
                     weights: Sequence[float] | None = None) -> Metrics:
    """Weighted rmse and r2 of predictions against observations"""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.size == 0:
        raise DataError("cannot compute goodness of fit on empty data")
    w = np.ones_like(obs) if weights is None else np.asarray(weights, dtype=float)

    total_w = float(np.sum(w))
    ss_res = float(np.sum(w * (obs - pred) ** 2))
    mean = float(np.sum(w * obs)) / total_w
    ss_tot = float(np.sum(w * (obs - mean) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return Metrics(rmse=float(np.sqrt(ss_res / total_w)), r2=r2, n=int(obs.size))


def _check_bins(binned: Sequence[BinnedPoint], q_cap: float) -> None:
    if len(binned) < 3:
        raise DataError(f"need at least 3 bins to fit two shape parameters, got {len(binned)}")
    outside = [b.bin_center for b in binned if not 0.0 < b.bin_center < q_cap]
    if outside:
        raise DataError(f"bin centers {outside} lie outside (0, {q_cap})")


def _bin_arrays(binned: Sequence[BinnedPoint], weight_by_count: bool):
    centers = np.array([b.bin_center for b in binned], dtype=float)
    speeds = np.array([b.mean_speed for b in binned], dtype=float)
    weights = np.array([b.count if weight_by_count else 1 for b in binned], dtype=float)
    return centers, speeds, weights


def fit_segment(binned: Sequence[BinnedPoint], v_max: float, q_cap: float, g: float,
                opts: FitOptions | None = None, segment_id: str = "segment") -> SegmentFit:
    """
    Fit (alpha, beta) of one segment by count-weighted least squares on speeds.

    The solver works on (log alpha, log beta) so both stay positive. q_cap and
    v_max are fixed inputs.
    """
    opts = opts or FitOptions()
    g = as_green_split(g).g
    _check_bins(binned, q_cap)
    centers, speeds, weights = _bin_arrays(binned, opts.weight_by_count)

    u = centers / q_cap
    y = speeds / v_max
    sw = np.sqrt(weights)

    def residual(p):
        alpha, beta = np.exp(p)
        return sw * (normalized_speed(u, alpha, beta) - y)

    def jacobian(p):
        alpha, beta = np.exp(p)
        dy_dalpha, dy_dbeta = normalized_speed_grad(u, alpha, beta)
        return np.column_stack([sw * dy_dalpha * alpha, sw * dy_dbeta * beta])

    init = np.log([opts.initial_alpha, opts.initial_beta])
    result = lm_minimize(residual, jacobian, init, opts)
    alpha, beta = np.exp(result.solution)
    params = make_params(v_max, q_cap, float(alpha), float(beta))

    metrics = weighted_metrics(speeds, eval_speed_array(params, centers), weights)
    if result.converged:
        logger.info(f"segment fit segment={segment_id} alpha={params.alpha:.6g} beta={params.beta:.6g} "
                    f"rmse={metrics.rmse:.4g} iterations={result.iterations}")
    else:
        logger.warning(f"segment fit did not converge segment={segment_id} iterations={result.iterations}")
    return SegmentFit(segment_id=segment_id, params=params, g=g, rmse=metrics.rmse, r2=metrics.r2,
                      n_points=len(binned), converged=result.converged, iterations=result.iterations)


def fit_segments(segments: Sequence[SegmentData], opts: FitOptions | None = None,
                 workers: int = 1) -> List[SegmentFit]:
    """Fit every segment independently; output order follows the input order"""
    def fit_one(seg: SegmentData) -> SegmentFit:
        return fit_segment(seg.binned, seg.v_max, seg.q_cap, seg.g, opts, segment_id=seg.segment_id)

    if workers <= 1:
        return [fit_one(seg) for seg in segments]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fit_one, segments))


def _make_theta(coefficients: Sequence[float], greens: Sequence[float]) -> SignalTheta:
    theta0, theta1, theta2, theta3 = (float(c) for c in coefficients)
    try:
        return SignalTheta(theta0=theta0, theta1=theta1, theta2=theta2, theta3=theta3,
                           g_lo=min(greens), g_hi=max(greens))
    except ValidationError as e:
        raise ParamError(f"fitted theta is infeasible over the observed green splits: {e.errors()[0]['msg']}") from e


def _check_green_spread(greens: Sequence[float]) -> None:
    if len(greens) < 2:
        raise DataError(f"need at least 2 segments to fit theta, got {len(greens)}")
    if np.ptp(greens) == 0:
        raise DataError("all segments share the same green split; theta regression is singular")


def _pooled_arrays(segments: Sequence[SegmentData], weight_by_count: bool):
    u, y, w, g = [], [], [], []
    for seg in segments:
        centers, speeds, weights = _bin_arrays(seg.binned, weight_by_count)
        u.append(centers / seg.q_cap)
        y.append(speeds / seg.v_max)
        w.append(weights)
        g.append(np.full(centers.size, seg.g))
    return np.concatenate(u), np.concatenate(y), np.concatenate(w), np.concatenate(g)


def _pooled_metrics(theta: SignalTheta, segments: Sequence[SegmentData], weight_by_count: bool) -> Metrics:
    observed, predicted, weights = [], [], []
    for seg in segments:
        centers, speeds, seg_weights = _bin_arrays(seg.binned, weight_by_count)
        params = params_from_signal(theta, seg.g, seg.v_max, seg.q_cap)
        observed.append(speeds / seg.v_max)
        predicted.append(eval_speed_array(params, centers) / seg.v_max)
        weights.append(seg_weights)
    return weighted_metrics(np.concatenate(observed), np.concatenate(predicted), np.concatenate(weights))


def pooled_rmse(theta: SignalTheta, segments: Sequence[SegmentData], weight_by_count: bool = True) -> float:
    """Weighted rmse of normalized speeds across segments under theta"""
    return _pooled_metrics(theta, segments, weight_by_count).rmse


def fit_theta_two_stage(fits: Sequence[SegmentFit], segments: Sequence[SegmentData] | None = None) -> ThetaFit:
    """
    Regress per-segment beta and beta/alpha on g by ordinary least squares.

    When the binned data behind the fits is supplied, the pooled rmse of
    normalized speeds under the resulting theta is reported.
    """
    greens = np.array([f.g for f in fits], dtype=float)
    _check_green_spread(greens)
    unconverged = [f.segment_id for f in fits if not f.converged]
    if unconverged:
        raise DataError(f"segment fits did not converge: {', '.join(unconverged)}")

    betas = np.array([f.params.beta for f in fits])
    ratios = np.array([f.params.beta / f.params.alpha for f in fits])
    design = np.column_stack([np.ones_like(greens), greens])
    (theta0, theta1), *_ = np.linalg.lstsq(design, betas, rcond=None)
    (theta2, theta3), *_ = np.linalg.lstsq(design, ratios, rcond=None)
    theta = _make_theta((theta0, theta1, theta2, theta3), greens)

    summary = pooled_rmse(theta, segments) if segments else None
    logger.info(f"theta two-stage theta={theta.as_tuple()} segments={len(fits)} pooled_rmse={summary}")
    return ThetaFit(theta=theta, method="two_stage", per_segment=list(fits), residual_summary=summary)


def fit_theta_joint(segments: Sequence[SegmentData], init: SignalTheta | None = None,
                    opts: FitOptions | None = None) -> ThetaFit:
    """
    Fit theta directly to the pooled normalized speeds of all segments.

    Starts from init, or from the two-stage estimate when init is None.
    Iterates that make beta or beta/alpha non-positive for any observed g are
    rejected by the solver like any other failed step.
    """
    opts = opts or FitOptions()
    greens = [seg.g for seg in segments]
    _check_green_spread(greens)
    for seg in segments:
        _check_bins(seg.binned, seg.q_cap)

    if init is None:
        init = fit_theta_two_stage(fit_segments(segments, opts), segments).theta
    infeasible = [g for g in greens if init.beta_at(g) <= 0 or init.ratio_at(g) <= 0]
    if infeasible:
        raise ParamError(f"initial theta is infeasible at g={infeasible}")

    u, y, w, g = _pooled_arrays(segments, opts.weight_by_count)
    sw = np.sqrt(w)

    def residual(theta):
        beta = theta[0] + theta[1] * g
        ratio = theta[2] + theta[3] * g
        if np.any(beta <= 0) or np.any(ratio <= 0):
            return np.full(u.size, np.nan)
        return sw * (normalized_speed(u, beta / ratio, beta) - y)

    def jacobian(theta):
        beta = theta[0] + theta[1] * g
        ratio = theta[2] + theta[3] * g
        dy_dalpha, dy_dbeta = normalized_speed_grad(u, beta / ratio, beta)
        d0 = dy_dbeta + dy_dalpha / ratio
        d2 = -dy_dalpha * beta / ratio ** 2
        return sw[:, None] * np.column_stack([d0, g * d0, d2, g * d2])

    result = lm_minimize(residual, jacobian, init.as_tuple(), opts)
    theta = _make_theta(result.solution, greens)

    per_segment = []
    for seg in segments:
        params = params_from_signal(theta, seg.g, seg.v_max, seg.q_cap)
        centers, speeds, weights = _bin_arrays(seg.binned, opts.weight_by_count)
        metrics = weighted_metrics(speeds, eval_speed_array(params, centers), weights)
        per_segment.append(SegmentFit(segment_id=seg.segment_id, params=params, g=seg.g, rmse=metrics.rmse,
                                      r2=metrics.r2, n_points=len(seg.binned), converged=result.converged,
                                      iterations=result.iterations))

    summary = pooled_rmse(theta, segments, opts.weight_by_count)
    if not result.converged:
        logger.warning(f"theta joint fit did not converge iterations={result.iterations}")
    logger.info(f"theta joint theta={theta.as_tuple()} segments={len(segments)} pooled_rmse={summary:.6g}")
    return ThetaFit(theta=theta, method="joint", per_segment=per_segment, residual_summary=summary,
                    converged=result.converged, iterations=result.iterations)


def goodness(fit: SegmentFit | ThetaFit, data) -> Metrics:
    """
    Weighted rmse and r2 of a fitted model against binned data.

    A SegmentFit is scored on a list of BinnedPoint in km/h; a ThetaFit is
    scored on a list of SegmentData in normalized speed units.
    """
    if not data:
        raise DataError("cannot compute goodness of fit on empty data")
    if isinstance(fit, SegmentFit):
        outside = [b.bin_center for b in data if not 0.0 <= b.bin_center <= fit.params.q_cap]
        if outside:
            raise DataError(f"bin centers {outside} outside [0, {fit.params.q_cap}]")
        centers, speeds, weights = _bin_arrays(data, weight_by_count=True)
        return weighted_metrics(speeds, eval_speed_array(fit.params, centers), weights)

    return _pooled_metrics(fit.theta, data, weight_by_count=True)


def audit_fitted_curves(fits: Sequence[SegmentFit], q_grid: Sequence[float]) -> AuditReport:
    """
    Monotone-in-g audit over independently fitted segment curves.

    Curves are compared in normalized speed at shared flows, each with its own
    q_cap; a flow is skipped for a pair when it is not inside both domains.
    """
    ordered = sorted(fits, key=lambda f: f.g)
    tol = AUDIT_CONFIG["tolerance_factor"]
    violations = []
    comparisons = 0
    for low, high in zip(ordered, ordered[1:]):
        if high.g == low.g:
            continue
        for q in q_grid:
            if not (0.0 < q < low.params.q_cap and 0.0 < q < high.params.q_cap):
                continue
            comparisons += 1
            y_low = float(eval_speed_array(low.params, [q])[0]) / low.params.v_max
            y_high = float(eval_speed_array(high.params, [q])[0]) / high.params.v_max
            if y_high - y_low < -tol:
                violations.append(AuditViolation(q=float(q), g_low=low.g, g_high=high.g, delta_v=y_high - y_low))
    if violations:
        logger.warning(f"fitted curve audit failed violations={len(violations)} comparisons={comparisons}")
    return AuditReport(passed=not violations, violations=violations, comparisons=comparisons)

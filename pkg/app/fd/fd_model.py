"""
Signal-parametrized speed-flow fundamental diagram.

The segment FD relates space-mean speed to per-lane flow,

    v = v_max * (1 - (q / q_cap) ** alpha) ** beta,

and the signal-parametrized variant makes beta and beta / alpha linear in
the green split g through the city-wide coefficients theta0..theta3.
Everything here is a pure function of its inputs.
"""
import logging
from typing import Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.errors import DomainError, ParamError
from app.fd.config import AUDIT_CONFIG
from app.models import AuditReport, AuditViolation, FdCurve, FdParams, GreenSplit, SignalTheta

logger = logging.getLogger(__name__)


def make_params(v_max: float, q_cap: float, alpha: float, beta: float) -> FdParams:
    """Build FdParams, reporting invariant violations as ParamError"""
    try:
        return FdParams(v_max=v_max, q_cap=q_cap, alpha=alpha, beta=beta)
    except ValidationError as e:
        raise ParamError(
            f"invalid FD parameters v_max={v_max} q_cap={q_cap} alpha={alpha} beta={beta}: {e.errors()[0]['msg']}"
        ) from e


def as_green_split(g: "GreenSplit | float") -> GreenSplit:
    try:
        return GreenSplit.of(g)
    except ValidationError as e:
        raise ParamError(f"green split must lie in (0, 1), got {g}") from e


def normalized_speed(u: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Speed over v_max at normalized flows u = q / q_cap in [0, 1]"""
    return (1.0 - u ** alpha) ** beta


def normalized_speed_grad(u: np.ndarray, alpha: float, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Partials of normalized_speed with respect to (alpha, beta) for u in (0, 1)"""
    ua = u ** alpha
    base = 1.0 - ua
    y = base ** beta
    dy_dbeta = y * np.log(base)
    dy_dalpha = -beta * base ** (beta - 1.0) * ua * np.log(u)
    return dy_dalpha, dy_dbeta


def eval_speed(params: FdParams, q: float) -> float:
    """Speed in km/h at flow q (veh/hr-lane); q must lie in [0, q_cap]"""
    # shares the array kernel, scalar and vectorized speeds are bit-identical
    return float(eval_speed_array(params, [q])[0])


def eval_speed_array(params: FdParams, q: Sequence[float]) -> np.ndarray:
    """Vectorized eval_speed with the same domain rule"""
    q = np.asarray(q, dtype=float)
    if q.size and not (np.all(q >= 0.0) and np.all(q <= params.q_cap)):
        bad = q[~((q >= 0.0) & (q <= params.q_cap))][0]
        raise DomainError(f"flow {bad} outside [0, {params.q_cap}]")
    return params.v_max * normalized_speed(q / params.q_cap, params.alpha, params.beta)


def eval_speed_grad(params: FdParams, q: float) -> Tuple[float, float]:
    """Analytic (dv/dalpha, dv/dbeta) at an interior flow 0 < q < q_cap"""
    if not 0.0 < q < params.q_cap:
        raise DomainError(f"gradient undefined at flow {q}; need 0 < q < {params.q_cap}")
    dy_dalpha, dy_dbeta = normalized_speed_grad(np.asarray(q / params.q_cap), params.alpha, params.beta)
    return float(params.v_max * dy_dalpha), float(params.v_max * dy_dbeta)


def params_from_signal(theta: SignalTheta, g: "GreenSplit | float", v_max: float, q_cap: float) -> FdParams:
    """FD parameters implied by theta at green split g"""
    g = as_green_split(g).g
    beta = theta.beta_at(g)
    ratio = theta.ratio_at(g)
    if beta <= 0 or ratio <= 0:
        raise ParamError(f"theta incompatible with g={g}: beta={beta:.6g} beta/alpha={ratio:.6g}")
    return make_params(v_max, q_cap, beta / ratio, beta)


def predict_curve(theta: SignalTheta, g: "GreenSplit | float", v_max: float, q_cap: float,
                  n_points: int) -> FdCurve:
    """Sample the signal-parametrized FD on a uniform flow grid over [0, q_cap]"""
    if n_points < 2:
        raise ParamError(f"n_points must be at least 2, got {n_points}")
    green = as_green_split(g)
    params = params_from_signal(theta, green, v_max, q_cap)
    # linspace returns both endpoints exactly
    flows = np.linspace(0.0, q_cap, n_points)
    speeds = eval_speed_array(params, flows)
    return FdCurve(points=[(float(q), float(v)) for q, v in zip(flows, speeds)], params=params, g=green.g)


def audit_monotone_in_green(theta: SignalTheta, v_max: float, q_cap: float,
                            g_grid: Sequence[float], q_grid: Sequence[float]) -> AuditReport:
    """
    Check that curves shift up as the green split grows.

    For every flow in q_grid and each adjacent pair g_i < g_{i+1}, the speed at
    g_{i+1} must not fall below the speed at g_i by more than 1e-9 * v_max.
    This is a diagnostic: theta values exist for which it fails.
    """
    greens = [as_green_split(g).g for g in g_grid]
    if any(b <= a for a, b in zip(greens, greens[1:])):
        raise ParamError("g_grid must be strictly increasing")
    flows = np.asarray(q_grid, dtype=float)
    if flows.size and not (np.all(flows > 0) and np.all(flows < q_cap)):
        raise DomainError(f"audit flows must lie within (0, {q_cap})")

    tol = AUDIT_CONFIG["tolerance_factor"] * v_max
    speeds = [eval_speed_array(params_from_signal(theta, g, v_max, q_cap), flows) for g in greens]
    violations = []
    comparisons = 0
    for (g_low, v_low), (g_high, v_high) in zip(zip(greens, speeds), zip(greens[1:], speeds[1:])):
        delta = v_high - v_low
        comparisons += flows.size
        for q, dv in zip(flows[delta < -tol], delta[delta < -tol]):
            violations.append(AuditViolation(q=float(q), g_low=g_low, g_high=g_high, delta_v=float(dv)))

    if violations:
        logger.warning(f"green audit failed violations={len(violations)} comparisons={comparisons}")
    return AuditReport(passed=not violations, violations=violations, comparisons=comparisons)


def eval_speed_grad_array(params: FdParams, q: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized eval_speed_grad; every flow must lie strictly inside (0, q_cap)"""
    q = np.asarray(q, dtype=float)
    if q.size and not (np.all(q > 0.0) and np.all(q < params.q_cap)):
        raise DomainError(f"gradient undefined outside (0, {params.q_cap})")
    dy_dalpha, dy_dbeta = normalized_speed_grad(q / params.q_cap, params.alpha, params.beta)
    return params.v_max * dy_dalpha, params.v_max * dy_dbeta

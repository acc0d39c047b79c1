"""
Levenberg-Marquardt minimizer for small dense least-squares problems
"""
import logging
from typing import Callable, Sequence

import numpy as np

from app.errors import NumericalError
from app.fd.config import FIT_CONFIG
from app.models import FitOptions, LmResult

logger = logging.getLogger(__name__)

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]


def _evaluate(fn, x: np.ndarray, what: str) -> np.ndarray:
    with np.errstate(all="ignore"):
        value = np.asarray(fn(x), dtype=float)
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{what} is not finite at x={x.tolist()}")
    return value


def _trial(fn, x: np.ndarray) -> np.ndarray | None:
    """Residual at a trial point, or None when it is not finite"""
    with np.errstate(all="ignore"):
        value = np.asarray(fn(x), dtype=float)
    return value if np.all(np.isfinite(value)) else None


def lm_minimize(residual: ResidualFn, jacobian: JacobianFn, init: Sequence[float],
                opts: FitOptions | None = None) -> LmResult:
    """
    Minimize 0.5 * ||residual(x)||^2 from init.

    Steps solve (J^T J + lambda * diag(J^T J)) dx = -J^T r. A step is accepted
    only when it lowers the objective; damping then shrinks, otherwise it grows
    and the step is retried. Trial points with non-finite residuals count as
    rejections. Stops when ||J^T r||_inf <= grad_tol or the step is below
    step_tol relative to ||x||.
    """
    opts = opts or FitOptions()
    x = np.asarray(init, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"initial point is not finite: {x.tolist()}")

    r = _evaluate(residual, x, "residual")
    J = _evaluate(jacobian, x, "jacobian")
    if J.shape != (r.size, x.size):
        raise NumericalError(f"jacobian shape {J.shape} does not match residual {r.size} x params {x.size}")

    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = opts.lambda0
    converged = False
    iterations = 0

    for iterations in range(1, opts.max_iter + 1):
        grad = J.T @ r
        if np.max(np.abs(grad)) <= opts.grad_tol:
            converged = True
            iterations -= 1
            break

        JtJ = J.T @ J
        # Marquardt scaling; floor keeps the system regular on flat directions
        scale = np.maximum(np.diag(JtJ), np.finfo(float).eps)
        try:
            step = np.linalg.solve(JtJ + lam * np.diag(scale), -grad)
        except np.linalg.LinAlgError:
            lam *= FIT_CONFIG["lambda_up"]
            continue

        if np.linalg.norm(step) <= opts.step_tol * (np.linalg.norm(x) + opts.step_tol):
            converged = True
            break

        x_new = x + step
        r_new = _trial(residual, x_new)
        cost_new = 0.5 * float(r_new @ r_new) if r_new is not None else np.inf

        if cost_new < cost:
            x, r, cost = x_new, r_new, cost_new
            J = _evaluate(jacobian, x, "jacobian")
            history.append(cost)
            lam = max(lam / FIT_CONFIG["lambda_down"], 1e-16)
        else:
            lam *= FIT_CONFIG["lambda_up"]
            if lam > FIT_CONFIG["lambda_max"]:
                logger.debug(f"lm stalled iterations={iterations} cost={cost:.6g}")
                break

    if not converged:
        logger.debug(f"lm did not converge iterations={iterations} cost={cost:.6g}")
    return LmResult(solution=tuple(float(v) for v in x), converged=converged,
                    iterations=iterations, cost=cost, cost_history=history)

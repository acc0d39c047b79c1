import json
from pathlib import Path

import numpy as np
import pytest

from app.errors import DataError, ParamError
from app.fd.calibration import (
    audit_fitted_curves, estimate_qcap, filter_above_capacity, fit_segment, fit_segments, fit_theta_joint,
    fit_theta_two_stage, goodness, pooled_rmse, weighted_metrics,
)
from app.fd.fd_model import make_params, params_from_signal
from app.models import BinnedPoint, SegmentData, SignalTheta
from app.oracle.simulator import binned_from_fd, sample_from_fd

THETA_STAR = SignalTheta(theta0=0.2, theta1=1.0, theta2=0.1, theta3=0.5)
GREENS = np.linspace(0.3, 0.8, 10)
V_MAX = 50.0
SAT_FLOW = 1800.0
NOISY_SEED7_FILE = Path(__file__).parent / "data" / "noisy_recovery_seed7.json"


def _point_per_observation(observations):
    """Unbinned fitting: each observation becomes its own weight-1 point"""
    return [BinnedPoint(bin_index=i, bin_center=o.flow, mean_speed=o.speed, count=1)
            for i, o in enumerate(observations)]


def _theta_segments(count=1, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    segments = []
    for i, g in enumerate(GREENS):
        q_cap = g * SAT_FLOW
        binned = binned_from_fd(params_from_signal(THETA_STAR, g, V_MAX, q_cap), count=count)
        if noise:
            binned = [b.model_copy(update={"mean_speed": b.mean_speed + rng.normal(0.0, noise)}) for b in binned]
        segments.append(SegmentData(segment_id=f"S{i + 1:02d}", binned=binned, v_max=V_MAX, q_cap=q_cap, g=float(g)))
    return segments


def test_noiseless_recovery_of_shape_parameters():
    """Noiseless FD samples give back alpha and beta to 1e-6"""
    rng = np.random.default_rng(42)
    for trial in range(20):
        alpha, beta = rng.uniform(0.5, 4, size=2)
        params = make_params(V_MAX, 900.0, alpha, beta)
        observations = sample_from_fd(params, 200, 0.0, seed=trial)
        fit = fit_segment(_point_per_observation(observations), V_MAX, 900.0, 0.5)
        assert fit.converged
        assert fit.params.alpha == pytest.approx(alpha, rel=1e-6)
        assert fit.params.beta == pytest.approx(beta, rel=1e-6)


def test_noisy_recovery_of_shape_parameters():
    """With 2% speed noise on 200 points the estimates stay within 5%"""
    params = make_params(V_MAX, 900.0, 2.0, 1.5)
    observations = sample_from_fd(params, 200, 0.02 * V_MAX, seed=7)
    fit = fit_segment(_point_per_observation(observations), V_MAX, 900.0, 0.5)
    assert fit.params.alpha == pytest.approx(2.0, rel=0.05)
    assert fit.params.beta == pytest.approx(1.5, rel=0.05)
    assert fit.rmse == pytest.approx(0.02 * V_MAX, rel=0.3)

    # realized seed-7 estimates; rewritten only when the file is deleted
    realized = {"alpha": fit.params.alpha, "beta": fit.params.beta, "rmse": fit.rmse}
    if not NOISY_SEED7_FILE.is_file():
        NOISY_SEED7_FILE.parent.mkdir(parents=True, exist_ok=True)
        NOISY_SEED7_FILE.write_text(json.dumps(realized, indent=2) + "\n")
    frozen = json.loads(NOISY_SEED7_FILE.read_text())
    assert realized == pytest.approx(frozen, rel=1e-9)


def test_fit_on_exact_bins_reports_perfect_metrics():
    """Bins on the curve give zero rmse and r2 of one"""
    params = make_params(V_MAX, 600.0, 1.8, 0.9)
    fit = fit_segment(binned_from_fd(params), V_MAX, 600.0, 0.45, segment_id="S01")
    assert fit.segment_id == "S01"
    assert fit.n_points == 20
    assert fit.rmse < 1e-8
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_segment_needs_three_bins_inside_capacity():
    """Fewer than three bins, or bins at or beyond q_cap, raise DataError"""
    bins = binned_from_fd(make_params(V_MAX, 600.0, 2.0, 1.0))
    with pytest.raises(DataError):
        fit_segment(bins[:2], V_MAX, 600.0, 0.5)
    with pytest.raises(DataError):
        fit_segment(bins, V_MAX, 300.0, 0.5)


def test_fit_segments_keeps_input_order_with_workers():
    """Thread pool results come back in input order and match the serial run"""
    segments = _theta_segments()
    serial = fit_segments(segments)
    parallel = fit_segments(segments, workers=4)
    assert [f.segment_id for f in parallel] == [s.segment_id for s in segments]
    assert [f.params for f in parallel] == [f.params for f in serial]


def test_estimate_qcap_uses_top_qualifying_bin():
    """Capacity is the upper edge of the highest bin with enough observations"""
    bins = [
        BinnedPoint(bin_index=0, bin_center=15.0, mean_speed=48.0, count=3),
        BinnedPoint(bin_index=1, bin_center=45.0, mean_speed=46.0, count=1),
        BinnedPoint(bin_index=2, bin_center=75.0, mean_speed=40.0, count=2),
    ]
    assert estimate_qcap(bins) == 90.0
    assert estimate_qcap(bins, min_count=3) == 30.0
    with pytest.raises(DataError):
        estimate_qcap(bins, min_count=4)


def test_estimate_qcap_skips_sparse_top_bin():
    """Counts 9, 7, 1 at centers 15, 45, 75 with min_count 2 give capacity 60"""
    bins = [BinnedPoint(bin_index=i, bin_center=c, mean_speed=40.0, count=n)
            for i, (c, n) in enumerate([(15.0, 9), (45.0, 7), (75.0, 1)])]
    assert estimate_qcap(bins, min_count=2) == 60.0


def _noisy_bins(params, counts, seed):
    rng = np.random.default_rng(seed)
    exact = binned_from_fd(params)
    return [b.model_copy(update={"mean_speed": max(0.0, b.mean_speed + rng.normal(0.0, 1.0)), "count": int(n)})
            for b, n in zip(exact, counts)]


def test_count_weight_equals_repeated_bins():
    """A bin with count k fits exactly like k copies of it with count one"""
    params = make_params(V_MAX, 600.0, 2.0, 1.2)
    counts = np.random.default_rng(1).integers(1, 5, size=len(binned_from_fd(params)))
    weighted = _noisy_bins(params, counts, seed=2)
    repeated = [b.model_copy(update={"count": 1}) for b in weighted for _ in range(b.count)]

    fit_weighted = fit_segment(weighted, V_MAX, 600.0, 0.5)
    fit_repeated = fit_segment(repeated, V_MAX, 600.0, 0.5)
    assert fit_weighted.params.alpha == pytest.approx(fit_repeated.params.alpha, rel=1e-8)
    assert fit_weighted.params.beta == pytest.approx(fit_repeated.params.beta, rel=1e-8)
    assert fit_weighted.rmse == pytest.approx(fit_repeated.rmse, rel=1e-8)


def test_shape_fit_ignores_flow_units():
    """Scaling bin flows and q_cap by the same factor leaves alpha and beta unchanged"""
    params = make_params(V_MAX, 600.0, 1.7, 0.8)
    bins = _noisy_bins(params, [3] * len(binned_from_fd(params)), seed=4)
    base = fit_segment(bins, V_MAX, 600.0, 0.5)
    for factor in (0.37, 3.7):
        scaled = [b.model_copy(update={"bin_center": b.bin_center * factor}) for b in bins]
        fit = fit_segment(scaled, V_MAX, 600.0 * factor, 0.5)
        assert fit.params.alpha == pytest.approx(base.params.alpha, rel=1e-8)
        assert fit.params.beta == pytest.approx(base.params.beta, rel=1e-8)
        assert fit.params.q_cap == 600.0 * factor


def test_filter_above_capacity():
    """Bins whose center is not below q_cap are dropped and counted"""
    bins = binned_from_fd(make_params(V_MAX, 600.0, 2.0, 1.0))
    kept, dropped = filter_above_capacity(bins, 300.0)
    assert [b.bin_center for b in kept] == [15.0 + 30.0 * k for k in range(10)]
    assert dropped == 10


def test_weighted_metrics_edge_cases():
    """r2 is 1 for a perfect constant fit and 0 when only the total spread is zero"""
    assert weighted_metrics([2.0, 2.0], [2.0, 2.0]).r2 == 1.0
    assert weighted_metrics([2.0, 2.0], [1.0, 3.0]).r2 == 0.0
    metrics = weighted_metrics([1.0, 3.0], [2.0, 2.0], [1.0, 3.0])
    assert metrics.rmse == pytest.approx(1.0)
    assert metrics.n == 2
    with pytest.raises(DataError):
        weighted_metrics([], [])


def test_two_stage_recovers_theta_on_noiseless_data():
    """Exact per-segment fits regress back to theta"""
    segments = _theta_segments()
    result = fit_theta_two_stage(fit_segments(segments), segments)
    assert result.method == "two_stage"
    assert result.theta.as_tuple() == pytest.approx(THETA_STAR.as_tuple(), rel=1e-6)
    assert result.theta.g_lo == pytest.approx(0.3)
    assert result.theta.g_hi == pytest.approx(0.8)
    assert result.residual_summary < 1e-8


def test_joint_recovers_theta_on_noiseless_data():
    """Pooled fit from the two-stage start stays on theta"""
    result = fit_theta_joint(_theta_segments())
    assert result.method == "joint"
    assert result.theta.as_tuple() == pytest.approx(THETA_STAR.as_tuple(), rel=1e-6)
    assert len(result.per_segment) == 10


def test_joint_started_at_optimum_stops_immediately():
    """Noiseless pooled data started at the true theta needs at most one iteration"""
    result = fit_theta_joint(_theta_segments(), init=THETA_STAR)
    assert result.converged
    assert result.iterations <= 1
    assert result.theta.as_tuple() == pytest.approx(THETA_STAR.as_tuple(), rel=1e-10)
    assert result.residual_summary < 1e-12


def test_theta_recovery_with_noise():
    """Hourly 2% speed noise averaged over 900 hours per bin keeps theta within 10%"""
    segments = _theta_segments(count=900, noise=0.02 * V_MAX / 30.0, seed=11)
    two_stage = fit_theta_two_stage(fit_segments(segments), segments)
    joint = fit_theta_joint(segments, init=two_stage.theta)
    assert two_stage.theta.as_tuple() == pytest.approx(THETA_STAR.as_tuple(), rel=0.1)
    assert joint.theta.as_tuple() == pytest.approx(THETA_STAR.as_tuple(), rel=0.1)
    assert joint.residual_summary <= two_stage.residual_summary + 1e-12


def test_theta_needs_distinct_green_splits():
    """A single green split cannot identify the theta lines"""
    segments = _theta_segments()
    same_g = [s.model_copy(update={"g": 0.5}) for s in segments[:3]]
    with pytest.raises(DataError):
        fit_theta_two_stage(fit_segments(same_g))
    with pytest.raises(DataError):
        fit_theta_two_stage(fit_segments(segments[:1]))
    with pytest.raises(DataError):
        fit_theta_joint(same_g)


def test_joint_rejects_infeasible_start():
    """An initial theta that breaks positivity at an observed g raises ParamError"""
    bad = SignalTheta(theta0=0.9, theta1=-1.0, theta2=0.1, theta3=0.5, g_lo=0.3, g_hi=0.8)
    segments = [s.model_copy(update={"g": 0.95}) if i == 9 else s for i, s in enumerate(_theta_segments())]
    with pytest.raises(ParamError):
        fit_theta_joint(segments, init=bad)


def test_goodness_for_segment_and_theta_fits():
    """SegmentFit scores in km/h on bins; ThetaFit scores pooled normalized speeds"""
    segments = _theta_segments()
    fits = fit_segments(segments)
    metrics = goodness(fits[0], segments[0].binned)
    assert metrics.rmse < 1e-8
    assert metrics.n == len(segments[0].binned)

    theta_fit = fit_theta_two_stage(fits, segments)
    pooled = goodness(theta_fit, segments)
    assert pooled.rmse == pytest.approx(pooled_rmse(theta_fit.theta, segments))
    with pytest.raises(DataError):
        goodness(fits[0], [])


def test_audit_fitted_curves_compares_shared_flows():
    """Only flows inside both capacities are compared"""
    fits = fit_segments(_theta_segments())
    report = audit_fitted_curves(fits, [100.0, 600.0, 2000.0])
    # 2000 exceeds every capacity; 600 is beyond the first segment's 540
    assert report.comparisons == 9 + 8

"""
Command line front end: ingest, fit, fit-theta, predict, simulate, audit, plot.

Exit codes: 0 success, 2 data/parse/model errors, 3 configuration or
missing input, 4 audit violations.
"""
import functools
import logging
import sys
from pathlib import Path

import click
import yaml
from pydantic import ValidationError

from app.config import configure_logging, settings
from app.errors import ConfigError, FdToolkitError, IoError
from app.fd.config import AUDIT_CONFIG, THETA_CONFIG
from app.ingestion.csv_io import atomic_write_text, read_binned, read_curves
from app.ingestion.segments import load_segments_config
from app.models import AuditReport, RunConfig
from app.services.pipeline_service import PipelineService
from app.services.plot_service import render_overlay

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3
EXIT_AUDIT = 4


def handle_errors(command):
    """Map toolkit errors to exit codes with the message on stderr"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, IoError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
        except FdToolkitError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_DATA)
    return wrapper


def _load_run_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"run config not found: {path}")
    try:
        document = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"run config {path} is not valid YAML: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"run config {path} must be a mapping")
    return document


def build_run_config(ctx: click.Context, **overrides) -> RunConfig:
    """Defaults, then the --config file, then command-line flags"""
    values = {"out_dir": settings.OUTPUT_DIR, "workers": settings.FIT_WORKERS}
    values.update(_load_run_config(ctx.obj.get("config_path")))
    if ctx.obj.get("out_dir") is not None:
        values["out_dir"] = ctx.obj["out_dir"]
    fit_overrides = overrides.pop("fit", None) or {}
    values.update({k: v for k, v in overrides.items() if v is not None and v != ()})
    if fit_overrides:
        values["fit"] = {**(values.get("fit") or {}), **fit_overrides}
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e.errors()[0]['loc']} {e.errors()[0]['msg']}") from e


def _service(ctx: click.Context, **overrides) -> PipelineService:
    return PipelineService(build_run_config(ctx, **overrides))


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML run configuration")
@click.option("--out-dir", default=None, help="Output directory for pipeline artifacts")
@click.option("--log-level", default=None, help="Logging level (default from LOG_LEVEL)")
@click.pass_context
def cli(ctx, config_path, out_dir, log_level):
    """Signal-parametrized fundamental diagram toolkit"""
    configure_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, out_dir=out_dir)


@cli.command()
@click.option("--counts", default=None, help="Lane counts CSV")
@click.option("--speeds", default=None, help="Segment speeds CSV")
@click.option("--segments", default=None, help="Segments YAML")
@click.option("--study-start-hour", type=int, default=None)
@click.option("--study-end-hour", type=int, default=None)
@click.option("--bin-width", type=float, default=None)
@click.option("--cycle-target", type=float, default=None)
@click.option("--cycle-tolerance", type=float, default=None)
@click.option("--phase", "phases", type=int, multiple=True, help="Signal phase to include (repeatable)")
@click.option("--min-bin-count", type=int, default=None)
@click.pass_context
@handle_errors
def ingest(ctx, **options):
    """Aggregate, filter and bin raw detector data"""
    result = _service(ctx, **options).ingest()
    for name, path in result["paths"].items():
        click.echo(f"{name}: {path}")
    click.echo(f"segments: {len(result['segments'])} skipped: {result['skipped'].total()}")


@cli.command()
@click.option("--binned", default=None)
@click.option("--plans", default=None)
@click.option("--segments", default=None)
@click.option("--fits", default=None, help="Output fits CSV")
@click.option("--workers", type=int, default=None, help="Threads fitting segments in parallel")
@click.option("--max-iter", type=int, default=None)
@click.pass_context
@handle_errors
def fit(ctx, max_iter, **options):
    """Fit alpha and beta per segment"""
    fit_options = {"max_iter": max_iter} if max_iter is not None else None
    click.echo(f"fits: {_service(ctx, fit=fit_options, **options).fit()}")


@cli.command("fit-theta")
@click.option("--method", type=click.Choice(["two_stage", "joint"]), default="two_stage", show_default=True)
@click.option("--binned", default=None)
@click.option("--plans", default=None)
@click.option("--segments", default=None)
@click.option("--fits", default=None)
@click.option("--theta", default=None, help="Output theta CSV")
@click.pass_context
@handle_errors
def fit_theta(ctx, method, **options):
    """Estimate theta coefficients across segments"""
    service = _service(ctx, **options)
    result = service.fit_theta(method)
    click.echo(f"theta: {service.theta_path}")
    click.echo("theta0={:.12g} theta1={:.12g} theta2={:.12g} theta3={:.12g}".format(*result.theta.as_tuple()))
    click.echo(f"pooled_rmse={result.residual_summary:.6g}")


@cli.command()
@click.option("--theta", default=None, help="Theta CSV")
@click.option("--g", type=float, default=None, help="Green split")
@click.option("--v-max", type=float, default=None, help="Speed limit, km/h")
@click.option("--q-cap", type=float, default=None, help="Flow capacity, veh/hr-lane")
@click.option("--n-points", type=int, default=50, show_default=True)
@click.option("--segment-id", default="")
@click.option("--out", default=None, help="Output curve CSV (single curve)")
@click.option("--all-segments", is_flag=True, help="One curve per ingested segment")
@click.option("--binned", default=None)
@click.option("--plans", default=None)
@click.option("--segments", default=None)
@click.pass_context
@handle_errors
def predict(ctx, g, v_max, q_cap, n_points, segment_id, out, all_segments, **options):
    """Sample the signal-parametrized FD"""
    service = _service(ctx, **options)
    if all_segments:
        for sid, path in service.predict_segments(n_points, service.out_dir / "curves").items():
            click.echo(f"{sid}: {path}")
        return
    if g is None or v_max is None or q_cap is None:
        raise ConfigError("predict needs --g, --v-max and --q-cap, or --all-segments")
    out = Path(out) if out else service.out_dir / "curve.csv"
    service.predict(g, v_max, q_cap, n_points, out, segment_id)
    click.echo(f"curve: {out}")


@cli.command()
@click.argument("spec_file", type=click.Path())
@click.pass_context
@handle_errors
def simulate(ctx, spec_file):
    """Write a synthetic corpus from a YAML spec file"""
    out_dir = build_run_config(ctx).out_dir
    paths = PipelineService.simulate(spec_file, out_dir)
    click.echo(f"corpus: {out_dir} segments={len(paths['events'])}")


def _echo_report(report: AuditReport, limit: int = 10):
    status = "PASS" if report.passed else "FAIL"
    click.echo(f"{status} comparisons={report.comparisons} violations={len(report.violations)}")
    for v in report.violations[:limit]:
        click.echo(f"  q={v.q:.6g} g={v.g_low:.6g}->{v.g_high:.6g} delta_v={v.delta_v:.6g}")


@cli.command()
@click.option("--source", type=click.Choice(["theta", "fits"]), default="theta", show_default=True)
@click.option("--theta", default=None)
@click.option("--fits", default=None)
@click.option("--binned", default=None)
@click.option("--plans", default=None)
@click.option("--segments", default=None)
@click.option("--v-max", type=float, default=1.0, show_default=True)
@click.option("--q-cap", type=float, default=1.0, show_default=True)
@click.option("--g-lo", type=float, default=THETA_CONFIG["g_lo"], show_default=True)
@click.option("--g-hi", type=float, default=THETA_CONFIG["g_hi"], show_default=True)
@click.option("--n-green", type=int, default=AUDIT_CONFIG["n_green"], show_default=True)
@click.option("--n-flow", type=int, default=AUDIT_CONFIG["n_flow"], show_default=True)
@click.pass_context
@handle_errors
def audit(ctx, source, v_max, q_cap, g_lo, g_hi, n_green, n_flow, **options):
    """Check that FD curves shift up with the green split"""
    service = _service(ctx, **options)
    if source == "theta":
        report = service.audit_theta(v_max, q_cap, g_lo, g_hi, n_green, n_flow)
    else:
        report = service.audit_fits(n_flow)
    _echo_report(report)
    if not report.passed:
        sys.exit(EXIT_AUDIT)


@cli.command()
@click.option("--binned", required=True, help="Binned CSV")
@click.option("--curves", "curve_paths", multiple=True, help="Curve CSV (repeatable)")
@click.option("--segments", required=True, help="Segments YAML, for speed limits")
@click.option("--out", default=None, help="Output SVG")
@click.pass_context
@handle_errors
def plot(ctx, binned, curve_paths, segments, out):
    """SVG overlay of binned data and FD curves"""
    v_max = {sid: seg.v_max_kmh for sid, seg in load_segments_config(segments).items()}
    svg = render_overlay(read_binned(binned), read_curves(curve_paths), v_max)
    out = Path(out) if out else Path(build_run_config(ctx).out_dir) / "fd_overlay.svg"
    atomic_write_text(out, svg)
    click.echo(f"plot: {out}")


def main():
    cli(obj={})


if __name__ == "__main__":
    main()

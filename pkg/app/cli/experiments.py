import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import click
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import EXIT_INTERNAL, EXIT_INVALID, ConfigurationError, LabError
from app.core.logging import setup_logging
from app.schemas.experiment import ExperimentConfig
from app.schemas.reports import ErrorReport
from app.services.experiment_service import ExperimentService
from app.storage.artifacts import get_store

logger = logging.getLogger(__name__)

SCHEMES = click.Choice(["rk4", "implicit-midpoint"])


def _plain(context: Dict[str, Any]) -> Dict[str, Any]:
    return json.loads(json.dumps(context, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def load_config(path: Optional[str], experiment: Optional[str]) -> ExperimentConfig:
    """Parse a JSON config file; without a file the experiment runs on defaults"""
    if path is None:
        if experiment is None:
            raise ConfigurationError("a config file is required")
        return ExperimentConfig(experiment=experiment)
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError("cannot read config file", path=path, reason=str(exc))
    if not isinstance(payload, dict):
        raise ConfigurationError("config file must hold a JSON object", path=path)
    if experiment is not None:
        if payload.get("experiment", experiment) != experiment:
            raise ConfigurationError(
                "config file is for another experiment", path=path, expected=experiment, found=payload["experiment"]
            )
        payload["experiment"] = experiment
    return ExperimentConfig.model_validate(payload)


def _report_failure(report: ErrorReport, output_dir: Optional[str]) -> None:
    try:
        get_store(output_dir).write_json("error.json", report)
    except OSError:
        logger.exception("could not write error.json")
    click.echo(json.dumps(report.model_dump(mode="json"), sort_keys=True), err=True)


def _invalid_config(exc: ValidationError) -> ErrorReport:
    return ErrorReport(
        error="ValidationError",
        detail=f"invalid configuration: {exc.error_count()} error(s)",
        exit_code=EXIT_INVALID,
        context={"errors": json.loads(exc.json(include_url=False))},
    )


def _lab_failure(exc: LabError) -> ErrorReport:
    logger.error("%s: %s", type(exc).__name__, exc.detail)
    return ErrorReport(**{**exc.to_dict(), "context": _plain(exc.context)})


def execute(
    command: Optional[str],
    config_path: Optional[str],
    output_dir: Optional[str],
    seed: Optional[int],
    threads: Optional[int],
    log_level: Optional[str],
    **overrides: Any,
) -> int:
    setup_logging(log_level)
    try:
        config = load_config(config_path, command)
        update = {k: v for k, v in {"output_dir": output_dir, "seed": seed, "threads": threads}.items() if v is not None}
        config = config.model_copy(update=update)
        service = ExperimentService(config, get_store(config.output_dir), **overrides)
    except ValidationError as exc:
        _report_failure(_invalid_config(exc), output_dir)
        return EXIT_INVALID
    except LabError as exc:
        _report_failure(_lab_failure(exc), output_dir)
        return exc.exit_code

    settings.THREADS = config.threads or settings.THREADS
    try:
        summary = service.run()
    except LabError as exc:
        report = _lab_failure(exc)
    except Exception as exc:
        # anything the numerics did not anticipate, e.g. LinAlgError from LAPACK
        logger.exception("experiment %s failed", config.experiment)
        report = ErrorReport(
            error=type(exc).__name__,
            detail=str(exc) or "unexpected failure",
            exit_code=EXIT_INTERNAL,
            context={"experiment": config.experiment},
        )
    else:
        click.echo(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    _report_failure(report, config.output_dir)
    return report.exit_code


def common_options(fn):
    for option in reversed(
        [
            click.option("--config", "config_path", type=click.Path(), default=None, help="JSON experiment config."),
            click.option("--output-dir", default=None, help="Directory for artifacts (default OUTPUT_DIR)."),
            click.option("--seed", type=int, default=None, help="Random seed (default 0)."),
            click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads; 1 is bit-reproducible."),
            click.option("--log-level", default=None, help="Logging level (default LOG_LEVEL)."),
        ]
    ):
        fn = option(fn)
    return fn


def _finish(ctx: click.Context, code: int) -> None:
    if code:
        ctx.exit(code)


@click.command(name="run")
@click.argument("config", type=click.Path())
@click.option("--output-dir", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=click.IntRange(min=1), default=None)
@click.option("--log-level", default=None)
@click.pass_context
def run(ctx, config, output_dir, seed, threads, log_level):
    """Run whichever experiment CONFIG names."""
    _finish(ctx, execute(None, config, output_dir, seed, threads, log_level))


@click.command(name="spectrum")
@common_options
@click.option("--lambda-max", type=float, default=None, help="Enumeration cutoff.")
@click.option("--fit-lo", type=float, default=None)
@click.option("--fit-hi", type=float, default=None)
@click.pass_context
def spectrum(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Exact flat spectrum: spectrum.csv and the Weyl fit in weyl.json."""
    _finish(ctx, execute("spectrum", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="weyl")
@common_options
@click.option("--lambda-lo", type=float, default=None)
@click.option("--lambda-hi", type=float, default=None)
@click.option("--n-grid", type=int, default=None)
@click.pass_context
def weyl(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Weyl law of the discretized model from its sector spectra."""
    _finish(ctx, execute("weyl", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="heat")
@common_options
@click.option("--experiment", type=click.Choice(["karamata", "kernel", "both"]), default=None)
@click.option("--t-lo", type=float, default=None)
@click.option("--t-hi", type=float, default=None)
@click.pass_context
def heat(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Heat trace curve with its Karamata constant, and heat kernel values."""
    _finish(ctx, execute("heat", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="qe")
@common_options
@click.option("--lambda-max", type=float, default=None)
@click.option("--kvn-lambda", type=float, default=None, help="Cutoff of the density-one extraction.")
@click.pass_context
def qe(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Concentration series, Cesaro means, density-one extraction and classification."""
    _finish(ctx, execute("qe", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="flow")
@common_options
@click.option("--flow", type=click.Choice(["geodesic", "reeb"]), default=None)
@click.option("--scheme", type=SCHEMES, default=None)
@click.option("--time", "T", type=float, default=None, help="Integration horizon.")
@click.option("--dt", type=float, default=None)
@click.pass_context
def flow(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Integrate one geodesic or Reeb trajectory."""
    _finish(ctx, execute("flow", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="spiral")
@common_options
@click.option("--dt", type=float, default=None)
@click.option("--scheme", type=SCHEMES, default=None)
@click.option("--horizon-cap", type=float, default=None)
@click.pass_context
def spiral(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Adiabatic invariant deviation across perturbation sizes."""
    _finish(ctx, execute("spiral", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="nf")
@common_options
@click.option("--input", "input", default=None, help="Hamiltonian, e.g. H2+u3 or canonical text.")
@click.option("--order", type=int, default=None)
@click.option("--mode", type=click.Choice(["local", "semiglobal"]), default=None)
@click.option("--truncation", type=int, default=None)
@click.pass_context
def nf(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Birkhoff normal form near the characteristic cone."""
    _finish(ctx, execute("nf", config_path, output_dir, seed, threads, log_level, **overrides))


@click.command(name="ergodic")
@common_options
@click.option("--starts", type=int, default=None)
@click.option("--time", "T", type=float, default=None)
@click.option("--dt", type=float, default=None)
@click.pass_context
def ergodic(ctx, config_path, output_dir, seed, threads, log_level, **overrides):
    """Birkhoff averages on the hyperbolic testbed and the flat Reeb flow."""
    _finish(ctx, execute("ergodic", config_path, output_dir, seed, threads, log_level, **overrides))


COMMANDS = (run, spectrum, weyl, heat, qe, flow, spiral, nf, ergodic)

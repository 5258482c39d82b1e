"""
Command-line front end.

Exit codes: 0 success, 1 input or precondition error, 2 infeasible,
not certifiable or solver failure.
"""

import functools
import io
import sys
from pathlib import Path
from typing import Optional, Tuple

import click

from . import __version__
from .config import Config, GccSettings
from .core.linalg import spectral_radius
from .exceptions import (
    AssumptionError, BackendUnavailableError, ConvergenceError, DimensionError,
    GccError, NotPositiveSemidefiniteError, ProblemFileError, SingularMatrixError,
    SynthesisInfeasibleError, WellPosednessError
)
from .logging import init_logging
from .model.system import validate
from .problem_file import ProblemFile, load_matrix, load_problem, write_report
from .simulation.montecarlo import MonteCarloRunner, write_run_csv, write_trajectory_csvs
from .synthesis.certify import certify
from .synthesis.compare import MethodComparison, write_comparison_csv
from .synthesis.gcc import GccSynthesizer
from .synthesis.lqr import lqr
from .synthesis.result import Method

EXIT_INPUT = 1
EXIT_INFEASIBLE = 2

INPUT_ERRORS = (
    ProblemFileError, DimensionError, AssumptionError, WellPosednessError,
    NotPositiveSemidefiniteError, BackendUnavailableError
)
SOLVE_ERRORS = (SynthesisInfeasibleError, ConvergenceError, SingularMatrixError)


def exit_codes(command):
    """Map the exception hierarchy onto the documented exit codes."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except INPUT_ERRORS as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_INPUT)
        except SOLVE_ERRORS as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except GccError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_INPUT)
    return wrapper


def _load(path: str, opts: Tuple[str, ...]) -> Tuple[ProblemFile, GccSettings]:
    problem = load_problem(path)
    settings = GccSettings().apply_mapping(problem.config).apply_overrides(opts)
    validate(problem.system, problem.cost)
    return problem, settings


def _emit(report: dict, output: Optional[str]) -> None:
    text = write_report(report, output)
    if output is None:
        click.echo(text)


def _parse_x0(value: str) -> Tuple[str, Optional[Tuple[float, ...]]]:
    if value == 'gaussian':
        return 'gaussian', None
    head, _, tail = value.partition(':')
    if head != 'fixed' or not tail:
        raise ProblemFileError("expected 'gaussian' or 'fixed:v1,v2,...'", field="--x0", location=value)
    try:
        return 'fixed', tuple(float(v) for v in tail.split(','))
    except ValueError as e:
        raise ProblemFileError(str(e), field="--x0", location=value) from e


opt_option = click.option(
    '--opt', 'opts', multiple=True, metavar='SECTION.KEY=VALUE',
    help='Override a solver, synth or sim setting; may be repeated.'
)


@click.group()
@click.version_option(__version__, prog_name='robust-gcc')
@click.option('--log-level', default=Config.LOG_LEVEL, show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def main(log_level: str):
    """Guaranteed cost control synthesis for uncertain discrete-time systems."""
    init_logging(log_level)


@main.command()
@click.argument('input', type=click.Path(dir_okay=False))
@click.option('--method', type=click.Choice([m.value for m in Method]), default=Method.GCC_DILATED.value,
              show_default=True)
@click.option('--multiplier', type=click.Choice(['structured', 'unstructured']), default='structured',
              show_default=True)
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Report path (default: stdout).')
@opt_option
@exit_codes
def synth(input, method, multiplier, output, opts):
    """Synthesize a controller gain and its cost certificate."""
    problem, settings = _load(input, opts)
    structured = multiplier == 'structured'
    if method == Method.LQR.value:
        result = lqr(problem.system, problem.cost, settings.synth)
    else:
        synthesizer = GccSynthesizer(problem.system, problem.cost, settings.synth, settings.solver)
        if method == Method.GCC_LEMMA.value:
            result = synthesizer.synth_lemma(structured)
        else:
            result = synthesizer.synth_dilated(structured)
    _emit({'problem': problem.name, **result.to_dict()}, output)


@main.command()
@click.argument('input', type=click.Path(dir_okay=False))
@click.option('--gain', required=True, type=click.Path(dir_okay=False),
              help='Synth report or bare JSON matrix holding K.')
@click.option('--runs', type=int, help='Number of runs (default 5000).')
@click.option('--horizon', type=int, help='Steps per run (default 200).')
@click.option('--seed', type=int, help='Master seed.')
@click.option('--x0', 'x0', default=None, help="'gaussian' or 'fixed:v1,v2,...'.")
@click.option('--certificate', type=click.Path(dir_okay=False),
              help='Synth/certify report or bare JSON matrix holding P.')
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Per-run CSV (run, cost, bound_ok).')
@click.option('--report', type=click.Path(dir_okay=False), help='Summary JSON path (default: stdout).')
@click.option('--trajectories', type=click.Path(file_okay=False), help='Directory for per-run trajectory CSVs.')
@opt_option
@exit_codes
def simulate(input, gain, runs, horizon, seed, x0, certificate, output, report, trajectories, opts):
    """Monte Carlo estimate of the expected closed-loop cost."""
    problem, settings = _load(input, opts)
    overrides = [f"sim.{key}={value}" for key, value in (
        ('runs', runs), ('horizon', horizon), ('seed', seed)) if value is not None]
    if x0 is not None:
        mode, vector = _parse_x0(x0)
        # the vector goes first: switching to fixed mode requires one
        if vector is not None:
            overrides.append("sim.x0=" + ",".join(repr(v) for v in vector))
        overrides.append(f"sim.x0_mode={mode}")
    if trajectories:
        overrides.append("sim.record_trajectories=true")
    settings.apply_overrides(overrides)

    k = load_matrix(gain, 'gain')
    p = load_matrix(certificate, 'certificate') if certificate else None
    runner = MonteCarloRunner(problem.system, problem.cost, k)
    result = runner.run(settings.sim, certificate=p)
    if output:
        write_run_csv(result, Path(output))
    if trajectories:
        write_trajectory_csvs(result, Path(trajectories), problem.system.n_x, problem.system.n_u)
    _emit({'problem': problem.name, **result.to_dict()}, report)


@main.command('certify')
@click.argument('input', type=click.Path(dir_okay=False))
@click.option('--gain', required=True, type=click.Path(dir_okay=False))
@click.option('--multiplier', type=click.Choice(['structured', 'unstructured']), default='structured',
              show_default=True)
@click.option('--output', '-o', type=click.Path(dir_okay=False))
@opt_option
@exit_codes
def certify_command(input, gain, multiplier, output, opts):
    """Find the smallest guaranteed-cost certificate for a given gain."""
    problem, settings = _load(input, opts)
    k = load_matrix(gain, 'gain')
    result = certify(problem.system, problem.cost, k, structured=multiplier == 'structured',
                     solver_options=settings.solver)
    _emit({'problem': problem.name, **result.to_dict()}, output)
    if not result.certified:
        click.echo("error: gain could not be certified", err=True)
        sys.exit(EXIT_INFEASIBLE)


@main.command()
@click.argument('input', type=click.Path(dir_okay=False))
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='CSV path (default: stdout).')
@opt_option
@exit_codes
def compare(input, output, opts):
    """Run the five-method comparison and emit one CSV row per method."""
    problem, settings = _load(input, opts)
    rows = MethodComparison(
        problem.system, problem.cost,
        synth_options=settings.synth,
        solver_options=settings.solver,
        sim_config=settings.sim
    ).run()
    buffer = io.StringIO()
    write_comparison_csv(rows, buffer)
    if output:
        Path(output).write_text(buffer.getvalue())
    else:
        click.echo(buffer.getvalue(), nl=False)


@main.command('validate')
@click.argument('input', type=click.Path(dir_okay=False))
@click.option('--output', '-o', type=click.Path(dir_okay=False))
@exit_codes
def validate_command(input, output):
    """Check well-posedness and the nominal synthesis assumptions."""
    problem = load_problem(input)
    report = validate(problem.system, problem.cost)
    _emit({
        'problem': problem.name,
        'n_x': problem.system.n_x,
        'n_u': problem.system.n_u,
        'n_y': problem.system.n_y,
        'n_p': problem.system.n_p,
        'n_q': problem.system.n_q,
        'open_loop_spectral_radius': spectral_radius(problem.system.a),
        **report.to_dict()
    }, output)


if __name__ == '__main__':
    main()

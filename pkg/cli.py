import json
import logging
from pathlib import Path

import click
from tabulate import tabulate

from config import Config
from decorators import EXIT_FAILURE, handle_errors
from errors import AssumptionError
from experiments import EXPERIMENTS, bounds_summary, expand_selection, needs_absorbing, run_experiments
from model import check_assumptions, select_bounds, validate_scenario
from report import RunReport, summary_rows, write_run
from scenario import load_run_scenario, load_scenario, read_scenario_data, scenario_hash


logger = logging.getLogger(__name__)


def _verdict(check) -> str:
    if check.notice:
        return "NOTE"
    return "PASS" if check.passed else "FAIL"


def _parse_selection(ctx, param, value):
    """Comma separated experiment names; 'all' selects every experiment."""
    names = [name.strip() for name in value.split(",") if name.strip()]
    try:
        return expand_selection(names)
    except ValueError as e:
        raise click.BadParameter(str(e))


@click.group()
def cli():
    """Delay-diffusion lab: simulate and certify a nonclassical diffusion equation with delay."""
    pass


@cli.command()
@click.argument("scenario_path", default=Config.DEFAULT_SCENARIO)
@click.option(
    "--absorbing/--no-absorbing",
    default=True,
    help="Include the coefficient condition the absorbing estimates need (default: on).",
)
@click.option(
    "--format",
    type=click.Choice(['grid', 'simple', 'json']),
    default='grid',
    help="Output format for the assumption table."
)
@handle_errors
def validate(scenario_path, absorbing, format):
    """Check every structural assumption of a scenario and print the derived bounds."""
    cfg = load_scenario(scenario_path)
    checks = check_assumptions(cfg, absorbing=absorbing)
    failed = [check for check in checks if not check.passed]
    bounds = None if failed else select_bounds(
        cfg.basis.lambda1, cfg.epsilon.bound_l, cfg.zeta, cfg.delay.c_phi, cfg.mu)

    if format == 'json':
        click.echo(json.dumps({
            "scenario": cfg.name,
            "checks": [{"clause": c.clause, "verdict": _verdict(c), "detail": c.detail} for c in checks],
            "bounds": bounds_summary(bounds),
        }, indent=2))
    else:
        rows = [[c.clause, c.description, _verdict(c), c.detail] for c in checks]
        click.echo(f"\n--- Assumptions for {cfg.name} ---")
        click.echo(tabulate(rows, headers=["Clause", "Condition", "Verdict", "Detail"], tablefmt=format))
        if bounds is not None:
            click.echo("\n--- Bounds ---")
            click.echo(tabulate(sorted(bounds_summary(bounds).items()), headers=["Parameter", "Value"],
                                tablefmt='simple', floatfmt=".6g"))

    if failed:
        raise AssumptionError(failed[0].clause, f"{failed[0].description}: {failed[0].detail}")


@cli.command()
@click.argument("scenario_path", default=Config.DEFAULT_SCENARIO)
@click.option('--experiments', '-e', default='all', callback=_parse_selection,
              help=f"Comma separated list of {', '.join(EXPERIMENTS)} or all (default: all).")
@click.option('--out', '-o', default=Config.DEFAULT_OUTPUT_DIR, type=click.Path(file_okay=False),
              help='Directory receiving one folder per scenario hash.')
@click.option('--seed', default=Config.DEFAULT_SEED, type=int, help='Seed for random histories and clouds.')
@click.option('--dt', type=float, help='Step override; must divide the delay.')
@click.option('--horizon', type=float, help='Horizon override (time after tau).')
@click.option('--jobs', '-j', default=Config.DEFAULT_JOBS, type=click.IntRange(min=1), help='Worker threads.')
@click.option('--force', is_flag=True, help='Run even when validation fails.')
@handle_errors
def run(scenario_path, experiments, out, seed, dt, horizon, jobs, force):
    """Run the selected experiments and write report.json, CSV series and summary.txt."""
    cfg, digest = load_run_scenario(scenario_path, dt=dt, horizon=horizon)
    try:
        bounds = validate_scenario(cfg, absorbing=needs_absorbing(experiments))
    except AssumptionError as e:
        if not force:
            raise
        logger.warning(f"--force: running {cfg.name} although validation failed ({e})")
        bounds = None

    click.echo(f"Running {', '.join(experiments)} on {cfg.name} (dt={cfg.dt:.6g}, seed={seed})...")
    reports = run_experiments(cfg, experiments, seed=seed, jobs=jobs)
    run_report = RunReport(cfg.name, digest, seed, bounds_summary(bounds), reports, forced=bounds is None)
    out_dir = Path(out) / digest[:16]
    write_run(out_dir, run_report)

    click.echo("\n--- Verdicts ---")
    click.echo(tabulate(summary_rows(run_report), headers=["Experiment", "Invariant", "Verdict", "Detail"],
                        tablefmt='simple'))
    click.echo(f"\nArtifacts written to {out_dir}")
    if not run_report.passed:
        click.echo("Some invariants failed or experiments did not complete.", err=True)
        raise click.exceptions.Exit(EXIT_FAILURE)


@cli.command()
@handle_errors
def scenarios():
    """List the bundled scenarios with their hashes."""
    rows = []
    for path in sorted(Config.SCENARIO_DIR.glob("*.json")):
        data = read_scenario_data(path)
        rows.append([data.get("name", path.stem), path.name, scenario_hash(data)[:16]])
    click.echo(tabulate(rows, headers=["Name", "File", "Hash"], tablefmt='simple'))

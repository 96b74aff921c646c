#!/usr/bin/env python3
"""
regsens CLI

Command-line interface for omitted-variable-bias sensitivity analysis.
"""

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import click
import numpy as np

from regsens import __version__, config
from regsens.core.analysis_config import CONFIG_FILENAME, AnalysisConfig
from regsens.core.breakdown import batch_breakdown, breakdown_report
from regsens.core.error_handler import ErrorHandler, InputError, RegsensError, error_handler
from regsens.core.moments import (
    MomentMatrix,
    RegressionSummary,
    load_dataset,
    partial_out_baseline,
    resolve_r2long,
    summarize,
)
from regsens.core.osterset import (
    SensitivitySpec,
    identified_set,
    idset_curve,
    restrict_magnitude,
    solve_identified_set,
)
from regsens.core.property_suites import SUITES, SuiteRunner, assert_passed
from regsens.core import reporting

logger = logging.getLogger("regsens")


def guarded(func: Callable) -> Callable:
    """Report RegsensError through the error handler and exit with its code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RegsensError as e:
            error_handler.handle_error(e)
            sys.exit(e.exit_code)
    return wrapper


def data_options(func: Callable) -> Callable:
    options = [
        click.option('--data', type=click.Path(), help='CSV file with a header row'),
        click.option('--moments', type=click.Path(), help='Moment-matrix JSON instead of --data'),
        click.option('--outcome', help='Outcome column Y'),
        click.option('--treatment', help='Treatment column X'),
        click.option('--w0', multiple=True, help='Baseline controls, comma separated'),
        click.option('--w1', multiple=True, help='Calibration controls, comma separated'),
        click.option('--cov-denominator', type=click.Choice(['n-1', 'n']), default=None,
                     help=f'Covariance denominator (default {config.DEFAULT_DENOMINATOR})'),
        click.option('--r2long', multiple=True, help='R2_long rule: 1.0, 0.9 or 1.3x (repeatable)'),
        click.option('--out', type=click.Path(), help='Directory for output files'),
        click.option('--json', 'json_output', is_flag=True, help='Print JSON instead of tables'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def load_summary(cfg: AnalysisConfig) -> RegressionSummary:
    cfg.require_source()
    if cfg.moments_path:
        return summarize(MomentMatrix.load(cfg.moments_path))
    dataset = load_dataset(cfg.data_path, cfg.roles)
    return summarize(partial_out_baseline(dataset, cfg.cov_denominator))


def resolve_rules(cfg: AnalysisConfig, summary: RegressionSummary) -> List[Tuple[str, float]]:
    return [(rule.label(), resolve_r2long(rule, summary)) for rule in cfg.r2_rules]


def out_path(cfg: AnalysisConfig, name: str) -> Optional[Path]:
    if not cfg.out_dir:
        return None
    directory = Path(cfg.out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory / name


def emit(cfg: AnalysisConfig, name: str, payload, table: str) -> None:
    """Table (or JSON) to stdout; JSON file when --out is set."""
    path = out_path(cfg, name)
    if path is not None:
        reporting.write_json(path, payload)
    if cfg.json_output:
        click.echo(reporting.dumps(payload))
    else:
        click.echo(table)
        if path is not None:
            click.echo(f"\n✅ Report saved to {path}")


def default_b_range(summary: RegressionSummary) -> Tuple[float, float]:
    width = 5.0 * max(abs(summary.beta_med), abs(summary.beta_short - summary.beta_med), 1.0)
    return summary.beta_med - width, summary.beta_med + width


@click.group()
@click.version_option(version=__version__, prog_name="regsens")
@click.option('--log-file', type=click.Path(), default=config.LOG_FILE,
              help='Write a detailed debug log to this file')
def cli(log_file: Optional[str]):
    """regsens - sensitivity of regression coefficients to omitted variables.

    Quick start:
      regsens breakdown --data d.csv --outcome y --treatment x --w1 c1,c2
      regsens idset     ... --delta 1
      regsens bounds    ... --delta-bar 1
      regsens adjust    ... --delta 0.99,1,1.01
      regsens oracle-check --seed 7
    """
    if log_file:
        handler = ErrorHandler(log_file)
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        logger.addHandler(file_handler)
        logger.setLevel(logging.DEBUG)
        handler.logger.debug("Logging to %s", log_file)


@cli.command()
@data_options
@click.option('--m', 'm', multiple=True, help='Magnitude bounds: inf, 2x or abs:0.5 (repeatable)')
@guarded
def breakdown(**options):
    """Explain-away and sign-change breakdown points."""
    cfg = AnalysisConfig.from_options(**options)
    summary = load_summary(cfg)
    reports = batch_breakdown(summary, resolve_rules(cfg, summary), cfg.m_bounds)
    table = "\n".join([reporting.summary_block(summary), "", reporting.breakdown_table(reports)])
    naive = [r for r in reports if r.naive_incorrect is not None]
    if naive:
        table += f"\n\nnaive: {config.NAIVE_LABEL}"
    emit(cfg, "breakdown.json", reporting.reports_to_json(reports), table)


@cli.command()
@data_options
@click.option('--delta', multiple=True, help='Selection ratios, comma separated (default 1)')
@click.option('--m', 'm', multiple=True, help='Magnitude bounds: inf, 2x or abs:0.5')
@click.option('--b-min', type=float, help='Curve range start')
@click.option('--b-max', type=float, help='Curve range end')
@click.option('--points', type=int, help='Curve grid size')
@click.option('--svg', is_flag=True, help='Also render the delta(b) curve as SVG')
@guarded
def idset(**options):
    """Identified sets at fixed delta and the delta(b) curve."""
    cfg = AnalysisConfig.from_options(**options)
    summary = load_summary(cfg)
    rows, payload = [], {"sets": [], "curves": []}
    for index, (label, r2long) in enumerate(resolve_rules(cfg, summary)):
        for delta in cfg.deltas:
            points = solve_identified_set(summary, delta, r2long)
            for bound in cfg.m_bounds:
                restricted = restrict_magnitude(points, summary.beta_med, bound.resolve(summary.beta_med))
                rows.append(restricted)
                payload["sets"].append({"r2_rule": label, "M": bound.label(),
                                        **reporting.points_to_json(restricted)})

        curve = idset_curve(summary, r2long, cfg.b_range or default_b_range(summary), cfg.curve_points)
        csv_path = out_path(cfg, f"curve_{index}.csv")
        if csv_path is not None:
            reporting.write_curve_csv(csv_path, curve)
            payload["curves"].append({"r2_rule": label, "path": str(csv_path)})
        if cfg.svg_output:
            svg_path = out_path(cfg, f"curve_{index}.svg") or Path(f"curve_{index}.svg")
            reporting.render_curve_svg(curve, r2long, path=svg_path)

    table = "\n".join([reporting.summary_block(summary), "", reporting.identified_sets_table(rows)])
    emit(cfg, "idset.json", payload, table)


@cli.command()
@data_options
@click.option('--delta-bar', multiple=True, help='Bounds on |delta|, comma separated')
@click.option('--m', 'm', multiple=True, help='Magnitude bounds: inf, 2x or abs:0.5')
@guarded
def bounds(**options):
    """Cumulative identified sets over |delta| <= delta_bar."""
    cfg = AnalysisConfig.from_options(**options)
    if not cfg.delta_bars:
        raise InputError("no delta_bar", kind="bad_flag", flag="--delta-bar", value=None,
                         expected="one or more values >= 0")
    summary = load_summary(cfg)
    rows, payload = [], {"sets": []}
    for index, (label, r2long) in enumerate(resolve_rules(cfg, summary)):
        for bound in cfg.m_bounds:
            for delta_bar in cfg.delta_bars:
                union = identified_set(summary, SensitivitySpec(r2long, delta_bar=delta_bar, m_bound=bound))
                rows.append((delta_bar, bound.label(), union))
                payload["sets"].append({"r2_rule": label, **reporting.union_to_json(delta_bar, bound.label(), union)})
        sweep_path = out_path(cfg, f"sweep_{index}.csv")
        if sweep_path is not None:
            grid = np.unique(np.concatenate([np.linspace(0.0, max(cfg.delta_bars), 51), cfg.delta_bars]))
            reporting.write_sweep_csv(sweep_path, reporting.bounded_sweep(summary, r2long, grid, cfg.m_bounds))

    table = "\n".join([reporting.summary_block(summary), "", reporting.cumulative_table(rows)])
    emit(cfg, "bounds.json", payload, table)


@cli.command()
@data_options
@click.option('--delta', multiple=True, help='Selection ratios for the panel, comma separated')
@click.option('--delta-bar', multiple=True, help='Bounds on |delta| for cumulative rows')
@click.option('--m', 'm', multiple=True, help='Magnitude bounds: inf, 2x or abs:0.5')
@guarded
def adjust(**options):
    """Bias adjustments and their sensitivity to delta."""
    cfg = AnalysisConfig.from_options(**options)
    summary = load_summary(cfg)
    panels, payload = [], {"panels": []}
    for label, r2long in resolve_rules(cfg, summary):
        report = breakdown_report(summary, r2long, cfg.m_bounds, label)
        sets = [solve_identified_set(summary, delta, r2long) for delta in cfg.deltas]
        cumulative = []
        for bound in cfg.m_bounds:
            for delta_bar in cfg.delta_bars:
                union = identified_set(summary, SensitivitySpec(r2long, delta_bar=delta_bar, m_bound=bound))
                cumulative.append((delta_bar, bound.label(), union))
        panels.append(f"R2_long rule {label} (R2_long = {reporting.fmt(r2long)})\n"
                      + reporting.adjust_panel(report, sets, cumulative))
        payload["panels"].append({
            "report": report.to_dict(),
            "sets": [reporting.points_to_json(p) for p in sets],
            "cumulative": [reporting.union_to_json(d, m, u) for d, m, u in cumulative],
        })
    emit(cfg, "adjust.json", payload, "\n\n".join(panels))


@cli.command(name='oracle-check')
@click.option('--seed', type=int, default=None, help='Seed for the random instances')
@click.option('--instances', type=int, default=None, help=f'Instances per suite (default {config.SUITE_INSTANCES})')
@click.option('--suite', 'suites', multiple=True, type=click.Choice(SUITES), help='Suites to run (default all)')
@click.option('--fault', type=float, default=None, help='Perturb the cubic leading coefficient (self-test)')
@click.option('--out', type=click.Path(), help='Directory for the report and failing fixtures')
@click.option('--json', 'json_output', is_flag=True, help='Print JSON instead of a summary')
@guarded
def oracle_check(suites, **options):
    """Run the constructive-oracle property suites."""
    cfg = AnalysisConfig.from_options(**options)
    fixture_dir = str(Path(cfg.out_dir) / "fixtures") if cfg.out_dir else None
    runner = SuiteRunner(cfg.seed, cfg.instances, fixture_dir, show_progress=not cfg.json_output,
                         fault=cfg.fault)
    results = runner.run(suites or SUITES)

    lines = []
    for result in results:
        mark = "✓" if result.passed else "✗"
        lines.append(f"{mark} {result.name}: {result.instances - len(result.failures)}/{result.instances}")
        lines += [f"   {note}" for note in result.notes]
        lines += [f"   fixture: {path}" for path in result.fixtures]
    payload = {"seed": cfg.seed, "results": [r.to_dict() for r in results]}
    emit(cfg, "oracle-check.json", payload, "\n".join(lines))
    assert_passed(results)


@cli.command(name='config')
@click.option('--save', '-s', help='Save the effective configuration to file')
@click.option('--load', '-l', help=f'Validate a configuration file and install it as {CONFIG_FILENAME}')
@guarded
def config_cmd(save: Optional[str], load: Optional[str]):
    """Show or manage default analysis settings."""
    if save:
        Path(save).write_text(json.dumps(AnalysisConfig.load_file(), indent=2))
        click.echo(f"✅ Configuration saved to {save}")
    elif load:
        loaded = AnalysisConfig.load(load)
        Path(CONFIG_FILENAME).write_text(json.dumps(loaded.to_dict(), indent=2))
        click.echo(f"✅ Configuration loaded from {load}")
    else:
        click.echo("Current Configuration:")
        click.echo(json.dumps(AnalysisConfig.load_file(), indent=2))


def main():
    """Main entry point for the CLI."""
    cli()


if __name__ == '__main__':
    main()

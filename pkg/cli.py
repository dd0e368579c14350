#!/usr/bin/env python3
"""
Command-line entry point for the kernel lab experiments.

Every subcommand resolves its configuration (built-in defaults, then
--config YAML, then flags), runs the experiment, writes CSV tables and a
JSON summary, and exits 0 iff every check passed.
"""

import logging
import os

import click

from config import config
from models.errors import ConfigError
from models.experiments import ExperimentHarness
from utils.data_manager import EXPERIMENTS, ExperimentConfigManager
from utils.report_engine import ReportEngine

logger = logging.getLogger(__name__)


def configure_logging(settings):
    logging.basicConfig(level=getattr(logging, str(settings.LOG_LEVEL).upper(), logging.INFO),
                        format=settings.LOG_FORMAT)


def common_options(func):
    """--config, --seed, --replicates, --out-dir, --thorough and --threads"""
    options = [
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='YAML experiment configuration'),
        click.option('--seed', type=int, help='Master seed'),
        click.option('--replicates', type=int, help='Monte Carlo replicates per cell'),
        click.option('--out-dir', type=click.Path(file_okay=False), help='Directory for CSV and JSON output'),
        click.option('--thorough', is_flag=True, help='Acceptance-size replicate counts'),
        click.option('--threads', type=int, help='Worker threads (results do not depend on it)'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _print_result(result, out_dir):
    mark = '✅' if result.passed else '❌'
    checks = ', '.join(f"{name}={'pass' if ok else 'FAIL'}" for name, ok in result.checks.items())
    click.echo(f"{mark} {result.experiment}: {checks or 'no checks'} -> {out_dir}")
    for error in result.errors:
        click.echo(f"   ⚠️  {error['cell']}: {error['error']}")


def _run_one(ctx, experiment_id, config_path, seed, replicates, out_dir, thorough, threads):
    manager = ctx.obj['manager']
    try:
        cfg = manager.build(experiment_id, config_path=config_path, seed=seed, replicates=replicates,
                            out_dir=out_dir, thorough=thorough, threads=threads)
    except ConfigError as e:
        click.echo(f"❌ {e}", err=True)
        ctx.exit(2)
    result = ctx.obj['harness'].run(cfg)
    ReportEngine().emit(result, cfg.output_dir)
    _print_result(result, cfg.output_dir)
    ctx.exit(0 if result.passed else 1)


@click.group()
@click.pass_context
def main(ctx):
    """Random wavelet summability kernel experiments"""
    settings = config[os.environ.get('KERNEL_LAB_CONFIG', 'default')]
    configure_logging(settings)
    ctx.ensure_object(dict)
    ctx.obj['manager'] = ExperimentConfigManager(settings)
    ctx.obj['harness'] = ExperimentHarness()


@main.command('haar-identity')
@common_options
@click.pass_context
def haar_identity(ctx, **options):
    """square_summability * delta^2 = 4/3 and Haar regularity"""
    _run_one(ctx, 'haar_identity', **options)


@main.command('cz-sweep')
@common_options
@click.pass_context
def cz_sweep(ctx, **options):
    """Size and gradient norms across distance decades"""
    _run_one(ctx, 'cz_sweep', **options)


@main.command('gradient-check')
@common_options
@click.pass_context
def gradient_check(ctx, **options):
    """Analytic kernel derivatives against central differences"""
    _run_one(ctx, 'gradient_check', **options)


@main.command('concentration')
@click.argument('kind', type=click.Choice(['smooth', 'haar', 'operator']))
@common_options
@click.pass_context
def concentration(ctx, kind, **options):
    """Empirical tails against the sharp concentration bounds"""
    _run_one(ctx, f"concentration_{kind}", **options)


@main.command('three-series')
@common_options
@click.pass_context
def three_series(ctx, **options):
    """Three-series convergence certificates"""
    _run_one(ctx, 'three_series', **options)


@main.command('operator-bound')
@common_options
@click.pass_context
def operator_bound(ctx, **options):
    """Monte Carlo L2 norm of T f against the certified bound"""
    _run_one(ctx, 'operator_bound', **options)


@main.command('weak11')
@common_options
@click.pass_context
def weak11(ctx, **options):
    """Weak (1,1) profile for a spike"""
    _run_one(ctx, 'weak11', **options)


@main.command('subgauss-check')
@common_options
@click.pass_context
def subgauss_check(ctx, **options):
    """Tails, log-MGF and moments of the coefficient laws"""
    _run_one(ctx, 'subgauss_check', **options)


@main.command('report')
@common_options
@click.option('--only', multiple=True, type=click.Choice(EXPERIMENTS), help='Restrict the suite')
@click.pass_context
def report(ctx, config_path, seed, replicates, out_dir, thorough, threads, only):
    """Run every experiment and write a combined summary.json"""
    manager = ctx.obj['manager']
    out_dir = out_dir or os.path.join(manager.settings.OUTPUT_DIR, 'report')
    try:
        configs = [manager.build(experiment_id, config_path=config_path, seed=seed, replicates=replicates,
                                 out_dir=out_dir, thorough=thorough, threads=threads)
                   for experiment_id in (only or EXPERIMENTS)]
    except ConfigError as e:
        click.echo(f"❌ {e}", err=True)
        ctx.exit(2)

    click.echo(f"🚀 Running {len(configs)} experiments -> {out_dir}")
    engine = ReportEngine()
    results = ctx.obj['harness'].run_suite(
        configs, progress=lambda i, total, name: click.echo(f"📊 [{i + 1}/{total}] {name}"))
    for result in results:
        engine.emit(result, out_dir)
        _print_result(result, out_dir)
    summary = engine.emit_suite(results, out_dir)
    passed = all(result.passed for result in results)
    click.echo(f"{'✅' if passed else '❌'} summary: {summary}")
    ctx.exit(0 if passed else 1)


if __name__ == '__main__':
    main()

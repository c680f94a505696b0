import functools
import json
import logging
import os
import sys

import click
from flask import Flask, request
from qwc_services_core.translator import Translator

from coordinator import ConfigError
from coordination_service import CoordinationService
from reporting import (
    read_trace, run_directory, write_comparison, write_meta, write_savings,
    write_solution, write_trace
)
from run_config import resolve


EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_FAILURE = 2

logger = logging.getLogger('tdcoord')

# message catalogs are looked up under translations/ next to this module
app = Flask(__name__)


def exit_code(result):
    """Exit status of a service result dict."""
    if 'error' not in result:
        return EXIT_OK
    return EXIT_FINDINGS if result['error_code'] == 422 else EXIT_FAILURE


def create_translator(locale):
    """Translator for a locale, negotiated like an Accept-Language header.

    :param str locale: Locale code, e.g. 'de'
    """
    with app.test_request_context(headers={'Accept-Language': locale}):
        return Translator(app, request)


class Context():
    """Run options of one command."""

    def __init__(self, out, overrides, config_file, locale):
        self.out = out
        self.overrides = overrides
        self.config_file = config_file
        self.translator = create_translator(locale)
        self.service = CoordinationService(logger)

    def run_config(self, command, case_path=None):
        try:
            return resolve(command, case_path, self.out, self.config_file,
                           self.overrides)
        except ConfigError as e:
            click.echo(self.translator.tr("error.config_invalid") % e,
                       err=True)
            sys.exit(EXIT_FAILURE)

    def finish(self, result, cfg=None, run_dir=None, **meta):
        """Report an error, write meta.json and exit."""
        if 'error' in result:
            click.echo(result['error'], err=True)
            details = result.get('error_details')
            if isinstance(details, dict):
                for finding in details.get('findings', []):
                    click.echo("  %s" % finding['message'], err=True)
        code = exit_code(result)
        if cfg is not None and run_dir is not None:
            write_meta(cfg, os.path.join(run_dir, 'meta.json'),
                       exit_code=code, error=result.get('error'), **meta)
        sys.exit(code)


def case_option(func):
    return click.option('--case', 'case_path', required=True,
                        type=click.Path(), help='Case file')(func)


def run_options(func):
    """Add the per-command run options and pass them on as a Context."""
    @functools.wraps(func)
    def command(out, overrides, config_file, locale, **kwargs):
        return func(Context(out, overrides, config_file, locale), **kwargs)

    for option in (
            click.option('--locale', default='en', help='Message language'),
            click.option('--config', 'config_file', type=click.Path(),
                         help='JSON configuration file'),
            click.option('--set', 'overrides', multiple=True,
                         metavar='KEY=VALUE',
                         help='Override a configuration value by dotted key'),
            click.option('--out', default='out', show_default=True,
                         help='Root directory for run outputs')):
        command = option(command)
    return command


@click.group()
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
@click.option('-q', '--quiet', is_flag=True, help='Warnings only')
def cli(verbose, quiet):
    """Coordinated TSO-DSO market clearing."""
    level = logging.DEBUG if verbose else \
        logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@cli.command('validate')
@case_option
@run_options
def validate_command(ctx, case_path):
    """Check a case and list its findings."""
    cfg = ctx.run_config('validate', case_path)
    result = ctx.service.validate(ctx.translator, case_path)
    run_dir = run_directory(cfg)
    report = result.get('error_details') if 'error' in result else {
        'valid': result['valid'], 'findings': result['findings']}
    if isinstance(report, dict):
        with open(os.path.join(run_dir, 'validation.json'), 'w',
                  encoding='utf-8') as f:
            json.dump(report, f, indent=2)
            f.write("\n")
    if 'error' not in result:
        click.echo("case is valid")
    ctx.finish(result, cfg, run_dir)


@cli.command('solve')
@case_option
@run_options
def solve_command(ctx, case_path):
    """Solve the coordinated problem monolithically."""
    cfg = ctx.run_config('solve', case_path)
    result = ctx.service.solve(ctx.translator, cfg, case_path)
    run_dir = run_directory(cfg)
    if 'error' not in result:
        path = write_solution(result['solution'], result['case'],
                              os.path.join(run_dir, 'solution.out'))
        logger.info("Wrote %s" % path)
        click.echo("welfare %.6f" % result['summary']['welfare'])
    ctx.finish(result, cfg, run_dir, summary=_jsonable(result))


@cli.command('coordinate')
@case_option
@run_options
def coordinate_command(ctx, case_path):
    """Run surrogate Lagrangian coordination."""
    cfg = ctx.run_config('coordinate', case_path)
    result = ctx.service.coordinate(ctx.translator, cfg, case_path)
    run_dir = run_directory(cfg)
    if 'error' in result:
        ctx.finish(result, cfg, run_dir)
    _write_trace_outputs(result, run_dir)
    unconverged = ctx.service.not_converged(ctx.translator, result['trace'])
    ctx.finish(unconverged or result, cfg, run_dir,
               summary=_jsonable(result))


@cli.command('baseline')
@case_option
@run_options
def baseline_command(ctx, case_path):
    """Run the subgradient baseline and separate operation."""
    cfg = ctx.run_config('baseline', case_path)
    result = ctx.service.baseline(ctx.translator, cfg, case_path)
    run_dir = run_directory(cfg)
    if 'error' not in result:
        _write_trace_outputs(result, run_dir)
    ctx.finish(result, cfg, run_dir, summary=_jsonable(result))


@cli.command('scale-study')
@case_option
@run_options
def scale_study_command(ctx, case_path):
    """Replicate the template DSO and tabulate savings."""
    cfg = ctx.run_config('scale-study', case_path)
    result = ctx.service.scale_study(ctx.translator, cfg, case_path)
    run_dir = run_directory(cfg)
    reports = result.get('reports')
    if reports is not None:
        path = write_savings(reports, os.path.join(run_dir, 'savings.csv'))
        logger.info("Wrote %s with %d rows" % (path, len(reports)))
    ctx.finish(result, cfg, run_dir)


@cli.command('report')
@case_option
@click.option('--slr-trace', required=True, type=click.Path(),
              help='trace.csv of a coordinate run')
@click.option('--baseline-trace', required=True, type=click.Path(),
              help='trace.csv of a baseline run')
@click.option('--optimum', type=float,
              help='Reference welfare; solved monolithically if omitted')
@run_options
def report_command(ctx, case_path, slr_trace, baseline_trace, optimum):
    """Compare SLR and baseline traces against the optimum."""
    cfg = ctx.run_config('report', case_path)
    run_dir = run_directory(cfg)
    for path in (slr_trace, baseline_trace):
        if not os.path.isfile(path):
            ctx.finish({
                'error': ctx.translator.tr("error.trace_not_found") % path,
                'error_code': 404
            }, cfg, run_dir)
    if optimum is None:
        optimum, error = ctx.service.optimum(ctx.translator, cfg, case_path)
        if error:
            ctx.finish(error, cfg, run_dir)
    path = write_comparison(read_trace(slr_trace), read_trace(baseline_trace),
                            optimum, os.path.join(run_dir, 'comparison.csv'))
    logger.info("Wrote %s" % path)
    ctx.finish({}, cfg, run_dir, optimum=optimum)


@cli.command('generate')
@run_options
def generate_command(ctx):
    """Write a seeded synthetic case."""
    cfg = ctx.run_config('generate')
    result = ctx.service.generate(ctx.translator, cfg)
    run_dir = run_directory(cfg)
    if 'error' not in result:
        path = os.path.join(run_dir, 'synthetic.case')
        with open(path, 'w', encoding='utf-8') as f:
            f.write(result['document'])
            f.write("\n")
        click.echo(path)
    ctx.finish(result, cfg, run_dir)


def _write_trace_outputs(result, run_dir):
    trace, case = result['trace'], result['case']
    write_trace(trace, case, os.path.join(run_dir, 'trace.csv'))
    write_solution(trace, case, os.path.join(run_dir, 'solution.out'))
    logger.info("Wrote trace with %d rows to %s" %
                (len(trace.records), run_dir))


def _jsonable(result):
    return result.get('summary')


if __name__ == '__main__':
    cli()

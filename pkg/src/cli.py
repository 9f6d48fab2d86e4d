"""
command-line interface for kprobe
probes the action-space hessian near hyperbolic singular fibers and checks
the det = g / prod F (ln F)^3 scaling law
"""

import sys

import click

from actions.action_map import DEFAULT_GRID, ActionMapper
from asymptotics.scaling import AsymptoticsVerifier, SingularPath
from calculus.hessian_calculus import HessianCalculator
from catalog.model_catalog import ModelCatalog
from common.config import LOG_LEVELS, load_run_config, load_settings, setup_logging
from common.errors import ConfigError, KProbeError
from geometry.phase_plane import trace_level_curve
from reporting.report_writer import ReportWriter, fit_summary_table

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_HYPOTHESIS = 2
EXIT_CONFIG = 3

DEFAULT_SAMPLES = 200

# global instances
settings = None
catalog = None


def init_modules(log_level=None):
    """initialize logging, default settings and the catalog"""
    global settings, catalog

    try:
        setup_logging(log_level)
        settings = load_settings()
        catalog = ModelCatalog(settings)
    except ConfigError as e:
        click.echo(f"✗ failed to initialize: {e}")
        sys.exit(EXIT_CONFIG)


def fail(error):
    """report an error and exit with its code"""
    if isinstance(error, ConfigError):
        where = f" [{error.field}]" if error.field else ""
        click.echo(f"✗ config error{where}: {error}")
        sys.exit(EXIT_CONFIG)
    click.echo(f"✗ {error}")
    sys.exit(EXIT_NUMERICAL)


def load_model(config_path):
    """run config and its built model"""
    run = load_run_config(config_path, settings)
    model = ModelCatalog(run.settings).build_model(run.model_spec)
    return run, model


def parse_floats(text, field):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigError(f"'{text}' is not a comma-separated list of numbers", field=field)


@click.group()
@click.option('--log-level', type=click.Choice(sorted(LOG_LEVELS)), default=None,
              help='overrides KPROBE_LOG')
def cli(log_level):
    """kprobe - kolmogorov condition near hyperbolic singularities"""
    init_modules(log_level)


# probing

@cli.command()
@click.option('--config', 'config_path', required=True, help='run config json')
@click.option('--point', 'points', multiple=True, help='comma-separated F1,...,Fn (repeatable)')
@click.option('--dump-curves', is_flag=True, help='also write level curves of geometric factors')
def probe(config_path, points, dump_curves):
    """evaluate the action chart and det(d2H/dIdI) at points"""
    try:
        run, model = load_model(config_path)
        targets = [parse_floats(p, 'point') for p in points] or [list(p) for p in run.points]
        if not targets:
            raise ConfigError("no points given on the command line or in the config", field='points')
        for target in targets:
            if len(target) != model.n:
                raise ConfigError(f"point {target} has {len(target)} coordinates, model needs {model.n}", field='points')

        conditions = ModelCatalog(run.settings).validate_conditions(model)
        calculator = HessianCalculator(model, run.settings)
        samples = [calculator.det_hessian(t) for t in targets]

        writer = ReportWriter(run.output_dir)
        writer.emit_report('probe', samples, 'csv')
        writer.emit_report('probe', [s.to_record() for s in samples], 'json')
        writer.emit_report('conditions', [conditions], 'json')

        if dump_curves:
            for p_idx, target in enumerate(targets):
                for i, factor in enumerate(model.factors):
                    if factor.is_synthetic:
                        continue
                    level = factor.native_level(target[model.coordinate(i)])
                    curve = trace_level_curve(factor, level, run.settings)
                    writer.emit_frame(f'curve_point{p_idx + 1}_factor{i + 1}', curve.to_frame())
        writer.write_manifest()
    except KProbeError as e:
        fail(e)

    for s in samples:
        click.echo(f"✓ F = {list(s.F.values)}: detJ = {s.detJ:.10g}, detHess = {s.detHess:.10g}")
    if not conditions['passed']:
        failed = sorted({c['condition'] for c in conditions['conditions'] if not c['passed']})
        click.echo(f"✗ model fails conditions {failed}")
        sys.exit(EXIT_HYPOTHESIS)
    sys.exit(EXIT_OK)


@cli.command('fit-action')
@click.option('--config', 'config_path', required=True, help='run config json')
@click.option('--factor', 'factor_index', type=int, default=None, help='1-based factor index (default: all)')
def fit_action(config_path, factor_index):
    """fit I = psi F ln F + phi for singular actions"""
    try:
        run, model = load_model(config_path)
        unknown = set(run.fit) - set(DEFAULT_GRID)
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown fit option '{key}'", field=f'fit.{key}')

        indices = [factor_index] if factor_index is not None else list(range(1, model.k + 1))
        mapper = ActionMapper(model, run.settings)
        writer = ReportWriter(run.output_dir)
        fits = []
        for idx in indices:
            fit = mapper.fit_singular_action(idx, run.fit)
            record = fit.to_record()
            if not model.factors[idx - 1].is_synthetic:
                record['period_oracle'] = mapper.period_psi_oracle(idx)
            writer.emit_report(f'fit_factor{idx}', [record], 'json')
            fits.append(fit)

        lines = fit_summary_table(fits)
        writer.emit_text('fit_summary.txt', lines)
        writer.write_manifest()
    except KProbeError as e:
        fail(e)

    for line in lines:
        click.echo(line)
    sys.exit(EXIT_OK)


# verification

def default_box(path):
    box = [(s - 0.1, s + 0.1) for s in path.smooth]
    box += [(c * path.t_min, c * path.t_max) for c in path.coefficients]
    return box


@cli.command()
@click.option('--config', 'config_path', required=True, help='run config json')
@click.option('--path-spec', default=None, help='comma-separated c1,...,ck for F_sing = c t')
@click.option('--tmin', type=float, default=None)
@click.option('--tmax', type=float, default=None)
@click.option('--points', 'count', type=int, default=None, help='samples along the path')
def verify(config_path, path_spec, tmin, tmax, count):
    """run the full scaling-law verification on a model"""
    try:
        run, model = load_model(config_path)
        spec = dict(run.path)
        if path_spec is not None:
            spec['coefficients'] = parse_floats(path_spec, 'path-spec')
        if tmin is not None:
            spec['t_min'] = tmin
        if tmax is not None:
            spec['t_max'] = tmax
        if count is not None:
            spec['points'] = count
        path = SingularPath.from_spec(spec, model)

        verifier = AsymptoticsVerifier(model, run.settings)
        report = verifier.scaled_det_path(path)
        divergence = verifier.divergence_check(path)
        decay = verifier.frequency_decay_check(path)

        box = run.verify.get('box') or default_box(path)
        sampled = verifier.verify_kolmogorov(box, int(run.verify.get('samples', DEFAULT_SAMPLES)), run.seed)

        if not report.conditions_passed or sampled['verdict'] == 'hypothesis-violated':
            verdict = 'hypothesis-violated'
        elif report.verdict == 'kolmogorov-holds' and sampled['verdict'] == 'kolmogorov-holds' \
                and divergence['passed'] and decay['passed']:
            verdict = 'kolmogorov-holds'
        else:
            verdict = 'inconclusive'

        writer = ReportWriter(run.output_dir)
        writer.emit_report('scaling', [report], 'csv')
        writer.emit_report('verify', [{
            'label': model.label,
            'verdict': verdict,
            'scaling': report.to_record(),
            'divergence': divergence,
            'frequency_decay': decay,
            'sampled': sampled,
        }], 'json')
        writer.write_manifest()
    except KProbeError as e:
        fail(e)

    mark = '✓' if verdict == 'kolmogorov-holds' else '✗'
    click.echo(f"{mark} verdict {verdict}: g = {report.g_estimate:.8f} (spread {report.g_spread:.2e}), "
               f"exponents a = {report.exponents[0]:.4f}, b = {report.exponents[1]:.4f}")
    if sampled['min_abs_det'] is not None:
        click.echo(f"  min |detHess| over {sampled['samples']} samples: {sampled['min_abs_det']:.6g}")
    for w in sampled['witnesses']:
        click.echo(f"  witness: condition {w['condition']} at {w.get('point')}")

    if verdict == 'kolmogorov-holds':
        sys.exit(EXIT_OK)
    if verdict == 'hypothesis-violated':
        sys.exit(EXIT_HYPOTHESIS)
    sys.exit(EXIT_NUMERICAL)


# geometry

@cli.command()
@click.option('--config', 'config_path', required=True, help='run config json')
@click.option('--factor', 'factor_index', type=int, required=True, help='1-based factor index')
@click.option('--level', type=float, required=True, help='native level value f')
@click.option('--separatrix', is_flag=True, help='allow f = 0')
def trace(config_path, factor_index, level, separatrix):
    """write the level curve of one geometric factor as csv"""
    try:
        run, model = load_model(config_path)
        if not (1 <= factor_index <= model.k):
            raise ConfigError(f"factor index must be in 1..{model.k}", field='factor')
        factor = model.factors[factor_index - 1]
        curve = trace_level_curve(factor, level, run.settings, separatrix=separatrix)

        writer = ReportWriter(run.output_dir)
        writer.emit_frame(f'curve_factor{factor_index}', curve.to_frame())
        writer.write_manifest()
    except KProbeError as e:
        fail(e)

    closed = sum(curve.closed)
    click.echo(f"✓ {len(curve.branches)} branches ({closed} closed) at f = {level:g}")
    sys.exit(EXIT_OK)


# catalog

@cli.group()
def models():
    """the shipped model catalog"""


@models.command('list')
def list_models():
    """list catalog model names"""
    names = catalog.list_models()
    if names:
        click.echo("catalog models:")
        for name in names:
            click.echo(f"  - {name}")
    else:
        click.echo("no catalog models found")


if __name__ == '__main__':
    cli()

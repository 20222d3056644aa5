#!/usr/bin/env python3
"""
benthic - micro/macro simulation of benthic algae populations

Every subcommand writes CSV data plus a JSON run record into --output-dir,
and an SVG plot with --plot. Durations take an 'h' or 'd' suffix and rates a
'/h' or '/d' suffix; everything is converted to hours on parsing.
"""

import os
import sys
import logging
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
import pandas as pd
import psutil
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .core import analysis, calibrate, macro_ide, micro_sim
from .core.errors import DomainError, NumericalError
from .core.growth import GrowthKind, GrowthSpec
from .core.outputs import OUTPUT_DIR, write_csv, write_json
from .core.plotting import PlotKind, PlotStyle, Series, emit_plot
from .core.rate_measure import QuantileLift, RateMeasure, build_quantile_lift, laplace_transform
from .core.units import FlipRule, SimConfig, Stepper, parse_duration, parse_rate
from .data import FIXTURES, fixture_path
from .models import RunConfig, RunRecord
from .presets import PRESETS, Preset, get_preset

# Load environment
load_dotenv()

DEFAULT_WORKERS = int(os.environ.get('BENTHIC_WORKERS', '0')) or psutil.cpu_count(logical=False) or 1
LOG_LEVEL = os.environ.get('BENTHIC_LOG_LEVEL', 'WARNING').upper()

logger = logging.getLogger(__name__)
console = Console()

# model fields as they are spelled on the command line
FIELD_FLAGS = {
    'alpha': '--alpha', 'beta': '--beta', 'eta': '--eta', 'r': '--r', 'a': '--a',
    'dt': '--dt', 'horizon': '--horizon', 'max_steps': '--steps', 'seed': '--seed',
    'a_lower': '--preset', 'a_upper': '--preset', 'input_path': '--input',
}


class DurationType(click.ParamType):
    name = 'duration'

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        try:
            hours = parse_duration(value)
        except DomainError as exc:
            self.fail(str(exc), param, ctx)
        if hours < 0:
            self.fail(f"'{value}' is negative", param, ctx)
        return hours


class RateType(click.ParamType):
    name = 'rate'

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        try:
            per_hour = parse_rate(value)
        except DomainError as exc:
            self.fail(str(exc), param, ctx)
        if per_hour < 0:
            self.fail(f"'{value}' is negative", param, ctx)
        return per_hour


DURATION = DurationType()
RATE = RateType()


def _flag_message(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        parts = []
        for err in exc.errors():
            field = str(err['loc'][-1]) if err['loc'] else ''
            flag = FIELD_FLAGS.get(field, field or 'input')
            parts.append(f"Invalid value for '{flag}': {err['msg']}")
        return '; '.join(parts)
    return str(exc)


class BenthicGroup(click.Group):
    """Maps toolkit errors onto click's exit codes: 2 for bad input, 1 for numerics."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (DomainError, ValidationError) as exc:
            raise click.UsageError(_flag_message(exc), ctx=ctx) from exc
        except NumericalError as exc:
            raise click.ClickException(f'numerical failure: {exc}') from exc


class App:
    def __init__(self, output_dir: Path, workers: int, plot: bool):
        self.output_dir = Path(output_dir)
        self.workers = workers
        self.plot = plot

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def record(self, name: str, config: RunConfig, outputs: List[Path], summary: Dict) -> Path:
        rec = RunRecord(config=config, outputs=[p.name for p in outputs], summary=summary, version=__version__)
        return write_json(rec.to_payload(), self.path(f'{name}.json'))

    def maybe_plot(self, series: List[Series], style: PlotStyle, name: str, outputs: List[Path]):
        if not self.plot:
            return
        try:
            outputs.append(emit_plot(series, style, self.path(f'{name}.svg')))
        except Exception as e:
            # plots are best-effort; the data files are already written
            logger.error(f'Plot {name} failed: {e}')
            console.print(f'[yellow]Plot {name} skipped: {e}[/yellow]')


def _stack(*options):
    def wrap(f):
        for option in reversed(options):
            f = option(f)
        return f
    return wrap


preset_option = click.option('--preset', type=click.Choice(list(PRESETS)), default=None, help='Published parameterization')

shape_options = _stack(
    click.option('--alpha', type=float, default=None, help='Gamma shape'),
    click.option('--beta', type=RATE, default=None, help="Gamma scale, e.g. '1.431/h'"),
)

measure_options = _stack(
    shape_options,
    click.option('--eta', type=float, default=None, help='Abrasion multiplier on beta'),
)

growth_options = _stack(
    click.option('--growth', type=click.Choice(['none', 'logistic', 'allee']), default=None, help='Growth law'),
    click.option('--r', 'r', type=RATE, default=None, help="Intrinsic growth rate, e.g. '0.3/d'"),
    click.option('--a', 'a', type=float, default=None, help='Constant Allee threshold'),
)

sim_options = _stack(
    click.option('--dt', type=DURATION, default=None, help="Time step, e.g. '0.001d'"),
    click.option('--horizon', type=DURATION, default=None, help="Simulated time, e.g. '200d'"),
    click.option('--steps', type=click.IntRange(min=0), default=None, help='Number of steps (overrides --horizon)'),
    click.option('--seed', type=click.IntRange(min=0, max=2**64 - 1), default=0, show_default=True),
    click.option('--flip-rule', type=click.Choice([f.value for f in FlipRule]), default=FlipRule.EXPONENTIAL.value),
    click.option('--stepper', type=click.Choice([s.value for s in Stepper]), default=Stepper.EULER.value),
)


def _preset(params: Dict, default: Optional[str]) -> Optional[Preset]:
    return get_preset(params.get('preset') or default)


def _measure(params: Dict, preset: Optional[Preset]) -> RateMeasure:
    base = preset.measure if preset is not None else PRESETS['case1'].measure
    return RateMeasure(
        alpha=params['alpha'] if params.get('alpha') is not None else base.alpha,
        beta=params['beta'] if params.get('beta') is not None else base.beta,
        eta=params['eta'] if params.get('eta') is not None else base.eta,
    )


def _growth(params: Dict, preset: Optional[Preset]) -> GrowthSpec:
    base = preset.growth if preset is not None else GrowthSpec.decay_only()
    kind, r, a = params.get('growth'), params.get('r'), params.get('a')
    if kind is None and r is None and a is None:
        return base
    if kind == 'none':
        return GrowthSpec.decay_only()
    if kind is None:
        kind = 'allee' if a is not None else base.kind.value
    if r is None:
        r = base.r if base.r > 0 else PRESETS['sec3.2'].growth.r
    if kind == GrowthKind.LOGISTIC.value:
        if a is not None:
            raise click.BadParameter('a logistic law takes no threshold', param_hint="'--a'")
        return GrowthSpec.logistic(r)
    if a is not None:
        return GrowthSpec.allee(r, a=a)
    if base.kind == GrowthKind.ALLEE:
        return GrowthSpec.allee(r, a=base.a, schedule=base.schedule)
    raise click.BadParameter('an Allee law needs --a or a preset with a threshold', param_hint="'--a'")


def _sim(params: Dict, preset: Optional[Preset], dt: float = 0.001, horizon: float = 6.0) -> SimConfig:
    if preset is not None:
        dt, horizon = preset.dt, preset.horizon
    if params.get('dt') is not None:
        dt = params['dt']
    if params.get('horizon') is not None:
        horizon = params['horizon']
    steps = params.get('steps')
    if steps is not None:
        horizon = max(steps, 1) * dt
    return SimConfig(
        dt=dt,
        horizon=horizon,
        seed=params.get('seed') or 0,
        max_steps=steps,
        flip_rule=FlipRule(params.get('flip_rule') or FlipRule.EXPONENTIAL.value),
        stepper=Stepper(params.get('stepper') or Stepper.EULER.value),
    )


def _lift(measure: RateMeasure, m: int) -> QuantileLift:
    lift = build_quantile_lift(measure, m)
    logger.info(f'lift M={m}: rates {lift.rates[0]:.3e} .. {lift.rates[-1]:.3e} per hour')
    return lift


def _summary_table(title: str, rows: Dict) -> Table:
    table = Table(title=title)
    table.add_column('Quantity', style='cyan')
    table.add_column('Value', justify='right')
    for key, value in rows.items():
        table.add_row(str(key), f'{value:.6g}' if isinstance(value, float) else str(value))
    return table


def _progress():
    return Progress(SpinnerColumn(), TextColumn('[progress.description]{task.description}'), BarColumn(), console=console)


@click.group(cls=BenthicGroup)
@click.option('--output-dir', type=click.Path(file_okay=False, path_type=Path), default=OUTPUT_DIR, show_default=True)
@click.option('--workers', type=click.IntRange(min=1), default=DEFAULT_WORKERS, show_default=True,
              help='Parallel work units (results do not depend on it)')
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              default=LOG_LEVEL, show_default=True)
@click.option('--plot/--no-plot', default=False, help='Also write SVG plots')
@click.version_option(__version__, prog_name='benthic')
@click.pass_context
def cli(ctx, output_dir, workers, log_level, plot):
    """Benthic algae micro/macro simulation toolkit"""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    ctx.obj = App(output_dir, workers, plot)


@cli.command()
@preset_option
@measure_options
@click.option('--t-max', type=DURATION, default='6h', show_default=True)
@click.option('--dt', type=DURATION, default='0.01h', show_default=True, help='Output grid spacing')
@click.option('--M', 'm', type=click.IntRange(min=1), default=None, help='Also run the decay-only macro model on M nodes')
@click.pass_obj
def decay(app: App, m, t_max, dt, **params):
    """Long-memory decay curve, optionally against the discretized models"""
    preset = _preset(params, 'case1')
    measure = _measure(params, preset)
    config = SimConfig(dt=dt, horizon=max(t_max, dt))
    times = config.times()
    frame = pd.DataFrame({'t': times, 'closed_form': laplace_transform(measure, times)})
    if m is not None:
        lift = _lift(measure, m)
        frame['macro'] = macro_ide.simulate_macro(np.ones(m), lift, GrowthSpec.decay_only(), config).x
        mean, variance = micro_sim.decay_mean_variance(lift, times)
        frame['micro_mean'] = mean
        frame['micro_variance'] = variance

    outputs = [write_csv(frame, app.path('decay.csv'))]
    series = [Series(label='(1 + beta t)^-alpha', x=times.tolist(), y=frame['closed_form'].tolist())]
    if m is not None:
        series.append(Series(label=f'macro M={m}', x=times.tolist(), y=frame['macro'].tolist()))
    app.maybe_plot(series, PlotStyle(title='Decay', ylabel='X'), 'decay', outputs)
    summary = {'X_final': float(frame['closed_form'].iloc[-1]), 'mean_rate': measure.mean}
    if m is not None:
        summary['max_abs_gap'] = float(np.max(np.abs(frame['macro'] - frame['closed_form'])))
    config_rec = RunConfig(command='decay', preset=preset.name if preset else None, measure=measure, sim=config, m=m)
    app.record('decay', config_rec, outputs, summary)
    console.print(_summary_table('Decay', summary))


@cli.command()
@preset_option
@measure_options
@growth_options
@sim_options
@click.option('--M', 'm', type=click.IntRange(min=1), default=None, help='Number of sites')
@click.option('--n-paths', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--fraction', type=click.FloatRange(0, 1), default=1.0, show_default=True, help='Initially occupied share')
@click.option('--record-bits', is_flag=True, help='Write every site value of a single path')
@click.pass_obj
def micro(app: App, m, n_paths, fraction, record_bits, **params):
    """Stochastic spin system: one path or an ensemble"""
    preset = _preset(params, 'sec3.2')
    measure, spec, config = _measure(params, preset), _growth(params, preset), _sim(params, preset)
    m = m or (preset.m if preset else 256)
    lift = _lift(measure, m)
    bits = micro_sim.initial_bits(m, fraction)
    outputs: List[Path] = []

    if n_paths == 1:
        path = micro_sim.simulate_path(bits, lift, spec, config, record_bits=record_bits)
        outputs.append(write_csv(path.to_frame(), app.path('micro_path.csv')))
        if record_bits:
            outputs.append(write_csv(path.site_frame(), app.path('micro_sites.csv')))
        summary = {'X_0': float(path.x[0]), 'X_T': float(path.x[-1]), 'steps': config.n_steps}
        series = [Series(label=f'micro M={m}', x=path.times.tolist(), y=path.x.tolist())]
    else:
        with _progress() as progress:
            task = progress.add_task(f'Simulating {n_paths} paths...', total=None)
            runs = micro_sim.ensemble(bits, lift, spec, config, n_paths, workers=app.workers)
            progress.update(task, completed=True)
        frame = pd.DataFrame({'t': runs.times, 'mean': runs.mean, 'variance': runs.variance})
        outputs.append(write_csv(frame, app.path('micro_ensemble.csv')))
        outputs.append(write_csv(runs.terminal_frame(), app.path('micro_terminal.csv')))
        summary = runs.summary()
        summary['steps'] = config.n_steps
        series = [Series(label=f'mean of {n_paths} paths', x=runs.times.tolist(), y=runs.mean.tolist())]

    app.maybe_plot(series, PlotStyle(title='Micro system'), 'micro', outputs)
    rec = RunConfig(command='micro', preset=preset.name if preset else None, measure=measure, growth=spec,
                    sim=config, m=m, n_paths=n_paths, workers=app.workers, extra={'fraction': fraction})
    app.record('micro', rec, outputs, summary)
    console.print(_summary_table(f'Micro system (M={m})', summary))


@cli.command()
@preset_option
@measure_options
@growth_options
@sim_options
@click.option('--M', 'm', type=click.IntRange(min=1), default=None, help='Number of nodes')
@click.option('--fraction', type=click.FloatRange(0, 1), default=1.0, show_default=True, help='Initial occupancy')
@click.option('--record-nodes', is_flag=True, help='Write every node value')
@click.pass_obj
def macro(app: App, m, fraction, record_nodes, **params):
    """Discretized integro-differential population model"""
    preset = _preset(params, 'sec3.2')
    measure, spec, config = _measure(params, preset), _growth(params, preset), _sim(params, preset)
    m = m or (preset.m if preset else 256)
    lift = _lift(measure, m)
    run = macro_ide.simulate_macro(np.full(m, fraction), lift, spec, config, record_nodes=record_nodes)
    outputs = [write_csv(run.to_frame(), app.path('macro.csv'))]
    if record_nodes:
        outputs.append(write_csv(run.node_frame(), app.path('macro_nodes.csv')))
    app.maybe_plot([Series(label=f'macro M={m}', x=run.times.tolist(), y=run.x.tolist())],
                   PlotStyle(title='Macro model', ylabel='X_hat'), 'macro', outputs)
    summary = {'X_hat_0': float(run.x[0]), 'X_hat_T': run.terminal, 'steps': config.n_steps}
    rec = RunConfig(command='macro', preset=preset.name if preset else None, measure=measure, growth=spec,
                    sim=config, m=m, extra={'fraction': fraction})
    app.record('macro', rec, outputs, summary)
    console.print(_summary_table(f'Macro model (M={m})', summary))


@cli.command()
@preset_option
@measure_options
@growth_options
@sim_options
@click.option('--l-min', type=click.IntRange(min=0), default=None)
@click.option('--l-max', type=click.IntRange(min=0), default=None)
@click.option('--n-seeds', type=click.IntRange(min=1), default=None)
@click.pass_obj
def converge(app: App, l_min, l_max, n_seeds, **params):
    """Squared micro-macro gap Er(M) for M = 2^l and its power-law fit"""
    preset = _preset(params, 'sec3.2')
    measure, spec, config = _measure(params, preset), _growth(params, preset), _sim(params, preset)
    lo, hi = preset.l_range if preset else (1, 12)
    lo = lo if l_min is None else l_min
    hi = hi if l_max is None else l_max
    if hi < lo:
        raise click.BadParameter(f'--l-max {hi} is below --l-min {lo}', param_hint="'--l-max'")
    n_seeds = n_seeds or (preset.n_seeds if preset else 16)

    with _progress() as progress:
        task = progress.add_task('Convergence study...', total=hi - lo + 1)
        report = analysis.convergence_study(
            analysis.quantile_family(measure), spec, config, range(lo, hi + 1), n_seeds=n_seeds,
            workers=app.workers, progress=lambda point: progress.advance(task),
        )
    outputs = [write_csv(report.to_frame(), app.path('converge.csv'))]
    ls = [float(p.l) for p in report.points]
    series = [Series(label='Er', x=ls, y=[p.er for p in report.points], kind=PlotKind.POINTS)]
    if report.fit is not None:
        fitted = [report.fit.c * 2.0 ** (-report.fit.p * l) for l in ls]
        series.append(Series(label=f'{report.fit.c:.3g} 2^(-{report.fit.p:.2f} l)', x=ls, y=fitted))
    if all(p.er > 0 for p in report.points):
        app.maybe_plot(series, PlotStyle(title='Micro-macro gap', xlabel='l', ylabel='Er', logy=True), 'converge', outputs)
    summary = report.fit.model_dump() if report.fit is not None else {'fit': 'degenerate'}
    rec = RunConfig(command='converge', preset=preset.name if preset else None, measure=measure, growth=spec,
                    sim=config, workers=app.workers, extra={'l_min': lo, 'l_max': hi, 'n_seeds': n_seeds})
    app.record('converge', rec, outputs, summary | {'spread': [p.spread for p in report.points]})
    console.print(_summary_table('Convergence', summary))


@cli.command()
@preset_option
@measure_options
@growth_options
@click.option('--M', 'm', type=click.IntRange(min=1), default=None, help='Solve against an M-node lift instead of F')
@click.option('--at-time', type=DURATION, default=None, help='Freeze a scheduled threshold at this time')
@click.option('--h-points', type=click.IntRange(min=2), default=200, show_default=True)
@click.pass_obj
def equilibrium(app: App, m, at_time, h_points, **params):
    """Positive stationary states from the consistency equation H(X) = 1"""
    preset = _preset(params, 'sec3.2')
    measure, spec = _measure(params, preset), _growth(params, preset)
    if at_time is not None:
        spec = spec.at_time(at_time)
    lift = _lift(measure, m) if m is not None else None
    result = macro_ide.solve_equilibrium(measure, spec, lift=lift)

    outputs: List[Path] = []
    if spec.r > 0:
        xs = np.linspace(0.0, 1.0, h_points + 1)[1:]
        h_frame = pd.DataFrame({'X': xs, 'H': macro_ide.h_curve(xs, measure, spec, lift=lift)})
        outputs.append(write_csv(h_frame, app.path('equilibrium_h.csv')))
        app.maybe_plot([Series(label='H(X)', x=xs.tolist(), y=h_frame['H'].tolist()),
                        Series(label='1', x=[0.0, 1.0], y=[1.0, 1.0])],
                       PlotStyle(title='Consistency function', xlabel='X', ylabel='H'), 'equilibrium', outputs)
    if result.profile is not None:
        profile = pd.DataFrame({'R_i': result.rates, 'x_inf': result.profile})
        outputs.append(write_csv(profile, app.path('equilibrium_profile.csv')))
    rec = RunConfig(command='equilibrium', preset=preset.name if preset else None, measure=measure, growth=spec, m=m)
    app.record('equilibrium', rec, outputs, result.model_dump(mode='json', exclude={'profile', 'rates'}))

    if result.extinction_only:
        console.print(Panel.fit('[yellow]Extinction is the only equilibrium[/yellow]'))
        return
    table = Table(title='Positive equilibria')
    table.add_column('X', justify='right')
    table.add_column('Type', style='cyan')
    for root in result.roots:
        table.add_row(f'{root.x:.8f}', root.classification.value)
    console.print(table)


@cli.command()
@preset_option
@shape_options
@growth_options
@sim_options
@click.option('--eta', 'etas', type=click.FloatRange(min=0, min_open=True), multiple=True, help='Abrasion multipliers to classify')
@click.option('--bisect', type=(float, float), default=None, help='Bracket to bisect for the critical eta')
@click.option('--tol', type=click.FloatRange(min=0, min_open=True), default=1e-4, show_default=True)
@click.option('--M', 'm', type=click.IntRange(min=1), default=analysis.TIPPING_NODES, show_default=True)
@click.option('--trajectories', is_flag=True, help='Also write the X_hat series per eta')
@click.pass_obj
def tipping(app: App, etas, bisect, tol, m, trajectories, **params):
    """Extinction or persistence per eta under the macro model"""
    preset = _preset(params, 'sec3.3')
    measure, spec, config = _measure(params, preset), _growth(params, preset), _sim(params, preset)
    etas = list(etas) or (preset.etas if preset else [1.0])

    with _progress() as progress:
        task = progress.add_task(f'Classifying {len(etas)} values of eta...', total=None)
        result = analysis.tipping_sweep(etas, measure, spec, config, m=m, workers=app.workers)
        progress.update(task, completed=True)
    outputs = [write_csv(result.to_frame(), app.path('tipping.csv'))]
    summary = {'threshold': result.threshold, 'sweep_bracket': list(result.bracket) if result.bracket else None}

    if bisect is not None:
        with _progress() as progress:
            task = progress.add_task('Bisecting for the critical eta...', total=None)
            classifier = analysis.macro_classifier(measure, spec, config, m=m)
            lo, hi = analysis.bisect_tipping(bisect[0], bisect[1], tol, classifier)
            progress.update(task, completed=True)
        summary['eta_c'] = [lo, hi]

    if trajectories or app.plot:
        curves = analysis.tipping_trajectories(etas, measure, spec, config, m=m)
        if trajectories:
            outputs.append(write_csv(curves.to_frame(), app.path('tipping_trajectories.csv')))
        t_days = (curves.times / 24.0).tolist()
        series = [Series(label=f'eta={eta:g}', x=t_days, y=xs.tolist()) for eta, xs in curves.series.items()]
        series.append(Series(label='a_t', x=t_days, y=curves.threshold.tolist()))
        app.maybe_plot(series, PlotStyle(title='Rate-induced tipping', xlabel='t (d)', ylabel='X_hat',
                                         ylim=[0.0, 1.0]), 'tipping', outputs)

    rec = RunConfig(command='tipping', preset=preset.name if preset else None, measure=measure, growth=spec,
                    sim=config, m=m, extra={'etas': etas, 'tol': tol})
    app.record('tipping', rec, outputs, summary)

    table = Table(title='Tipping classification')
    table.add_column('eta', justify='right')
    table.add_column('Fate', style='cyan')
    table.add_column('Terminal X_hat', justify='right')
    for point in result.points:
        colour = 'green' if point.fate == analysis.Fate.PERSISTENT else 'red'
        table.add_row(f'{point.eta:g}', f'[{colour}]{point.fate.value}[/{colour}]', f'{point.terminal_x:.6f}')
    console.print(table)
    if 'eta_c' in summary:
        console.print(f"✅ [green]critical eta in [{summary['eta_c'][0]:.6g}, {summary['eta_c'][1]:.6g}][/green]")


@cli.command()
@preset_option
@shape_options
@growth_options
@sim_options
@click.option('--eta', 'etas', type=click.FloatRange(min=0, min_open=True), multiple=True, help='Abrasion multipliers')
@click.option('--M', 'ms', type=click.IntRange(min=1), multiple=True, help='Numbers of sites')
@click.option('--n-paths', type=click.IntRange(min=1), default=None)
@click.option('--bins', type=click.IntRange(min=2), default=analysis.DEFAULT_BINS, show_default=True)
@click.pass_obj
def hist(app: App, etas, ms, n_paths, bins, **params):
    """Histograms of the terminal micro population"""
    preset = _preset(params, 'sec3.3')
    measure, spec, config = _measure(params, preset), _growth(params, preset), _sim(params, preset)
    etas = list(etas) or [0.008]
    ms = list(ms) or [preset.m if preset else 128]
    n_paths = n_paths or (preset.n_paths if preset else 2000)

    outputs: List[Path] = []
    summary = {}
    with _progress() as progress:
        task = progress.add_task('Histograms...', total=len(etas) * len(ms))
        for eta in etas:
            for m in ms:
                h = analysis.histogram_ensemble(eta, m, n_paths, measure, spec, config, n_bins=bins, workers=app.workers)
                name = f'hist_eta{eta:g}_M{m}'
                outputs.append(write_csv(h.to_frame(), app.path(f'{name}.csv')))
                app.maybe_plot([Series(label=f'eta={eta:g}, M={m}', x=h.bin_edges, y=[float(c) for c in h.counts],
                                       kind=PlotKind.BAR)],
                               PlotStyle(title='Terminal population', xlabel='X', ylabel='paths'), name, outputs)
                summary[name] = {'modes': h.modes, 'zero_share': h.zero_share}
                progress.advance(task)

    rec = RunConfig(command='hist', preset=preset.name if preset else None, measure=measure, growth=spec,
                    sim=config, n_paths=n_paths, workers=app.workers, extra={'etas': etas, 'ms': ms, 'bins': bins})
    app.record('hist', rec, outputs, summary)
    table = Table(title=f'Histograms ({n_paths} paths)')
    table.add_column('Run')
    table.add_column('Zero share', justify='right')
    table.add_column('Modes', style='cyan')
    for name, row in summary.items():
        table.add_row(name, f"{row['zero_share']:.3f}", ', '.join(f'{x:.2f}' for x in row['modes']))
    console.print(table)


@cli.command()
@click.option('--input', 'input_path', type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option('--dataset', type=click.Choice(list(FIXTURES)), default=None, help='Shipped covering-ratio table')
@click.pass_obj
def fit(app: App, input_path, dataset):
    """Long-memory and exponential fits of a covering-ratio series"""
    if (input_path is None) == (dataset is None):
        raise click.UsageError('give exactly one of --input or --dataset')
    source = input_path or fixture_path(dataset)
    data = calibrate.load_dataset(source, name=Path(source).name)
    comparison = calibrate.compare_fits(data)
    lm, ex = comparison.long_memory, comparison.exponential

    outputs = [
        write_csv(lm.to_frame(), app.path('fit_long_memory.csv')),
        write_csv(ex.to_frame(), app.path('fit_exponential.csv')),
    ]
    grid = np.linspace(0.0, float(data.times[-1]), 200)
    app.maybe_plot([
        Series(label='observed', x=data.times.tolist(), y=data.average.tolist(), kind=PlotKind.POINTS),
        Series(label='long memory', x=grid.tolist(), y=lm.curve(grid).tolist()),
        Series(label='exponential', x=grid.tolist(), y=ex.curve(grid).tolist()),
    ], PlotStyle(title=f'Decay fits: {data.name}', ylabel='covering ratio'), 'fit', outputs)

    summary = {
        'long_memory': lm.summary(),
        'exponential': ex.summary(),
        'sse_ratio': comparison.sse_ratio,
        'early_residual': comparison.early_residual,
        'late_residual': comparison.late_residual,
    }
    rec = RunConfig(command='fit', input_path=input_path, extra={'dataset': dataset} if dataset else {})
    app.record('fit', rec, outputs, summary)

    table = Table(title=f'Fits of {data.name}')
    table.add_column('Model', style='cyan')
    table.add_column('Parameters')
    table.add_column('SSE', justify='right')
    table.add_row('long memory', f"alpha={lm.params['alpha']:.4f}, beta={lm.params['beta']:.4f}/h", f'{lm.sse:.3e}')
    table.add_row('exponential', f"lambda={ex.params['lambda']:.4f}/h", f'{ex.sse:.3e}')
    console.print(table)
    for warning in lm.warnings + ex.warnings:
        console.print(f'[yellow]{warning}[/yellow]')


@cli.command()
@click.argument('name', required=False, type=click.Choice(list(PRESETS)))
def presets(name):
    """List presets, or dump one as JSON"""
    if name is not None:
        click.echo(PRESETS[name].model_dump_json(indent=2))
        return
    table = Table(title='Presets')
    table.add_column('Name', style='cyan')
    table.add_column('Description')
    for preset in PRESETS.values():
        table.add_row(preset.name, preset.description)
    console.print(table)


def run(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit status instead of exiting."""
    try:
        result = cli.main(args=argv, prog_name='benthic', standalone_mode=False)
    except click.exceptions.Abort:
        console.print('[red]Aborted[/red]')
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    return result if isinstance(result, int) else 0


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()

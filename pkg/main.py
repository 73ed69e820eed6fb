"""
RobustBeam - línea de comandos
Subcomandos: train, eval, compare, plot, latency
Códigos de salida: 0 éxito, 2 uso/configuración, 3 fallo numérico
"""
import argparse
import json
import logging
import os
import sys
from datetime import datetime

import pandas as pd

from config_validator import load_experiment
from errors import ConfigError, NumericalAbort, ScenarioError
from figures import MetricsFormatError, SVGExporter, latency_markdown, read_metrics, write_text
from nets import VARIANTS, load_parameters
from secrecy import Paradigm
from trainer import build_manifest, compare, evaluate, latency_table, measure_latency, train, \
    uncertainty_sweep, write_run, zero_policy
from utils.seeding import monte_carlo_threads
from version import __version__

logger = logging.getLogger('robustbeam')

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    """Argumentos válidos para argparse pero inconsistentes entre sí"""


def _csv_list(raw, cast=str):
    return [cast(x.strip()) for x in raw.split(',') if x.strip()] if raw else []


def _check_variants(variants):
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"variante desconocida: {', '.join(unknown)} (opciones: {', '.join(VARIANTS)})")
    return variants


def _check_paradigm(paradigm):
    try:
        return Paradigm(paradigm).value
    except ValueError:
        raise UsageError(f"paradigma desconocido: {paradigm} (opciones: {', '.join(p.value for p in Paradigm)})")


def _write_manifest(out_dir, experiment, seeds, variants, outputs, started_at):
    manifest = build_manifest(experiment.path, experiment.document, seeds, variants, outputs, started_at)
    path = os.path.join(out_dir, 'manifest.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    return path


# ----------------------------------------------------------------------
# subcomandos
# ----------------------------------------------------------------------
def cli_train(args):
    started_at = datetime.now().isoformat(timespec='seconds')
    experiment = load_experiment(args.config)
    variants = _check_variants([args.variant]) if args.variant else experiment.variants
    paradigms = [_check_paradigm(args.paradigm)] if args.paradigm else experiment.paradigms
    seeds = [args.seed] if args.seed is not None else experiment.seeds
    out_dir = args.out or experiment.run_dir
    threads = monte_carlo_threads()

    combos = [(v, p, s) for v in variants for p in paradigms for s in seeds]
    outputs = []
    exporter = SVGExporter()
    for variant, paradigm, seed in combos:
        run_dir = out_dir if len(combos) == 1 else os.path.join(out_dir, f'{variant}-{paradigm}-s{seed}')
        result = train(experiment.training_for(variant, paradigm, seed), threads=threads)
        paths = write_run(result, run_dir)
        svg = exporter.curves({variant: [result.metrics.to_frame()]},
                              title=f'{variant} / {paradigm} / semilla {seed}')
        paths['curves'] = write_text(os.path.join(run_dir, 'curves.svg'), svg)
        outputs.extend(paths.values())
        logger.info("[TRAIN] %s listo en %s", variant, run_dir)
    _write_manifest(out_dir, experiment, seeds, variants, outputs, started_at)
    return EXIT_OK


def cli_eval(args):
    experiment = load_experiment(args.config)
    paradigm = _check_paradigm(args.paradigm) if args.paradigm else experiment.paradigms[0]
    seed = args.seed if args.seed is not None else experiment.seeds[0]
    config = experiment.training_for(paradigm=paradigm)
    if args.params:
        policy = load_parameters(args.params)
        if policy.variant == 'critic':
            raise UsageError(f"{args.params} contiene un crítico, no un actor")
        config = config.with_variant(policy.variant)
    else:
        policy = zero_policy(config)
    episodes = args.episodes or config.eval_episodes
    out_dir = args.out or experiment.run_dir
    os.makedirs(out_dir, exist_ok=True)
    threads = monte_carlo_threads()

    if args.levels:
        table = uncertainty_sweep(policy, config, _csv_list(args.levels, float), episodes, seed, threads)
        table.to_csv(os.path.join(out_dir, 'sweep.csv'), index=False)
        logger.info("[EVAL] barrido escrito en %s", out_dir)
        return EXIT_OK
    report = evaluate(policy, episodes, config, seed, threads=threads)
    report.to_frame().to_csv(os.path.join(out_dir, 'eval.csv'), index=False)
    with open(os.path.join(out_dir, 'eval_summary.json'), 'w', encoding='utf-8') as f:
        json.dump({'paradigm': paradigm, 'episodes': episodes, 'seed': seed, **report.summary}, f, indent=2)
    label = policy.variant if args.params else 'zero'
    write_text(os.path.join(out_dir, 'box.svg'), SVGExporter().box({label: report.rewards}))
    logger.info("[EVAL] media %.4f, varianza %.4f, min %.4f", report.mean, report.variance, report.minimum)
    return EXIT_OK


def cli_compare(args):
    started_at = datetime.now().isoformat(timespec='seconds')
    experiment = load_experiment(args.config)
    variants = _check_variants(_csv_list(args.variants)) if args.variants else experiment.variants
    if len(variants) < 2:
        raise UsageError("compare requiere al menos 2 variantes")
    paradigm = _check_paradigm(args.paradigm) if args.paradigm else experiment.paradigms[0]
    seeds = _csv_list(args.seeds, int) if args.seeds else experiment.seeds
    configs = [experiment.training_for(variant=v, paradigm=paradigm) for v in variants]
    out_dir = args.out or os.path.join(experiment.run_dir, f'compare-{paradigm}')
    os.makedirs(out_dir, exist_ok=True)

    result = compare(configs, seeds, workers=args.workers)
    table_path = os.path.join(out_dir, 'comparison.csv')
    result.table.to_csv(table_path, index=False)
    exporter = SVGExporter()
    curves_path = write_text(os.path.join(out_dir, 'curves.svg'),
                             exporter.curves(result.curves, title=f'Recompensa de entrenamiento ({paradigm})'))
    groups = {}
    for (label, _), report in result.reports.items():
        groups.setdefault(label, []).extend(report.rewards.tolist())
    box_path = write_text(os.path.join(out_dir, 'box.svg'),
                          exporter.box(groups, title=f'Recompensa de inferencia ({paradigm})'))
    _write_manifest(out_dir, experiment, seeds, variants, [table_path, curves_path, box_path], started_at)
    return EXIT_OK


def _label(path, taken):
    label = os.path.basename(os.path.dirname(os.path.abspath(path))) or os.path.splitext(os.path.basename(path))[0]
    if label in taken:
        label = f'{label}/{os.path.splitext(os.path.basename(path))[0]}'
    return label


def _iter_seconds(path, frame):
    """Segundos por iteración del CSV o del timing.csv vecino"""
    if 'iter_seconds' in frame.columns and frame['iter_seconds'].notna().any():
        return frame['iter_seconds'].dropna()
    timing = os.path.join(os.path.dirname(os.path.abspath(path)), 'timing.csv')
    if not os.path.exists(timing):
        raise MetricsFormatError(path, 1, "sin iter_seconds y sin timing.csv vecino")
    return read_metrics(timing, columns=('epoch', 'iter_seconds'))['iter_seconds']


def cli_plot(args):
    exporter = SVGExporter()
    frames = {}
    columns = {'curves': ('epoch', args.column), 'box': ('reward',), 'latency': ('epoch',)}[args.kind]
    for path in args.metrics:
        frames[_label(path, frames)] = (path, read_metrics(path, columns=columns))

    if args.kind == 'curves':
        output = exporter.curves({label: [frame] for label, (_, frame) in frames.items()}, column=args.column)
    elif args.kind == 'box':
        groups = {}
        for label, (_, frame) in frames.items():
            column = 'eval_reward' if 'eval_reward' in frame.columns else 'reward'
            groups[label] = frame[column].dropna().to_numpy()
        output = exporter.box(groups)
    else:
        rows = []
        for label, (path, frame) in frames.items():
            seconds = _iter_seconds(path, frame)
            rows.append({'variant': label, 'mean_seconds': float(seconds.mean()),
                         'std_seconds': float(seconds.std(ddof=0)), 'overhead_pct': float('nan')})
        table = pd.DataFrame(rows)
        base = table['mean_seconds'].iloc[0]
        table['overhead_pct'] = 100.0 * (table['mean_seconds'] - base) / base
        output = latency_markdown(table)

    if args.out:
        write_text(args.out, output)
    else:
        sys.stdout.write(output)
    return EXIT_OK


def cli_latency(args):
    experiment = load_experiment(args.config)
    variants = _check_variants(_csv_list(args.variants)) if args.variants else experiment.variants
    threads = monte_carlo_threads()
    reports = [measure_latency(experiment.training_for(variant=v), args.iterations, threads=threads)
               for v in variants]
    table = latency_table(reports)
    text = latency_markdown(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        table.to_csv(os.path.join(args.out, 'latency.csv'), index=False)
        write_text(os.path.join(args.out, 'latency.md'), text)
    sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog='robustbeam',
                                     description='Beamforming seguro BS -> UAV con actor-crítico por difusión')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='store_true', help='registro DEBUG')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='entrena según un documento de experimento')
    p.add_argument('--config', required=True)
    p.add_argument('--seed', type=int)
    p.add_argument('--out')
    p.add_argument('--variant')
    p.add_argument('--paradigm')
    p.set_defaults(handler=cli_train)

    p = sub.add_parser('eval', help='recompensa de inferencia de un actor guardado')
    p.add_argument('--config', required=True)
    p.add_argument('--params', help='actor.bin; sin este argumento se evalua el beamformer nulo')
    p.add_argument('--episodes', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--paradigm')
    p.add_argument('--levels', help='múltiplos de incertidumbre, ej. 0,1,2,4')
    p.add_argument('--out')
    p.set_defaults(handler=cli_eval)

    p = sub.add_parser('compare', help='comparación pareada de variantes')
    p.add_argument('--config', required=True)
    p.add_argument('--variants')
    p.add_argument('--paradigm')
    p.add_argument('--seeds')
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--out')
    p.set_defaults(handler=cli_compare)

    p = sub.add_parser('plot', help='figuras a partir de CSV de métricas')
    p.add_argument('--metrics', nargs='+', required=True)
    p.add_argument('--kind', choices=('curves', 'box', 'latency'), required=True)
    p.add_argument('--column', default='reward')
    p.add_argument('--out')
    p.set_defaults(handler=cli_plot)

    p = sub.add_parser('latency', help='segundos por iteración de entrenamiento')
    p.add_argument('--config', required=True)
    p.add_argument('--variants')
    p.add_argument('--iterations', type=int, default=20)
    p.add_argument('--out')
    p.set_defaults(handler=cli_latency)
    return parser


def setup_logging(verbose=False):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format='%(message)s', force=True)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error("[CONFIG ERROR] %s", e)
        return EXIT_USAGE
    except MetricsFormatError as e:
        logger.error("[PLOT ERROR] %s", e)
        return EXIT_USAGE
    except NumericalAbort as e:
        logger.error("[ABORT] %s", e)
        return EXIT_NUMERICAL
    except (UsageError, ScenarioError, ValueError) as e:
        logger.error("[ERROR] %s", e)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())

"""Command-line front-end for the experiments.

Usage:
  python main.py stream        [--config config.yaml] [--seed 0 1 2] [--out results] [--workers 4]
  python main.py denoise       [--dataset-path data/train-images-idx3-ubyte.gz]
  python main.py encoder-bench
  python main.py gd-vs-ftl
  python main.py dyna          [--manifest results/dyna/manifest.json]
  python main.py plot results/dyna/metrics --out curves.svg [--timing-dir results/dyna/timing]

Each experiment verb writes <out>/<experiment>/manifest.json plus its CSV
reports; `plot` renders mean ± standard-error curves from metrics CSVs.
Exit status: 0 on success, 2 on configuration/data errors.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from typing import List, Optional

from backend.api.config import DEFAULT_CONFIG_PATH, ExperimentConfig, resolve_config
from backend.core.errors import LosseError
from backend.core.identifiers import build_run_directories
from backend.storage.manifest import load_manifest, write_manifest

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', default=DEFAULT_CONFIG_PATH, help='YAML config file')
    parser.add_argument('--manifest', default=None, help='re-run exactly from a manifest.json (or its directory)')
    parser.add_argument('--seed', type=int, nargs='+', default=None, help='seed list (overrides the config)')
    parser.add_argument('--out', default=None, help='output root directory')
    parser.add_argument('--workers', type=int, default=None, help='parallel workers (default: all cores)')
    parser.add_argument('--dataset-path', default=None, help='IDX image file for the denoising task')
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='losse', description='Online world-model learning experiments.')
    sub = parser.add_subparsers(dest='command', required=True)
    for verb, help_text in (
        ('stream', 'piecewise random walk stream learning'),
        ('denoise', 'image denoising encoder comparison'),
        ('encoder-bench', 'encoder hyperparameter sweep on the denoising task'),
        ('gd-vs-ftl', 'FTL versus mini-batch gradient descent across lambda'),
        ('dyna', 'Dyna versus model-free control'),
    ):
        _add_common(sub.add_parser(verb, help=help_text))

    plot = sub.add_parser('plot', help='render learning curves from metrics CSVs')
    plot.add_argument('inputs', nargs='+', help='metrics CSV files or directories containing them')
    plot.add_argument('--out', required=True, help='output SVG path')
    plot.add_argument('--column', default='normalized_return')
    plot.add_argument('--title', default=None)
    plot.add_argument('--timing-dir', default=None, help='also emit the wall-clock series from this timing directory')
    plot.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return parser


def _expand_inputs(inputs: List[str]) -> List[str]:
    paths: List[str] = []
    for item in inputs:
        if os.path.isdir(item):
            paths.extend(sorted(glob.glob(os.path.join(item, '*.csv'))))
        else:
            paths.append(item)
    return paths


def run_experiment(cfg: ExperimentConfig):
    """Dispatch one resolved config; writes the manifest first, returns the report frame."""
    run_dir, _, _ = build_run_directories(cfg.output_dir, cfg.kind)
    write_manifest(run_dir, cfg.kind, cfg.reproducible_dump(), cfg.seeds)
    seeds = list(cfg.seeds)
    logger.info(f"Starting {cfg.kind} with seeds {seeds} -> {run_dir}")

    if cfg.kind == 'stream':
        from backend.experiments.stream import run_stream
        return run_stream(cfg.stream, seeds, run_dir, workers=cfg.workers)
    if cfg.kind == 'gd-vs-ftl':
        from backend.experiments.gd_vs_ftl import run_gd_vs_ftl
        return run_gd_vs_ftl(cfg.gd_vs_ftl, seeds, run_dir, workers=cfg.workers)
    if cfg.kind == 'denoise':
        from backend.experiments.denoise import run_denoise
        return run_denoise(cfg.denoise, seeds, run_dir, dataset_path=cfg.dataset_path, workers=cfg.workers)
    if cfg.kind == 'encoder-bench':
        from backend.experiments.denoise import run_encoder_bench
        return run_encoder_bench(cfg.denoise, cfg.encoder_bench, seeds, run_dir,
                                 dataset_path=cfg.dataset_path, workers=cfg.workers)
    from backend.experiments.dyna_runner import run_dyna_experiment
    return run_dyna_experiment(cfg.dyna, seeds, cfg.output_dir, workers=cfg.workers)


def _run_plot(args) -> None:
    from backend.storage.metrics_sink import write_report
    from backend.storage.plotting import plot_learning_curves, plot_wall_clock, wall_clock_series

    paths = _expand_inputs(args.inputs)
    if not paths:
        raise FileNotFoundError(f"no metrics CSVs found in {args.inputs}")
    plot_learning_curves(paths, args.out, column=args.column, title=args.title)
    if args.timing_dir:
        series = wall_clock_series(paths, args.timing_dir)
        stem = os.path.splitext(args.out)[0]
        write_report(series, f"{stem}_wall_clock.csv")
        plot_wall_clock(series, f"{stem}_wall_clock.svg", title=args.title)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        if args.command == 'plot':
            _run_plot(args)
            return 0
        manifest = load_manifest(args.manifest) if args.manifest else None
        cfg = resolve_config(args.command, args.config, overrides={
            'seeds': args.seed,
            'output_dir': args.out,
            'workers': args.workers,
            'dataset_path': args.dataset_path,
        }, manifest=manifest)
        report = run_experiment(cfg)
        print(report.to_string(index=False))
        return 0
    except (LosseError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 2


if __name__ == '__main__':
    sys.exit(main())

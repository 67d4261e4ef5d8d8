"""Full-size verification harness for the learner, encoder and experiment claims.

Usage:
  python scripts/verify_claims.py                       # every check at full size
  python scripts/verify_claims.py --only 1 2 3 4 8 9    # fast numerical checks
  python scripts/verify_claims.py --quick               # reduced sizes for a smoke run
  python scripts/verify_claims.py --dataset-path data/train-images-idx3-ubyte.gz --out results/verify

Checks:
  1  soft binning reproduces the printed 4-edge example
  2  Losse sparsity bounds over 10^4 random inputs (κ=30, ρ=2, λ=10)
  3  dense FTL equals the batch normal-equation solve after every step
  4  block optimality residual after every sparse update
  5  sparse weights stay within 5% of the global ridge oracle on the PRW stream
  6  covariate-shift robustness of Losse-FTL; SGD error grows with d
  7  denoising MSE spot-check and encoder ordering at patch side 5
  8  regret grows sublinearly on a stationary linear-Gaussian stream
  9  per-update wall time does not grow with the number of samples
  10 Dyna beats model-free on Gridworld; model error map mostly below δ
  11 re-running from the same manifest reproduces CSVs byte-for-byte

Outputs a JSON report (one entry per check with `passed` and the measured values).
"""
from __future__ import annotations

import argparse
import filecmp
import json
import logging
import math
import os
import sys
import tempfile
import time
from typing import Any, Callable, Dict, List

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from backend.api.cli import run_experiment  # noqa: E402
from backend.api.config import resolve_config  # noqa: E402
from backend.core.encoding import BinMode, build_losse, soft_bin_axis  # noqa: E402
from backend.core.learner import FtlLearner  # noqa: E402
from backend.environments.denoise import IDX_IMAGES_MAGIC  # noqa: E402
from backend.experiments.denoise import DenoiseExperimentConfig, run_denoise  # noqa: E402
from backend.experiments.dyna_runner import DynaExperimentConfig, run_dyna_experiment  # noqa: E402
from backend.experiments.stream import StreamConfig, run_stream, run_stream_single  # noqa: E402
from backend.storage.manifest import load_manifest  # noqa: E402

logger = logging.getLogger(__name__)


def check_soft_bin(args) -> Dict[str, Any]:
    left, lv, rv = soft_bin_axis(1.7, 4, (0.0, 3.0), BinMode.DISTANCE)
    vec = np.zeros(4)
    vec[left], vec[left + 1] = lv, rv
    expected = np.array([0.0, 0.7, 0.3, 0.0])
    return {'vector': vec.tolist(), 'passed': bool(np.allclose(vec, expected, rtol=0, atol=1e-12))}


def check_sparsity(args) -> Dict[str, Any]:
    enc = build_losse({'input_dim': 6, 'kappa': 30, 'rho': 2, 'lambda': 10, 'seed': 0})
    rng = np.random.default_rng(1)
    xs = np.clip(rng.normal(0.0, 1.5, size=(args.scale(10_000), 6)), -3, 3)
    nnz = np.array([enc.encode(x).nnz for x in xs])
    ratio = nnz.max() / enc.output_dim
    return {'D': enc.output_dim, 'max_nnz': int(nnz.max()), 'max_ratio': float(ratio),
            'passed': bool(enc.output_dim == 3000 and nnz.max() <= 120 and ratio <= 0.04)}


def check_dense_oracle(args) -> Dict[str, Any]:
    D, S, steps = 32, 4, args.scale(2_000)
    rng = np.random.default_rng(2)
    learner = FtlLearner(D, S, storage='dense')
    A = np.zeros((D, D))
    B = np.zeros((D, S))
    worst = 0.0
    for _ in range(steps):
        phi, y = rng.normal(size=D), rng.normal(size=S)
        learner.observe_dense(phi, y)
        A += np.outer(phi, phi)
        B += np.outer(phi, y)
        oracle = np.linalg.solve(A + learner.epsilon * np.eye(D), B)
        worst = max(worst, float(np.linalg.norm(learner.W - oracle) / max(np.linalg.norm(oracle), 1e-300)))
    return {'steps': steps, 'max_relative_error': worst, 'passed': worst <= 1e-8}


def check_block_optimality(args) -> Dict[str, Any]:
    enc = build_losse({'input_dim': 3, 'kappa': 10, 'rho': 2, 'lambda': 10, 'seed': 3})
    learner = FtlLearner(enc.output_dim, 2)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(args.scale(10_000)):
        x = np.clip(rng.normal(0.0, 1.5, size=3), -3, 3)
        phi = enc.encode(x)
        learner.observe_sparse(phi, [math.sin(x[0]), x[1] * x[2]])
        scale = max(1.0, float(np.linalg.norm(learner.B[phi.indices])))
        worst = max(worst, learner.block_residual(phi.indices) / scale)
    return {'max_scaled_residual': worst, 'passed': worst <= 1e-8}


def check_proximity(args) -> Dict[str, Any]:
    cfg = StreamConfig(stream_length=args.scale(20_000), proximity_interval=500, refresh_interval=500,
                       include_sgd=False)
    worst, drift, rows = 0.0, 0.0, 0
    for d in cfg.d_grid:
        result = run_stream_single(cfg, d, seed=0, methods=('losse_ftl',))
        for row in result['proximity']:
            worst = max(worst, row['relative_error'])
            drift = max(drift, row['refresh_drift'])
            rows += 1
    return {'checkpoints': rows, 'max_relative_error': worst, 'max_refresh_drift': drift, 'passed': worst <= 0.05}


def check_covariate_shift(args) -> Dict[str, Any]:
    cfg = StreamConfig(stream_length=args.scale(20_000))
    report = run_stream(cfg, list(range(args.seeds)), os.path.join(args.out, 'stream'), workers=args.workers)
    ftl = report[report['method'] == 'losse_ftl'].set_index('d')['mse_mean']
    sgd = report[report['method'] == 'sgd'].set_index('d')['mse_mean']
    sgd_values = [float(sgd[d]) for d in cfg.d_grid]
    increasing = all(b > a for a, b in zip(sgd_values, sgd_values[1:]))
    ftl_ok = float(ftl[0.98]) <= 2.0 * float(ftl[0.0])
    return {'ftl_mse': {str(k): float(v) for k, v in ftl.items()}, 'sgd_mse': sgd_values,
            'passed': bool(ftl_ok and increasing)}


def check_denoise(args) -> Dict[str, Any]:
    real = bool(args.dataset_path and os.path.exists(args.dataset_path))
    cfg = DenoiseExperimentConfig(patch_sides=[3, 4, 5], allow_synthetic=True,
                                  max_images=args.scale(60_000) if real else args.scale(10_000))
    report = run_denoise(cfg, list(range(min(args.seeds, 5))), os.path.join(args.out, 'denoise'),
                         dataset_path=args.dataset_path, workers=args.workers)
    at25 = report[report['patch_side'] == 5].set_index('encoder')['mse_mean']
    ordering = bool(at25['losse'] < at25['relu'] < at25['tile_code'] < at25['fourier'])
    result: Dict[str, Any] = {'real_corpus': real, 'idx_magic': f"0x{IDX_IMAGES_MAGIC:08x}",
                              'mse_at_patch_25': {k: float(v) for k, v in at25.items()}, 'ordering': ordering}
    if real:
        losse = report[report['encoder'] == 'losse'].set_index('patch_side')['mse_mean']
        targets = {3: 0.028, 4: 0.029, 5: 0.031}
        result['losse_mse'] = {str(p): float(losse[p]) for p in targets}
        result['passed'] = ordering and all(abs(float(losse[p]) - t) <= 0.007 for p, t in targets.items())
    else:
        result['passed'] = ordering
    return result


def _regret_at(X: np.ndarray, Y: np.ndarray, losses: np.ndarray, T: int, eps: float) -> float:
    Xt, Yt = X[:T], Y[:T]
    W = np.linalg.solve(Xt.T @ Xt + eps * np.eye(X.shape[1]), Xt.T @ Yt)
    return float(losses[:T].sum() - np.sum((Xt @ W - Yt) ** 2))


def check_regret(args) -> Dict[str, Any]:
    horizons = [args.scale(1_000), args.scale(10_000), args.scale(100_000)]
    D, S = 10, 1
    rng = np.random.default_rng(8)
    w_true = rng.normal(size=(D, S))
    X = rng.normal(size=(horizons[-1], D))
    Y = X @ w_true + 0.1 * rng.normal(size=(horizons[-1], S))
    learner = FtlLearner(D, S, storage='dense')
    losses = np.empty(horizons[-1])
    for t in range(horizons[-1]):
        losses[t] = float(np.sum((learner.predict(X[t]) - Y[t]) ** 2))
        learner.observe_dense(X[t], Y[t])
    regrets = [_regret_at(X, Y, losses, T, learner.epsilon) for T in horizons]
    per_step = [r / T for r, T in zip(regrets, horizons)]
    ratios = [b / a for a, b in zip(regrets, regrets[1:]) if a > 0]
    passed = all(b < a for a, b in zip(per_step, per_step[1:])) and all(r <= 3.0 for r in ratios)
    return {'horizons': horizons, 'regret': regrets, 'regret_per_step': per_step, 'growth_ratios': ratios,
            'passed': bool(passed)}


def check_constant_time(args) -> Dict[str, Any]:
    enc = build_losse({'input_dim': 6, 'kappa': 30, 'rho': 2, 'lambda': 10, 'seed': 9})
    learner = FtlLearner(enc.output_dim, 2)
    rng = np.random.default_rng(9)
    early = (args.scale(1_000), args.scale(2_000))
    late = (args.scale(100_000), args.scale(100_000) + args.scale(1_000))
    timings: Dict[str, List[float]] = {'early': [], 'late': []}
    for t in range(late[1]):
        phi = enc.encode(np.clip(rng.normal(0.0, 1.5, size=6), -3, 3))
        y = rng.normal(size=2)
        start = time.perf_counter()
        learner.observe_sparse(phi, y)
        spent = time.perf_counter() - start
        if early[0] <= t < early[1]:
            timings['early'].append(spent)
        elif late[0] <= t < late[1]:
            timings['late'].append(spent)
    ratio = float(np.mean(timings['late']) / np.mean(timings['early']))
    return {'early_mean_s': float(np.mean(timings['early'])), 'late_mean_s': float(np.mean(timings['late'])),
            'ratio': ratio, 'passed': ratio <= 2.0}


def check_dyna(args) -> Dict[str, Any]:
    # 10k interactions, arms compared on return-curve area
    cfg = DynaExperimentConfig(env='gridworld', epochs=max(1, args.scale(100)))
    report = run_dyna_experiment(cfg, list(range(args.seeds)), os.path.join(args.out, 'dyna_check'),
                                 workers=args.workers).set_index('arm')
    auc_gap = float(report.loc['dyna', 'auc_mean'] - report.loc['model_free', 'auc_mean'])
    return_gap = float(report.loc['dyna', 'return_mean'] - report.loc['model_free', 'return_mean'])
    error_fraction = float(report.loc['dyna', 'error_fraction_mean'])
    return {'auc_gap': auc_gap, 'return_gap': return_gap, 'dyna_error_fraction': error_fraction,
            'passed': bool(auc_gap >= 0.1 and error_fraction < 0.1)}


def _small_overrides(kind: str) -> Dict[str, Any]:
    if kind == 'stream':
        return {'stream': {'stream_length': 2_000, 'd_grid': [0.0, 0.9], 'proximity_interval': 500}}
    return {'dyna': {'epochs': 10, 'planning_steps': 20, 'error_eval_every': 5, 'grid_resolution': 10}}


def check_determinism(args) -> Dict[str, Any]:
    outcomes = {}
    for kind in ('stream', 'dyna'):
        first_root = tempfile.mkdtemp(prefix='verify_a_')
        second_root = tempfile.mkdtemp(prefix='verify_b_')
        cfg = resolve_config(kind, None, overrides={'seeds': [0, 1], 'output_dir': first_root,
                                                    'workers': args.workers, **_small_overrides(kind)})
        run_experiment(cfg)
        manifest = load_manifest(os.path.join(first_root, kind))
        rerun = resolve_config(kind, None, overrides={'output_dir': second_root, 'workers': 1}, manifest=manifest)
        run_experiment(rerun)
        compared = []
        for sub in ('', 'metrics', 'error_maps'):
            a_dir, b_dir = os.path.join(first_root, kind, sub), os.path.join(second_root, kind, sub)
            if not os.path.isdir(a_dir):
                continue
            names = sorted(n for n in os.listdir(a_dir) if n.endswith(('.csv', '.json', '.svg')))
            match, mismatch, errors = filecmp.cmpfiles(a_dir, b_dir, names, shallow=False)
            compared.append({'dir': sub or '.', 'match': match, 'mismatch': mismatch + errors})
        outcomes[kind] = compared
    passed = all(not c['mismatch'] for groups in outcomes.values() for c in groups)
    return {'compared': outcomes, 'passed': passed}


CHECKS: Dict[int, Callable[[Any], Dict[str, Any]]] = {
    1: check_soft_bin,
    2: check_sparsity,
    3: check_dense_oracle,
    4: check_block_optimality,
    5: check_proximity,
    6: check_covariate_shift,
    7: check_denoise,
    8: check_regret,
    9: check_constant_time,
    10: check_dyna,
    11: check_determinism,
}


def main():
    parser = argparse.ArgumentParser(description="Verify the encoder, learner and experiment claims at full size.")
    parser.add_argument('--only', type=int, nargs='+', default=sorted(CHECKS))
    parser.add_argument('--seeds', type=int, default=30)
    parser.add_argument('--workers', type=int, default=None)
    parser.add_argument('--out', default='results/verify')
    parser.add_argument('--dataset-path', default=os.getenv('LOSSE_DATASET_PATH'))
    parser.add_argument('--quick', action='store_true', help='divide every size by 10 and use 3 seeds')
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

    factor = 0.1 if args.quick else 1.0
    args.scale = lambda n: max(1, int(n * factor))
    if args.quick:
        args.seeds = min(args.seeds, 3)

    report: Dict[str, Any] = {}
    for number in args.only:
        start = time.perf_counter()
        try:
            result = CHECKS[number](args)
        except Exception as e:  # a failing check must not hide the others
            logger.exception(f"check {number} raised")
            result = {'passed': False, 'error': f"{type(e).__name__}: {e}"}
        result['seconds'] = round(time.perf_counter() - start, 2)
        report[str(number)] = result
        logger.info(f"check {number}: {'PASS' if result['passed'] else 'FAIL'}")
    report['all_passed'] = all(r['passed'] for r in report.values() if isinstance(r, dict))
    print(json.dumps(report, indent=2, default=float))
    return 0 if report['all_passed'] else 1


if __name__ == '__main__':
    sys.exit(main())

import io
import os
import sys
import unittest

import numpy as np
import scipy.sparse as sp

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

from backend.core.dense_head import AdamLinearHead
from backend.core.encoding import SparseVector, build_losse, clamp_input
from backend.core.errors import NonFiniteError, ShapeError, SolverError
from backend.core.learner import (
    DENSE_STORAGE_LIMIT,
    FtlLearner,
    RegretLedger,
    SgdLearner,
    record_and_regret,
    solve_batch_oracle,
)
from backend.environments.prw import PrwConfig, PrwStream


def _sparse_stream(n, seed=0):
    enc = build_losse({"input_dim": 2, "kappa": 3, "rho": 2, "lambda": 5, "seed": seed})
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-2.5, 2.5, size=(n, 2))
    ys = np.sin(xs[:, :1]) + 0.5 * xs[:, 1:]
    return enc, [(enc.encode(x), y) for x, y in zip(xs, ys)]


def _prw_stream(n, d, seed=0):
    enc = build_losse({"input_dim": 1, "kappa": 10, "rho": 2, "lambda": 10, "seed": seed})
    bound = enc.config.input_bound
    xs, ys = PrwStream(PrwConfig(d=d, seed=seed)).take(n)
    return enc, [(enc.encode(clamp_input([x * bound], bound)), [y]) for x, y in zip(xs.tolist(), ys.tolist())]


def _relative_error(learner):
    oracle = learner.oracle_weights()
    return float(np.linalg.norm(learner.W - oracle) / np.linalg.norm(oracle))


class TestFtlDense(unittest.TestCase):
    def test_matches_batch_oracle_after_every_step(self):
        rng = np.random.default_rng(3)
        learner = FtlLearner(6, 2, epsilon=1e-3, storage="dense")
        samples = []
        for _ in range(25):
            phi = rng.normal(size=6)
            y = rng.normal(size=2)
            learner.observe_dense(phi, y)
            samples.append((phi, y))
            oracle = solve_batch_oracle(samples, epsilon=1e-3)
            np.testing.assert_allclose(learner.W, oracle, rtol=1e-9, atol=1e-10)
        self.assertEqual(learner.steps_seen, 25)

    def test_singular_system_without_ridge(self):
        learner = FtlLearner(3, 1, epsilon=0.0)
        with self.assertRaises(SolverError):
            learner.observe_dense([1.0, 0.0, 0.0], [1.0])

    def test_dense_update_needs_dense_storage(self):
        learner = FtlLearner(3, 1, storage="rows")
        with self.assertRaises(SolverError):
            learner.observe_dense([1.0, 0.0, 0.0], [1.0])

    def test_input_validation(self):
        learner = FtlLearner(3, 1)
        with self.assertRaises(ShapeError):
            learner.observe_dense([1.0, 0.0], [1.0])
        with self.assertRaises(ShapeError):
            learner.observe_dense([1.0, 0.0, 0.0], [1.0, 2.0])
        with self.assertRaises(NonFiniteError):
            learner.observe_dense([1.0, 0.0, 0.0], [float('nan')])
        with self.assertRaises(ShapeError):
            learner.predict(SparseVector.from_dense([1.0, 0.0]))
        with self.assertRaises(ShapeError):
            FtlLearner(0, 1)

    def test_duplicated_dataset_halves_the_ridge(self):
        rng = np.random.default_rng(5)
        samples = [(rng.normal(size=6), rng.normal(size=2)) for _ in range(25)]
        twice = FtlLearner(6, 2, epsilon=1e-2)
        once = FtlLearner(6, 2, epsilon=5e-3)
        for phi, y in samples:
            twice.observe_dense(phi, y)
            twice.observe_dense(phi, y)
            once.observe_dense(phi, y)
        np.testing.assert_allclose(twice.A, 2.0 * once.A)
        np.testing.assert_allclose(twice.B, 2.0 * once.B)
        np.testing.assert_allclose(twice.W, once.W, rtol=1e-8, atol=1e-10)

    def test_large_ridge_drives_weights_to_zero(self):
        rng = np.random.default_rng(6)
        learner = FtlLearner(4, 1, epsilon=1e12)
        for _ in range(20):
            learner.observe_dense(rng.normal(size=4), rng.normal(size=1))
        self.assertLess(float(np.abs(learner.W).max()), 1e-9)

    def test_storage_switches_above_dense_limit(self):
        self.assertEqual(DENSE_STORAGE_LIMIT, 8192)
        self.assertEqual(FtlLearner(8192, 1).storage, "dense")
        self.assertEqual(FtlLearner(8193, 1).storage, "rows")


class TestFtlSparse(unittest.TestCase):
    def test_first_step_equals_global_solution(self):
        enc, stream = _sparse_stream(1)
        learner = FtlLearner(enc.output_dim, 1, epsilon=1e-3)
        phi, y = stream[0]
        learner.observe_sparse(phi, y)
        np.testing.assert_allclose(learner.W, learner.oracle_weights(), atol=1e-9)

    def test_block_is_optimal_after_each_update(self):
        enc, stream = _sparse_stream(60)
        learner = FtlLearner(enc.output_dim, 1, epsilon=1e-2)
        for phi, y in stream:
            learner.observe_sparse(phi, y)
            self.assertLess(learner.block_residual(phi.indices), 1e-8)

    def test_full_support_matches_dense_update(self):
        rng = np.random.default_rng(8)
        sparse = FtlLearner(5, 1, epsilon=1e-3)
        dense = FtlLearner(5, 1, epsilon=1e-3)
        for _ in range(15):
            phi = rng.uniform(0.5, 1.5, size=5)
            y = rng.normal(size=1)
            sparse.observe_sparse(SparseVector.from_dense(phi), y)
            dense.observe_dense(phi, y)
        np.testing.assert_allclose(sparse.W, dense.W, rtol=1e-8, atol=1e-10)

    def test_row_storage_matches_dense_storage(self):
        enc, stream = _sparse_stream(80, seed=2)
        dense = FtlLearner(enc.output_dim, 1, epsilon=1e-2, storage="dense")
        rows = FtlLearner(enc.output_dim, 1, epsilon=1e-2, storage="rows")
        for phi, y in stream:
            dense.observe_sparse(phi, y)
            rows.observe_sparse(phi, y)
        np.testing.assert_allclose(rows.W, dense.W, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(rows.A, dense.A)

    def test_prediction_uses_only_support(self):
        enc, stream = _sparse_stream(30)
        learner = FtlLearner(enc.output_dim, 1)
        for phi, y in stream:
            learner.observe_sparse(phi, y)
        phi = stream[0][0]
        np.testing.assert_allclose(learner.predict(phi), learner.W.T @ phi.to_dense())

    def test_empty_support_is_skipped(self):
        learner = FtlLearner(4, 1)
        empty = SparseVector(dim=4, indices=np.array([], dtype=np.int64), values=np.array([]))
        with self.assertLogs('backend.core.learner', level='WARNING'):
            learner.observe_sparse(empty, [1.0])
        self.assertEqual(learner.steps_seen, 0)

    def test_snapshot_round_trip(self):
        enc, stream = _sparse_stream(20)
        for storage in ("dense", "rows"):
            learner = FtlLearner(enc.output_dim, 1, storage=storage)
            for phi, y in stream:
                learner.observe_sparse(phi, y)
            buffer = io.BytesIO()
            learner.to_snapshot(buffer, config_hash="abc")
            buffer.seek(0)
            restored = FtlLearner.from_snapshot(buffer)
            self.assertEqual(restored.storage, storage)
            self.assertEqual(restored.steps_seen, 20)
            self.assertEqual(restored.snapshot_config_hash, "abc")
            np.testing.assert_array_equal(restored.W, learner.W)
            np.testing.assert_array_equal(restored.A, learner.A)
            np.testing.assert_array_equal(restored.B, learner.B)

    def test_memories_match_recomputation_from_sample_log(self):
        enc, stream = _sparse_stream(50, seed=6)
        for storage in ("dense", "rows"):
            learner = FtlLearner(enc.output_dim, 1, epsilon=1e-2, storage=storage)
            for phi, y in stream:
                learner.observe_sparse(phi, y)
            A = sum(np.outer(phi.to_dense(), phi.to_dense()) for phi, _ in stream)
            B = sum(np.outer(phi.to_dense(), y) for phi, y in stream)
            np.testing.assert_allclose(learner.A, A, atol=1e-12)
            np.testing.assert_allclose(learner.B, B, atol=1e-12)

    def test_row_storage_is_scipy_sparse(self):
        enc, stream = _sparse_stream(10, seed=1)
        learner = FtlLearner(enc.output_dim, 1, storage="rows")
        for phi, y in stream:
            learner.observe_sparse(phi, y)
        self.assertTrue(sp.issparse(learner._A))

    def test_refresh_matches_oracle(self):
        enc, stream = _sparse_stream(120, seed=3)
        for storage in ("dense", "rows"):
            learner = FtlLearner(enc.output_dim, 1, epsilon=1e-2, storage=storage)
            for phi, y in stream:
                learner.observe_sparse(phi, y)
            drift = learner.refresh()
            self.assertGreaterEqual(drift, 0.0)
            self.assertEqual(learner.last_refresh_drift, drift)
            np.testing.assert_allclose(learner.W, learner.oracle_weights(), rtol=1e-7, atol=1e-9)
            self.assertLess(learner.refresh(), 1e-12)

    def test_refresh_interval_keeps_correlated_stream_near_oracle(self):
        enc, stream = _prw_stream(1000, d=0.9)
        learner = FtlLearner(enc.output_dim, 1, refresh_interval=100)
        for t, (phi, y) in enumerate(stream, start=1):
            learner.observe_sparse(phi, y)
            self.assertLess(learner.block_residual(phi.indices), 1e-6 * max(1.0, np.linalg.norm(learner.B)))
            if t % 100 == 0:
                self.assertLessEqual(_relative_error(learner), 0.05, f"step {t}")
        self.assertEqual(learner.refresh_count, 10)

    def test_refresh_on_empty_learner_is_a_no_op(self):
        learner = FtlLearner(5, 1)
        self.assertEqual(learner.refresh(), 0.0)
        self.assertEqual(learner.refresh_count, 0)

    def test_rejects_bad_refresh_interval(self):
        with self.assertRaises(ValueError):
            FtlLearner(5, 1, refresh_interval=0)


class TestRegret(unittest.TestCase):
    def test_ledger_matches_manual_accounting(self):
        enc, stream = _sparse_stream(40, seed=4)
        learner = FtlLearner(enc.output_dim, 1, epsilon=1e-3)
        ledger = RegretLedger()
        first_phi, first_y = stream[0]
        self.assertAlmostEqual(ledger.record(learner, first_phi, first_y), float(first_y[0] ** 2))
        learner.observe_sparse(first_phi, first_y)
        for phi, y in stream[1:-1]:
            cumulative = record_and_regret(ledger, learner, phi, y)
            self.assertAlmostEqual(cumulative, sum(ledger.per_step_losses))
        regret = record_and_regret(ledger, learner, *stream[-1], final=True)

        W = solve_batch_oracle(stream, epsilon=1e-3)
        hindsight = sum(float(np.sum((phi.values @ W[phi.indices] - y) ** 2)) for phi, y in stream)
        self.assertAlmostEqual(regret, ledger.cumulative_loss - hindsight, places=9)
        self.assertEqual(len(ledger.per_step_losses), 40)

    def test_regret_needs_samples(self):
        with self.assertRaises(ValueError):
            RegretLedger().regret()

    def test_regret_grows_sublinearly(self):
        rng = np.random.default_rng(11)
        w = rng.normal(0.0, 2.0, size=4)
        learner = FtlLearner(4, 1, epsilon=1e-3)
        ledger = RegretLedger()
        checkpoints = {}
        for t in range(1, 3201):
            phi = rng.normal(size=4)
            y = [float(phi @ w + rng.normal())]
            record_and_regret(ledger, learner, phi, y)
            if t in (200, 3200):
                checkpoints[t] = ledger.regret(epsilon=1e-3)
        self.assertGreater(checkpoints[200], 0.0)
        self.assertLess(checkpoints[3200] / 3200, checkpoints[200] / 200)


class TestSgdLearner(unittest.TestCase):
    def test_dense_step(self):
        learner = SgdLearner(2, 1, learning_rate=0.1)
        learner.step([1.0, 0.0], [1.0])
        np.testing.assert_allclose(learner.W[:, 0], [0.2, 0.0])

    def test_sparse_step_touches_support(self):
        learner = SgdLearner(3, 1, learning_rate=0.1)
        learner.step(SparseVector(dim=3, indices=np.array([1]), values=np.array([2.0])), [1.0])
        np.testing.assert_allclose(learner.W[:, 0], [0.0, 0.4, 0.0])

    def test_mini_batch_waits_for_full_batch(self):
        learner = SgdLearner(2, 1, learning_rate=0.1, batch=2)
        learner.step([1.0, 0.0], [1.0])
        np.testing.assert_array_equal(learner.W, np.zeros((2, 1)))
        learner.step([0.0, 1.0], [1.0])
        np.testing.assert_allclose(learner.W[:, 0], [0.1, 0.1])

    def test_rejects_negative_rate(self):
        with self.assertRaises(ValueError):
            SgdLearner(2, 1, learning_rate=-1.0)

    def test_converges_on_a_fixed_sample(self):
        learner = SgdLearner(2, 1, learning_rate=0.1)
        for _ in range(100):
            learner.step([1.0, 0.5], [2.0])
        self.assertAlmostEqual(float(learner.predict([1.0, 0.5])[0]), 2.0, places=8)

    def test_segment_sized_batch(self):
        learner = SgdLearner(3, 1, learning_rate=0.1, batch=50)
        phi = SparseVector(dim=3, indices=np.array([1]), values=np.array([1.0]))
        for _ in range(49):
            learner.step(phi, [1.0])
        np.testing.assert_array_equal(learner.W, np.zeros((3, 1)))
        learner.step(phi, [1.0])
        # mean gradient over 50 identical samples: 2 * (0 - 1) on row 1
        np.testing.assert_allclose(learner.W[:, 0], [0.0, 0.2, 0.0])


class TestAdamLinearHead(unittest.TestCase):
    def test_fit_reduces_training_error(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 3))
        Y = X @ np.array([[1.0], [-2.0], [0.5]])
        head = AdamLinearHead(3, 1, learning_rate=0.05, batch_size=16, epochs=30, seed=1).fit(X, Y)
        self.assertEqual(len(head.history), 30)
        self.assertLess(head.history[-1], 0.1 * head.history[0])
        self.assertEqual(head.predict(X[:4]).shape, (4, 1))

    def test_same_seed_same_weights(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 4))
        Y = rng.normal(size=(50, 2))
        a = AdamLinearHead(4, 2, learning_rate=0.01, epochs=3, seed=7).fit(X, Y)
        b = AdamLinearHead(4, 2, learning_rate=0.01, epochs=3, seed=7).fit(X, Y)
        np.testing.assert_array_equal(a.predict(X), b.predict(X))

    def test_shape_errors(self):
        head = AdamLinearHead(3, 1)
        with self.assertRaises(ShapeError):
            head.fit(np.ones((4, 2)), np.ones(4))
        with self.assertRaises(ShapeError):
            head.fit(np.ones((4, 3)), np.ones((5, 1)))


if __name__ == '__main__':
    unittest.main()

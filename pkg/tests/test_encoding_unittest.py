import os
import sys
import unittest

import numpy as np

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

from backend.core.encoding import (
    BaselineEncoderConfig,
    BaselineKind,
    BinMode,
    SparseVector,
    build_baseline,
    build_losse,
    clamp_input,
    encode,
    encode_baseline,
    project,
    scale_to_bound,
    soft_bin_axis,
)
from backend.core.errors import ConfigError, NonFiniteError, ShapeError


def _losse(**overrides):
    cfg = {"input_dim": 4, "kappa": 5, "rho": 3, "lambda": 6, "seed": 11}
    cfg.update(overrides)
    return build_losse(cfg)


class TestSoftBinning(unittest.TestCase):
    def test_distance_mode_matches_worked_example(self):
        left, lv, rv = soft_bin_axis(1.7, 4, (0.0, 3.0), BinMode.DISTANCE)
        self.assertEqual(left, 1)
        self.assertAlmostEqual(lv, 0.7, places=12)
        self.assertAlmostEqual(rv, 0.3, places=12)

    def test_interpolation_mode_is_complement(self):
        left, lv, rv = soft_bin_axis(1.7, 4, (0.0, 3.0))
        self.assertEqual(left, 1)
        self.assertAlmostEqual(lv, 0.3, places=12)
        self.assertAlmostEqual(rv, 0.7, places=12)

    def test_value_on_edge(self):
        self.assertEqual(soft_bin_axis(1.0, 4, (0.0, 3.0)), (1, 1.0, 0.0))
        # the last edge belongs to the last cell
        self.assertEqual(soft_bin_axis(3.0, 4, (0.0, 3.0)), (2, 0.0, 1.0))

    def test_out_of_range_values_clamp_to_outer_cells(self):
        self.assertEqual(soft_bin_axis(-50.0, 4, (0.0, 3.0)), (0, 1.0, 0.0))
        self.assertEqual(soft_bin_axis(50.0, 4, (0.0, 3.0)), (2, 0.0, 1.0))

    def test_weights_sum_to_one(self):
        for v in np.linspace(-3.5, 3.5, 37):
            for mode in BinMode:
                _, lv, rv = soft_bin_axis(float(v), 10, (-3.0, 3.0), mode)
                self.assertAlmostEqual(lv + rv, 1.0, places=12)

    def test_rejects_nan_and_too_few_edges(self):
        with self.assertRaises(NonFiniteError):
            soft_bin_axis(float('nan'), 4, (0.0, 3.0))
        with self.assertRaises(ConfigError):
            soft_bin_axis(0.5, 1, (0.0, 3.0))


class TestLosseEncoder(unittest.TestCase):
    def test_single_grid_reproduces_worked_example(self):
        enc = build_losse({"input_dim": 1, "kappa": 1, "rho": 1, "lambda": 4,
                           "bin_range": (0.0, 3.0), "bin_mode": "distance"})
        enc.projection = np.array([[1.0]])
        phi = encode(enc, [1.7])
        self.assertEqual(phi.dim, 4)
        self.assertEqual(phi.indices.tolist(), [1, 2])
        np.testing.assert_allclose(phi.values, [0.7, 0.3], atol=1e-12)
        np.testing.assert_allclose(phi.to_dense(), [0.0, 0.7, 0.3, 0.0], atol=1e-12)

    def test_dimensions_and_support_bound(self):
        enc = _losse()
        self.assertEqual(enc.output_dim, 5 * 6 ** 3)
        self.assertEqual(enc.config.support_bound, 5 * 2 ** 3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            phi = enc.encode(rng.normal(size=4))
            self.assertLessEqual(phi.nnz, enc.config.support_bound)
            self.assertTrue(np.all(np.diff(phi.indices) > 0))
            self.assertTrue(np.all(phi.values > 0))
            # tensor products of per-axis weights sum to one in every grid
            self.assertAlmostEqual(float(phi.values.sum()), 5.0, places=9)

    def test_each_grid_owns_its_index_block(self):
        enc = _losse()
        phi = enc.encode([0.3, -0.2, 0.1, 0.9])
        block = 6 ** 3
        grids = sorted(set((phi.indices // block).tolist()))
        self.assertEqual(grids, [0, 1, 2, 3, 4])

    def test_encode_many_matches_row_encode(self):
        enc = _losse()
        X = np.random.default_rng(3).normal(size=(7, 4))
        X[2] = 100.0
        batch = enc.encode_many(X)
        self.assertEqual(len(batch), 7)
        for phi, x in zip(batch, X):
            single = enc.encode(x)
            np.testing.assert_array_equal(phi.indices, single.indices)
            np.testing.assert_allclose(phi.values, single.values)
        self.assertEqual(enc.encode_many(np.zeros((0, 4))), [])

    def test_slots_have_fixed_width_and_unit_mass_per_grid(self):
        enc = _losse()
        idx, vals = enc.encode_slots(np.random.default_rng(5).normal(size=(3, 4)))
        self.assertEqual(idx.shape, (3, 5 * 2 ** 3))
        np.testing.assert_allclose(vals.reshape(3, 5, -1).sum(axis=2), np.ones((3, 5)))
        with self.assertRaises(ShapeError):
            enc.encode_slots(np.ones((2, 3)))

    def test_projection_shape(self):
        enc = _losse()
        self.assertEqual(project(enc, np.ones(4)).shape, (15,))
        self.assertFalse(enc.projection.flags.writeable)

    def test_same_seed_same_features(self):
        x = [0.1, 0.2, -0.4, 1.3]
        a = _losse().encode(x)
        b = _losse().encode(x)
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.values, b.values)
        self.assertFalse(np.array_equal(_losse().projection, _losse(seed=12).projection))

    def test_interpolation_mode_is_continuous(self):
        enc = _losse()
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.uniform(-2, 2, size=4)
            shifted = x + 1e-6 * rng.normal(size=4)
            gap = np.abs(enc.encode(x).to_dense() - enc.encode(shifted).to_dense()).max()
            self.assertLess(gap, 1e-4)

    def test_saturated_inputs_keep_one_corner_per_grid(self):
        enc = _losse(rho=2)
        phi = enc.encode(np.full(4, 1e6))
        self.assertEqual(phi.nnz, 5)

    def test_input_validation(self):
        enc = _losse()
        with self.assertRaises(ShapeError):
            enc.encode([0.0, 1.0])
        with self.assertRaises(NonFiniteError):
            enc.encode([0.0, float('nan'), 0.0, 0.0])

    def test_invalid_configs(self):
        with self.assertRaises(ConfigError):
            build_losse({"input_dim": 2, "kappa": 1, "rho": 1, "lambda": 1})
        with self.assertRaises(ConfigError):
            build_losse({"input_dim": 2, "kappa": 0, "rho": 1, "lambda": 4})
        with self.assertRaises(ConfigError):
            build_losse({"input_dim": 2, "kappa": 1, "rho": 1, "lambda": 4, "bin_range": (1.0, 1.0)})

    def test_config_hash_is_stable(self):
        self.assertEqual(_losse().config.config_hash(), _losse().config.config_hash())
        self.assertNotEqual(_losse().config.config_hash(), _losse(seed=3).config.config_hash())


class TestSparseVector(unittest.TestCase):
    def test_dense_round_trip(self):
        vec = SparseVector.from_dense([0.0, 2.0, 0.0, -1.5])
        self.assertEqual(vec.nnz, 2)
        self.assertEqual(vec.indices.tolist(), [1, 3])
        np.testing.assert_array_equal(vec.to_dense(), [0.0, 2.0, 0.0, -1.5])

    def test_rejects_bad_indices(self):
        with self.assertRaises(ShapeError):
            SparseVector(dim=4, indices=np.array([2, 1]), values=np.ones(2))
        with self.assertRaises(ShapeError):
            SparseVector(dim=4, indices=np.array([4]), values=np.ones(1))
        with self.assertRaises(NonFiniteError):
            SparseVector(dim=4, indices=np.array([0]), values=np.array([np.inf]))


class TestScaling(unittest.TestCase):
    def test_scale_to_bound(self):
        out = scale_to_bound([0.0, 0.5, 1.0], [(0.0, 1.0)] * 3, 3.0)
        np.testing.assert_allclose(out, [-3.0, 0.0, 3.0])

    def test_clamp_input(self):
        np.testing.assert_array_equal(clamp_input([-5.0, 0.5, 9.0], 3.0), [-3.0, 0.5, 3.0])


class TestBaselineEncoders(unittest.TestCase):
    def test_tile_coding_is_one_hot_per_grid(self):
        cfg = BaselineEncoderConfig(kind=BaselineKind.TILE_CODE, input_dim=3, kappa=4, rho=2, bins=5, seed=2)
        self.assertEqual(cfg.output_dim, 4 * 25)
        phi = encode_baseline(cfg, [0.2, -0.1, 0.4])
        self.assertIsInstance(phi, SparseVector)
        self.assertEqual(phi.nnz, 4)
        np.testing.assert_array_equal(phi.values, np.ones(4))
        self.assertEqual((phi.indices // 25).tolist(), [0, 1, 2, 3])

    def test_tile_coding_dimension_mismatch(self):
        with self.assertRaises(ConfigError):
            build_baseline({"kind": "tile_code", "input_dim": 3, "kappa": 2, "rho": 2, "bins": 5, "output_dim": 7})

    def test_dense_encoders_need_output_dim(self):
        with self.assertRaises(ConfigError):
            build_baseline({"kind": "fourier", "input_dim": 3})

    def test_fourier_and_relu_ranges(self):
        x = np.array([0.5, -1.0, 2.0])
        fourier = encode_baseline({"kind": "fourier", "input_dim": 3, "output_dim": 16, "seed": 1}, x)
        relu = encode_baseline({"kind": "relu", "input_dim": 3, "output_dim": 16, "seed": 1}, x)
        self.assertEqual(fourier.shape, (16,))
        self.assertTrue(np.all(np.abs(fourier) <= 1.0))
        self.assertTrue(np.all(relu >= 0.0))

    def test_batch_transform_matches_per_sample(self):
        enc = build_baseline({"kind": "relu", "input_dim": 3, "output_dim": 8, "projection_scale": 0.3, "seed": 4})
        X = np.random.default_rng(1).normal(size=(6, 3))
        batch = enc.transform(X)
        for row, x in zip(batch, X):
            np.testing.assert_allclose(row, enc.encode(x))
        with self.assertRaises(ShapeError):
            enc.transform(np.ones((2, 4)))

    def test_fourier_without_bias_at_origin_is_all_ones(self):
        enc = build_baseline({"kind": "fourier", "input_dim": 3, "output_dim": 12, "use_bias": False, "seed": 6})
        np.testing.assert_array_equal(enc.encode(np.zeros(3)), np.ones(12))

    def test_tile_code_encode_many_matches_row_encode(self):
        enc = build_baseline({"kind": "tile_code", "input_dim": 3, "kappa": 4, "rho": 2, "bins": 5, "seed": 2})
        X = np.random.default_rng(8).normal(size=(5, 3))
        for phi, x in zip(enc.encode_many(X), X):
            np.testing.assert_array_equal(phi.indices, enc.encode(x).indices)
        dense = build_baseline({"kind": "relu", "input_dim": 3, "output_dim": 6, "seed": 2})
        np.testing.assert_allclose(np.vstack(dense.encode_many(X)), dense.transform(X))

    def test_builder_reuses_encoders(self):
        cfg = BaselineEncoderConfig(kind=BaselineKind.FOURIER, input_dim=2, output_dim=4, seed=9)
        self.assertIs(build_baseline(cfg), build_baseline(cfg))


if __name__ == '__main__':
    unittest.main()

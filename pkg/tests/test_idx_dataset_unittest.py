import gzip
import os
import struct
import sys
import tempfile
import unittest

import numpy as np

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

from backend.core.errors import DatasetMissingError, IdxParseError
from backend.environments.denoise import (
    DenoiseConfig,
    center_crop,
    load_denoise_dataset,
    parse_idx,
    read_idx,
    synthetic_blob_images,
)


def _idx_bytes(array, dtype_code=0x08):
    header = struct.pack(">HBB", 0, dtype_code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + array.astype(">u1").tobytes()


class TestIdxParsing(unittest.TestCase):
    def test_parses_images(self):
        images = np.arange(18, dtype=np.uint8).reshape(2, 3, 3)
        parsed = parse_idx(_idx_bytes(images))
        self.assertEqual(parsed.shape, (2, 3, 3))
        np.testing.assert_array_equal(parsed, images)

    def test_parses_labels(self):
        labels = np.array([3, 1, 4], dtype=np.uint8)
        raw = _idx_bytes(labels)
        self.assertEqual(int.from_bytes(raw[:4], "big"), 0x00000801)
        np.testing.assert_array_equal(parse_idx(raw), labels)

    def test_bad_magic(self):
        raw = bytearray(_idx_bytes(np.zeros((1, 2, 2), dtype=np.uint8)))
        raw[0] = 1
        with self.assertRaises(IdxParseError) as ctx:
            parse_idx(bytes(raw))
        self.assertEqual(ctx.exception.offset, 0)

    def test_expected_magic_rejects_corrupted_header(self):
        raw = bytearray(_idx_bytes(np.zeros((2, 3, 3), dtype=np.uint8)))
        np.testing.assert_array_equal(parse_idx(bytes(raw), 0x00000803).shape, (2, 3, 3))
        raw[3] = 1
        with self.assertRaises(IdxParseError) as ctx:
            parse_idx(bytes(raw), expected_magic=0x00000803)
        self.assertEqual(ctx.exception.offset, 0)
        self.assertIn("label file", str(ctx.exception))

    def test_unsupported_element_type(self):
        with self.assertRaises(IdxParseError) as ctx:
            parse_idx(_idx_bytes(np.zeros((1, 2, 2), dtype=np.uint8), dtype_code=0x07))
        self.assertEqual(ctx.exception.offset, 2)

    def test_truncated_payload(self):
        raw = _idx_bytes(np.zeros((2, 3, 3), dtype=np.uint8))[:-1]
        with self.assertRaises(IdxParseError) as ctx:
            parse_idx(raw)
        self.assertEqual(ctx.exception.offset, 16 + 17)

    def test_truncated_header(self):
        with self.assertRaises(IdxParseError):
            parse_idx(b"\x00\x00")
        with self.assertRaises(IdxParseError):
            parse_idx(struct.pack(">HBB", 0, 0x08, 3) + b"\x00\x00\x00\x02")

    def test_reads_gzip_files(self):
        images = np.arange(32, dtype=np.uint8).reshape(2, 4, 4)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "images-idx3-ubyte.gz")
            with gzip.open(path, "wb") as f:
                f.write(_idx_bytes(images))
            np.testing.assert_array_equal(read_idx(path), images)


class TestDenoiseDataset(unittest.TestCase):
    def test_center_crop(self):
        images = np.arange(2 * 6 * 6).reshape(2, 6, 6)
        crop = center_crop(images, 2)
        np.testing.assert_array_equal(crop[0], [[14, 15], [20, 21]])
        with self.assertRaises(ValueError):
            center_crop(images, 7)

    def test_synthetic_corpus_is_seeded_and_bounded(self):
        a = synthetic_blob_images(5, seed=1)
        b = synthetic_blob_images(5, seed=1)
        self.assertEqual(a.shape, (5, 28, 28))
        np.testing.assert_array_equal(a, b)
        self.assertTrue(np.all(a >= 0.0) and np.all(a <= 1.0))

    def test_synthetic_fallback(self):
        cfg = DenoiseConfig(patch_side=3, max_images=50, seed=0)
        with self.assertLogs('backend.environments.denoise', level='WARNING'):
            train, test = load_denoise_dataset(None, cfg)
        self.assertEqual(train.inputs.shape, (45, 9))
        self.assertEqual(test.targets.shape, (5, 9))
        self.assertTrue(np.all(train.targets >= 0.0) and np.all(train.targets <= 1.0))

    def test_missing_dataset_without_fallback(self):
        cfg = DenoiseConfig(allow_synthetic=False)
        with self.assertRaises(DatasetMissingError):
            load_denoise_dataset("/nonexistent/train-images-idx3-ubyte.gz", cfg)

    def test_loads_idx_file_and_scales_pixels(self):
        images = np.random.default_rng(0).integers(0, 256, size=(10, 8, 8)).astype(np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "images-idx3-ubyte")
            with open(path, "wb") as f:
                f.write(_idx_bytes(images))
            train, test = load_denoise_dataset(path, DenoiseConfig(patch_side=4, noise_sigma=0.0, max_images=10))
        self.assertEqual(train.inputs.shape, (9, 16))
        self.assertEqual(test.inputs.shape, (1, 16))
        np.testing.assert_array_equal(train.inputs, train.targets)
        expected = {tuple(row) for row in (images[:, 2:6, 2:6].reshape(10, -1) / 255.0)}
        for row in np.vstack([train.targets, test.targets]):
            self.assertIn(tuple(row), expected)

    def test_label_file_is_not_loaded_as_images(self):
        labels = np.arange(10, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "labels-idx1-ubyte")
            with open(path, "wb") as f:
                f.write(_idx_bytes(labels))
            with self.assertRaises(IdxParseError) as ctx:
                load_denoise_dataset(path, DenoiseConfig(patch_side=2, max_images=10))
        self.assertEqual(ctx.exception.offset, 0)

    def test_same_seed_same_split(self):
        cfg = DenoiseConfig(patch_side=3, max_images=20, seed=4)
        first, _ = load_denoise_dataset(None, cfg)
        second, _ = load_denoise_dataset(None, cfg)
        np.testing.assert_array_equal(first.inputs, second.inputs)


if __name__ == '__main__':
    unittest.main()

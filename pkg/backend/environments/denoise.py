"""Image-denoising dataset: IDX ingestion, center-cropped patches, Gaussian noise.

IDX layout (big-endian):
  bytes 0-1  zero
  byte  2    element type (0x08 = unsigned byte, ...)
  byte  3    number of dimensions n
  4·n bytes  dimension sizes (uint32)
  payload    prod(dims) elements
Images use magic 0x00000803 (count, rows, cols); labels 0x00000801. The dataset
loader insists on the image magic, so a label file or a header with the wrong
dimension count is rejected before any payload is read.

When the digit corpus is absent, a seeded corpus of smooth random blobs keeps
the benchmark runnable offline. Its MSE figures are not comparable with the digit corpus.
"""
from __future__ import annotations

import gzip
import logging
import os
import struct
from typing import NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from backend.core.errors import DatasetMissingError, IdxParseError

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


class DenoiseConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    patch_side: int = Field(default=3, ge=2, le=7)
    noise_sigma: float = Field(default=0.3, ge=0.0)
    train_fraction: float = Field(default=0.9, gt=0.0, lt=1.0)
    max_images: int = Field(default=10_000, gt=1)
    allow_synthetic: bool = True
    seed: int = 0


class DenoiseSplit(NamedTuple):
    inputs: np.ndarray
    targets: np.ndarray


def parse_idx(buffer: bytes, expected_magic: Optional[int] = None) -> np.ndarray:
    if len(buffer) < 4:
        raise IdxParseError("file shorter than the 4-byte IDX magic", 0)
    zero, dtype_code, ndim = struct.unpack(">HBB", buffer[:4])
    if zero != 0:
        raise IdxParseError(f"magic must start with two zero bytes, got 0x{zero:04x}", 0)
    magic = int.from_bytes(buffer[:4], "big")
    if expected_magic is not None and magic != expected_magic:
        kind = " (a label file)" if magic == IDX_LABELS_MAGIC else ""
        raise IdxParseError(f"expected magic 0x{expected_magic:08x}, got 0x{magic:08x}{kind}", 0)
    if dtype_code not in _IDX_DTYPES:
        raise IdxParseError(f"unsupported IDX element type 0x{dtype_code:02x}", 2)
    if ndim == 0:
        raise IdxParseError("IDX file declares zero dimensions", 3)
    header_end = 4 + 4 * ndim
    if len(buffer) < header_end:
        raise IdxParseError(f"truncated dimension table, need {header_end} bytes", len(buffer))
    dims = struct.unpack(f">{ndim}I", buffer[4:header_end])
    dtype = _IDX_DTYPES[dtype_code]
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = len(buffer) - header_end
    if payload != expected:
        raise IdxParseError(f"payload has {payload} bytes, header implies {expected}", header_end + min(payload, expected))
    data = np.frombuffer(buffer, dtype=dtype, offset=header_end)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def read_idx(path: str, expected_magic: Optional[int] = None) -> np.ndarray:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        buffer = f.read()
    array = parse_idx(buffer, expected_magic)
    magic = int.from_bytes(buffer[:4], "big")
    logger.info(f"Read IDX file {path} (magic 0x{magic:08x}, shape {array.shape})")
    return array


def center_crop(images: np.ndarray, side: int) -> np.ndarray:
    _, rows, cols = images.shape
    if side > min(rows, cols):
        raise ValueError(f"patch side {side} exceeds image size {rows}x{cols}")
    r0 = (rows - side) // 2
    c0 = (cols - side) // 2
    return images[:, r0:r0 + side, c0:c0 + side]


def synthetic_blob_images(count: int, side: int = 28, seed: int = 0) -> np.ndarray:
    """Seeded smooth blob images in [0, 1], a stand-in for handwritten digits."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 28]))
    grid = np.arange(side, dtype=float)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    images = np.zeros((count, side, side))
    for k in range(3):
        centers = rng.uniform(side * 0.3, side * 0.7, size=(count, 2))
        widths = rng.uniform(1.5, 4.5, size=count)
        amps = rng.uniform(0.4, 1.0, size=count) * (rng.random(count) < (1.0 if k == 0 else 0.6))
        dist2 = (yy[None] - centers[:, 0, None, None]) ** 2 + (xx[None] - centers[:, 1, None, None]) ** 2
        images += amps[:, None, None] * np.exp(-dist2 / (2 * widths[:, None, None] ** 2))
    return np.clip(images, 0.0, 1.0)


def load_denoise_dataset(path: Optional[str], cfg: DenoiseConfig) -> Tuple[DenoiseSplit, DenoiseSplit]:
    """Return (train, test) splits of (noisy patch, clean patch) pairs, flattened."""
    if path and os.path.exists(path):
        images = read_idx(path, expected_magic=IDX_IMAGES_MAGIC).astype(float)
        if images.ndim != 3:
            raise IdxParseError(f"expected a 3-d image tensor, got {images.ndim}-d", 3)
        images = images[:cfg.max_images] / 255.0
    elif cfg.allow_synthetic:
        logger.warning(f"Digit corpus not found at {path!r}; using the synthetic blob corpus")
        images = synthetic_blob_images(cfg.max_images, seed=cfg.seed)
    else:
        raise DatasetMissingError(f"dataset not found: {path!r} (synthetic fallback disabled)")

    patches = center_crop(images, cfg.patch_side).reshape(images.shape[0], -1)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.patch_side]))
    noisy = patches + cfg.noise_sigma * rng.standard_normal(patches.shape) if cfg.noise_sigma > 0 else patches.copy()

    order = rng.permutation(patches.shape[0])
    n_train = int(round(cfg.train_fraction * patches.shape[0]))
    train_idx, test_idx = order[:n_train], order[n_train:]
    return (DenoiseSplit(noisy[train_idx], patches[train_idx]),
            DenoiseSplit(noisy[test_idx], patches[test_idx]))


__all__ = [
    "DenoiseConfig",
    "DenoiseSplit",
    "parse_idx",
    "read_idx",
    "center_crop",
    "synthetic_blob_images",
    "load_denoise_dataset",
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
]

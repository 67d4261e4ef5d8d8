"""Locality-sensitive sparse encoding (Losse) and baseline random-feature encoders.

An input vector is projected by a frozen Gaussian matrix into κ grids of ρ
coordinates each. Every projected coordinate is soft-binned onto λ evenly
spaced edges, and the per-axis (left, right) weights of a grid are combined by
tensor product over the 2^ρ surrounding lattice points. The flattened result is
a D = κ·λ^ρ dimensional vector with at most κ·2^ρ nonzeros.

Public API:
  build_losse(config) -> LosseEncoder
  project(enc, x) -> np.ndarray
  soft_bin_axis(v, edges, value_range, mode) -> (left_index, left_value, right_value)
  encode(enc, x) -> SparseVector
  clamp_input(x, bound) -> np.ndarray
  scale_to_bound(x, bounds, bound) -> np.ndarray
  encode_baseline(cfg, x) -> SparseVector | np.ndarray

Edge Guards:
  - Inputs are validated for shape and finiteness before projection.
  - Projected values outside bin_range fall into the outermost cell.
  - Lattice entries whose product is exactly zero are dropped.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from backend.core.errors import ConfigError, NonFiniteError, ShapeError
from backend.core.identifiers import compute_config_hash


class BinMode(str, Enum):
    INTERPOLATION = "interpolation"
    DISTANCE = "distance"


class BaselineKind(str, Enum):
    FOURIER = "fourier"
    RELU = "relu"
    TILE_CODE = "tile_code"


@dataclass(frozen=True)
class SparseVector:
    """Index/value representation of a vector in R^dim."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.dim <= 0:
            raise ShapeError(f"SparseVector dim must be positive, got {self.dim}")
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ShapeError("indices and values must be 1-d arrays of equal length")
        if self.indices.size:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ShapeError(f"indices out of range [0, {self.dim})")
            if self.indices.size > 1 and np.any(np.diff(self.indices) <= 0):
                raise ShapeError("indices must be strictly increasing")
            if not np.all(np.isfinite(self.values)):
                raise NonFiniteError("SparseVector values must be finite")

    @classmethod
    def from_dense(cls, dense: Sequence[float]) -> "SparseVector":
        arr = np.asarray(dense, dtype=float)
        idx = np.flatnonzero(arr)
        return cls(dim=arr.size, indices=idx.astype(np.int64), values=arr[idx].copy())

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=float)
        out[self.indices] = self.values
        return out


def as_dense_vector(x: Union[Sequence[float], np.ndarray], expected_dim: Optional[int] = None, name: str = "x") -> np.ndarray:
    """Validate a DenseVector: 1-d, finite, optionally of a fixed length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {arr.shape}")
    if expected_dim is not None and arr.size != expected_dim:
        raise ShapeError(f"{name} has length {arr.size}, expected {expected_dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


# ---------- Configuration ----------

class LosseConfig(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    input_dim: int = Field(gt=0)
    kappa: int = Field(gt=0)
    rho: int = Field(gt=0)
    lam: int = Field(alias="lambda", ge=2)
    input_bound: float = Field(default=3.0, gt=0)
    bin_range: Tuple[float, float] = (-3.0, 3.0)
    bin_mode: BinMode = BinMode.INTERPOLATION
    seed: int = 0

    @model_validator(mode="after")
    def _check_range(self) -> "LosseConfig":
        lo, hi = self.bin_range
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise ValueError(f"bin_range must satisfy lo < hi, got {self.bin_range}")
        return self

    @property
    def output_dim(self) -> int:
        return self.kappa * self.lam ** self.rho

    @property
    def support_bound(self) -> int:
        return self.kappa * 2 ** self.rho

    def config_hash(self) -> str:
        return compute_config_hash(self.model_dump(mode="json", by_alias=True))


class BaselineEncoderConfig(BaseModel):
    """Random Fourier / random ReLU / random tile-coding encoder settings.

    For TileCode, output_dim is derived as kappa * bins**rho when omitted and
    must match it when given.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: BaselineKind
    input_dim: int = Field(gt=0)
    output_dim: Optional[int] = Field(default=None, gt=0)
    projection_scale: float = Field(default=1.0, gt=0)
    use_bias: bool = True
    kappa: int = Field(default=1, gt=0)
    rho: int = Field(default=1, gt=0)
    bins: int = Field(default=10, ge=1)
    bin_range: Tuple[float, float] = (-3.0, 3.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_dims(self) -> "BaselineEncoderConfig":
        if self.kind == BaselineKind.TILE_CODE:
            derived = self.kappa * self.bins ** self.rho
            if self.output_dim is None:
                object.__setattr__(self, "output_dim", derived)
            elif self.output_dim != derived:
                raise ValueError(f"tile coding output_dim must be kappa*bins**rho = {derived}")
            lo, hi = self.bin_range
            if lo >= hi:
                raise ValueError(f"bin_range must satisfy lo < hi, got {self.bin_range}")
        elif self.output_dim is None:
            raise ValueError("output_dim is required for fourier/relu encoders")
        return self


def validate_config(model_cls, data: Union[BaseModel, Mapping[str, Any]]):
    """Build a pydantic config, converting validation failures to ConfigError."""
    if isinstance(data, model_cls):
        return data
    if isinstance(data, BaseModel):
        data = data.model_dump(by_alias=True)
    try:
        return model_cls.model_validate(dict(data))
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) or "<root>" for err in e.errors())
        raise ConfigError(f"Invalid {model_cls.__name__} ({fields}): {e}") from e


# ---------- Losse ----------

class LosseEncoder:
    """Frozen random projection plus grid geometry. Safe for concurrent reads."""

    def __init__(self, config: LosseConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        std = math.sqrt(1.0 / config.input_dim)
        # one independent rho-row block per grid
        projection = rng.normal(0.0, std, size=(config.kappa * config.rho, config.input_dim))
        projection.setflags(write=False)
        self.projection = projection

        lo, hi = config.bin_range
        self.edge_spacing = (hi - lo) / (config.lam - 1)
        self._grid_size = config.lam ** config.rho
        self._strides = np.array([config.lam ** (config.rho - 1 - j) for j in range(config.rho)], dtype=np.int64)
        self._corners = np.array(list(itertools.product((0, 1), repeat=config.rho)), dtype=np.int64)
        self._grid_offsets = (np.arange(config.kappa, dtype=np.int64) * self._grid_size)[:, None]

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def _axis_weights(self, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized soft binning of every projected coordinate."""
        lo, hi = self.config.bin_range
        pos = (np.clip(sigma, lo, hi) - lo) / self.edge_spacing
        left = np.clip(np.floor(pos).astype(np.int64), 0, self.config.lam - 2)
        frac = np.clip(pos - left, 0.0, 1.0)
        if self.config.bin_mode == BinMode.INTERPOLATION:
            return left, 1.0 - frac, frac
        return left, frac, 1.0 - frac

    def encode_slots(self, xs: Union[Sequence[Sequence[float]], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Batch encode into fixed-width (n, κ·2^ρ) index and value arrays.

        Zero-valued lattice entries stay in their slots, so rows are not
        SparseVectors; use `encode`/`encode_many` for those.
        """
        X = np.atleast_2d(np.asarray(xs, dtype=float))
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected (n, {self.input_dim}) batch, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise NonFiniteError("batch contains non-finite entries")
        n = X.shape[0]
        sigma = (X @ self.projection.T).reshape(n, self.config.kappa, self.config.rho)
        left, w_left, w_right = self._axis_weights(sigma)

        # (n, kappa, 2^rho, rho): per-corner choice of left/right edge along every axis
        use_right = self._corners[None, None, :, :] == 1
        cell_vals = np.prod(np.where(use_right, w_right[:, :, None, :], w_left[:, :, None, :]), axis=3)
        cell_idx = ((left[:, :, None, :] + self._corners[None, None, :, :]) * self._strides).sum(axis=3)
        # binary corner order with most-significant axis first keeps indices increasing
        flat_idx = (cell_idx + self._grid_offsets[None, :, :]).reshape(n, -1)
        return flat_idx, cell_vals.reshape(n, -1)

    def encode(self, x: Union[Sequence[float], np.ndarray]) -> SparseVector:
        x = as_dense_vector(x, self.input_dim)
        idx, vals = self.encode_slots(x[None, :])
        keep = vals[0] != 0.0
        return SparseVector(dim=self.output_dim, indices=idx[0][keep], values=vals[0][keep])

    def encode_many(self, xs: Union[Sequence[Sequence[float]], np.ndarray]) -> List[SparseVector]:
        if len(xs) == 0:
            return []
        idx, vals = self.encode_slots(xs)
        keep = vals != 0.0
        return [SparseVector(dim=self.output_dim, indices=i[k], values=v[k]) for i, v, k in zip(idx, vals, keep)]


def build_losse(config: Union[LosseConfig, Mapping[str, Any]]) -> LosseEncoder:
    cfg = validate_config(LosseConfig, config)
    return LosseEncoder(cfg)


def project(enc: LosseEncoder, x: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    """σ(x) = P·x, length κ·ρ."""
    x = as_dense_vector(x, enc.input_dim)
    return enc.projection @ x


def soft_bin_axis(v: float, edges: int, value_range: Tuple[float, float],
                  mode: BinMode = BinMode.INTERPOLATION) -> Tuple[int, float, float]:
    """Locate the neighboring edges of v among `edges` evenly spaced edges.

    Returns (left_index, left_value, right_value) with left_value + right_value = 1.
    """
    if math.isnan(v):
        raise NonFiniteError("soft_bin_axis received NaN")
    if edges < 2:
        raise ConfigError(f"need at least 2 edges, got {edges}")
    lo, hi = value_range
    spacing = (hi - lo) / (edges - 1)
    pos = (min(max(v, lo), hi) - lo) / spacing
    left = min(max(int(math.floor(pos)), 0), edges - 2)
    frac = min(max(pos - left, 0.0), 1.0)
    if BinMode(mode) == BinMode.INTERPOLATION:
        return left, 1.0 - frac, frac
    return left, frac, 1.0 - frac


def encode(enc: LosseEncoder, x: Union[Sequence[float], np.ndarray]) -> SparseVector:
    return enc.encode(x)


def clamp_input(x: Union[Sequence[float], np.ndarray], bound: float) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=float), -bound, bound)


def scale_to_bound(x: Union[Sequence[float], np.ndarray], bounds: Sequence[Tuple[float, float]], bound: float) -> np.ndarray:
    """Affinely map each coordinate from its (lo, hi) range onto [-bound, bound]."""
    arr = np.asarray(x, dtype=float)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    return bound * (2.0 * (arr - lo) / (hi - lo) - 1.0)


# ---------- Baselines ----------

class BaselineEncoder:
    """Random Fourier, random ReLU, or random tile-coding features."""

    def __init__(self, config: BaselineEncoderConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        if config.kind == BaselineKind.TILE_CODE:
            std = math.sqrt(1.0 / config.input_dim)
            rows = config.kappa * config.rho
        else:
            std = config.projection_scale
            rows = config.output_dim
        projection = rng.normal(0.0, std, size=(rows, config.input_dim))
        if config.kind == BaselineKind.FOURIER:
            bias = rng.uniform(0.0, 2.0 * math.pi, size=rows)
        elif config.kind == BaselineKind.RELU:
            bias = rng.normal(0.0, config.projection_scale, size=rows)
        else:
            bias = np.zeros(rows)
        if not config.use_bias:
            bias = np.zeros(rows)
        projection.setflags(write=False)
        bias.setflags(write=False)
        self.projection = projection
        self.bias = bias

    @property
    def output_dim(self) -> int:
        return int(self.config.output_dim)

    def _tile_indices(self, sigma: np.ndarray) -> np.ndarray:
        """sigma: (..., kappa, rho) -> flat one-hot index per grid, shape (..., kappa)."""
        cfg = self.config
        lo, hi = cfg.bin_range
        width = (hi - lo) / cfg.bins
        cell = np.clip(np.floor((sigma - lo) / width).astype(np.int64), 0, cfg.bins - 1)
        strides = np.array([cfg.bins ** (cfg.rho - 1 - j) for j in range(cfg.rho)], dtype=np.int64)
        offsets = np.arange(cfg.kappa, dtype=np.int64) * cfg.bins ** cfg.rho
        return (cell * strides).sum(axis=-1) + offsets

    def encode(self, x: Union[Sequence[float], np.ndarray]) -> Union[SparseVector, np.ndarray]:
        x = as_dense_vector(x, self.config.input_dim)
        z = self.projection @ x + self.bias
        if self.config.kind == BaselineKind.FOURIER:
            return np.cos(z)
        if self.config.kind == BaselineKind.RELU:
            return np.maximum(z, 0.0)
        idx = self._tile_indices(z.reshape(self.config.kappa, self.config.rho))
        return SparseVector(dim=self.output_dim, indices=idx, values=np.ones(idx.size))

    def encode_many(self, xs: Union[Sequence[Sequence[float]], np.ndarray]) -> List[Union[SparseVector, np.ndarray]]:
        """Row-wise `encode` over a batch, computed with one projection."""
        if len(xs) == 0:
            return []
        X = np.asarray(xs, dtype=float)
        if self.config.kind != BaselineKind.TILE_CODE:
            return list(self.transform(X))
        if X.ndim != 2 or X.shape[1] != self.config.input_dim:
            raise ShapeError(f"expected (N, {self.config.input_dim}) batch, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise NonFiniteError("batch contains non-finite entries")
        Z = X @ self.projection.T + self.bias
        idx = self._tile_indices(Z.reshape(X.shape[0], self.config.kappa, self.config.rho))
        return [SparseVector(dim=self.output_dim, indices=row, values=np.ones(row.size)) for row in idx]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Dense batch transform (N, input_dim) -> (N, output_dim) for Fourier/ReLU."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.config.input_dim:
            raise ShapeError(f"expected (N, {self.config.input_dim}) batch, got {X.shape}")
        if self.config.kind == BaselineKind.TILE_CODE:
            raise ShapeError("tile coding produces sparse rows; use encode_many")
        Z = X @ self.projection.T + self.bias
        return np.cos(Z) if self.config.kind == BaselineKind.FOURIER else np.maximum(Z, 0.0)


@lru_cache(maxsize=32)
def _cached_baseline(config: BaselineEncoderConfig) -> BaselineEncoder:
    return BaselineEncoder(config)


def build_baseline(config: Union[BaselineEncoderConfig, Mapping[str, Any]]) -> BaselineEncoder:
    return _cached_baseline(validate_config(BaselineEncoderConfig, config))


def encode_baseline(cfg: Union[BaselineEncoderConfig, Mapping[str, Any]],
                    x: Union[Sequence[float], np.ndarray]) -> Union[SparseVector, np.ndarray]:
    return build_baseline(cfg).encode(x)


__all__ = [
    "BinMode",
    "BaselineKind",
    "SparseVector",
    "LosseConfig",
    "BaselineEncoderConfig",
    "LosseEncoder",
    "BaselineEncoder",
    "as_dense_vector",
    "validate_config",
    "build_losse",
    "build_baseline",
    "project",
    "soft_bin_axis",
    "encode",
    "clamp_input",
    "scale_to_bound",
    "encode_baseline",
]

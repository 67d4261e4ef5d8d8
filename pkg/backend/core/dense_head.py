"""Mini-batch Adam linear head for the dense baseline encoders (Fourier / ReLU).

The sparse encoders are fitted in closed form by FtlLearner; dense random
features have no exploitable support, so their head is trained by gradient
descent on the squared error. Everything runs on CPU in float64 with a
seeded generator, so repeated fits are identical.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import torch

from backend.core.errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


class AdamLinearHead:
    def __init__(self, feature_dim: int, target_dim: int, learning_rate: float = 1e-4, batch_size: int = 32,
                 epochs: int = 20, seed: int = 0):
        if feature_dim < 1 or target_dim < 1:
            raise ShapeError(f"feature_dim and target_dim must be positive, got {feature_dim}, {target_dim}")
        self.feature_dim = feature_dim
        self.target_dim = target_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self._generator = torch.Generator().manual_seed(seed)
        self.linear = torch.nn.Linear(feature_dim, target_dim, dtype=torch.float64)
        with torch.no_grad():
            self.linear.weight.zero_()
            self.linear.bias.zero_()
        self.history: list[float] = []

    def fit(self, features: np.ndarray, targets: np.ndarray, epochs: Optional[int] = None) -> "AdamLinearHead":
        X = torch.as_tensor(np.asarray(features, dtype=np.float64))
        Y = torch.as_tensor(np.asarray(targets, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise ShapeError(f"features must be (n, {self.feature_dim}), got {tuple(X.shape)}")
        if Y.ndim == 1:
            Y = Y.unsqueeze(1)
        if Y.shape != (X.shape[0], self.target_dim):
            raise ShapeError(f"targets must be ({X.shape[0]}, {self.target_dim}), got {tuple(Y.shape)}")

        optimizer = torch.optim.Adam(self.linear.parameters(), lr=self.learning_rate)
        loss_fn = torch.nn.MSELoss()
        n = X.shape[0]
        for epoch in range(epochs if epochs is not None else self.epochs):
            order = torch.randperm(n, generator=self._generator)
            running = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                optimizer.zero_grad()
                loss = loss_fn(self.linear(X[idx]), Y[idx])
                if not torch.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss at epoch {epoch}")
                loss.backward()
                optimizer.step()
                running += float(loss) * len(idx)
            self.history.append(running / n)
            logger.debug(f"Adam head epoch {epoch}: train MSE {self.history[-1]:.6f}")
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        X = torch.as_tensor(np.atleast_2d(np.asarray(features, dtype=np.float64)))
        with torch.no_grad():
            return self.linear(X).numpy()


__all__ = ["AdamLinearHead"]

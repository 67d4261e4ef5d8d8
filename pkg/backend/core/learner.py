"""Follow-The-Leader linear regression over (sparse) features.

The learner keeps two memory matrices, A = Σ φφᵀ (D×D) and B = Σ φyᵀ (D×S),
and weights W (D×S). Two update paths:

  observe_dense   A += φφᵀ; B += φyᵀ; W = (A + εI)⁻¹ B            (full solve)
  observe_sparse  s = nonzero(φ)
                  A[s,s] += φ_s φ_sᵀ; B[s] += φ_s yᵀ
                  W[s] = (A[s,s] + εI)⁻¹ (B[s] − A[s,s̄] W[s̄])      (block solve)

The block solve factorizes only the |s|×|s| submatrix (|s| ≤ κ·2^ρ), so the
per-step cost never depends on the number of samples seen. It is exact for
the touched rows given the others; rows coupled to s but not touched keep
their previous values. `refresh()` re-solves every active row jointly, and
`refresh_interval` runs it every that many sparse updates.

Storage: A is a dense array up to DENSE_STORAGE_LIMIT features, otherwise a
scipy.sparse LIL matrix that only holds co-activated entries.

Also provides the batch ridge oracle, a gradient-descent baseline over the
same features, and regret accounting for the predict-then-update protocol.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.sparse.linalg import spsolve

from backend.core.encoding import SparseVector, as_dense_vector
from backend.core.errors import NonFiniteError, ShapeError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DENSE_STORAGE_LIMIT = 8192
SNAPSHOT_VERSION = 1

Features = Union[SparseVector, np.ndarray, Sequence[float]]


def _spd_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(M, lower=True, check_finite=False)
    except LinAlgError as e:
        raise SolverError(f"Cholesky factorization failed for {M.shape[0]}x{M.shape[0]} system: {e}") from e
    return cho_solve(factor, rhs, check_finite=False)


def _sparse_spd_solve(M: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    solution = spsolve(M.tocsc(), rhs)
    solution = np.asarray(solution, dtype=float).reshape(rhs.shape)
    if not np.all(np.isfinite(solution)):
        raise SolverError(f"sparse solve of {M.shape[0]}x{M.shape[0]} system produced non-finite weights")
    return solution


class FtlLearner:
    """Incremental FTL least squares. Single writer; predictions may run concurrently."""

    def __init__(self, feature_dim: int, target_dim: int, epsilon: float = DEFAULT_EPSILON,
                 storage: str = "auto", refresh_interval: Optional[int] = None):
        if feature_dim <= 0 or target_dim <= 0:
            raise ShapeError(f"feature_dim and target_dim must be positive, got {feature_dim}, {target_dim}")
        if epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
        if refresh_interval is not None and refresh_interval <= 0:
            raise ValueError(f"refresh_interval must be positive, got {refresh_interval}")
        self.feature_dim = feature_dim
        self.target_dim = target_dim
        self.epsilon = float(epsilon)
        if storage == "auto":
            storage = "dense" if feature_dim <= DENSE_STORAGE_LIMIT else "rows"
        if storage not in ("dense", "rows"):
            raise ValueError(f"unknown storage '{storage}'")
        self.storage = storage
        self.refresh_interval = refresh_interval
        if storage == "dense":
            self._A = np.zeros((feature_dim, feature_dim))
        else:
            self._A = sp.lil_matrix((feature_dim, feature_dim))
        self.B = np.zeros((feature_dim, target_dim))
        self.W = np.zeros((feature_dim, target_dim))
        self.steps_seen = 0
        self.refresh_count = 0
        self.last_refresh_drift = 0.0
        self.snapshot_config_hash = ""

    # ---------- Accessors ----------

    @property
    def A(self) -> np.ndarray:
        """Dense view of the Gram memory (a copy for row storage)."""
        return self._A if self.storage == "dense" else self._A.toarray()

    def _gram_block(self, idx: np.ndarray) -> np.ndarray:
        if self.storage == "dense":
            return self._A[np.ix_(idx, idx)]
        return self._A[np.ix_(idx, idx)].toarray()

    def _gram_rows_times_w(self, idx: np.ndarray) -> np.ndarray:
        if self.storage == "dense":
            return self._A[idx] @ self.W
        return np.asarray(self._A[idx].tocsr() @ self.W)

    def _gram_add_block(self, idx: np.ndarray, block: np.ndarray) -> None:
        cells = np.ix_(idx, idx)
        if self.storage == "dense":
            self._A[cells] += block
        else:
            self._A[cells] = self._A[cells].toarray() + block

    def active_rows(self) -> np.ndarray:
        """Rows with a positive Gram diagonal, i.e. features that were ever active."""
        diag = np.diag(self._A) if self.storage == "dense" else self._A.diagonal()
        return np.flatnonzero(diag > 0)

    def _check_target(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.ndim != 1 or y.size != self.target_dim:
            raise ShapeError(f"target has shape {y.shape}, expected ({self.target_dim},)")
        if not np.all(np.isfinite(y)):
            raise NonFiniteError("target contains non-finite entries")
        return y

    def _check_sparse(self, phi: SparseVector) -> SparseVector:
        if phi.dim != self.feature_dim:
            raise ShapeError(f"feature dim {phi.dim} does not match learner dim {self.feature_dim}")
        return phi

    # ---------- Updates ----------

    def observe_dense(self, phi: Features, y) -> "FtlLearner":
        """Accumulate memories and re-solve all weights."""
        if isinstance(phi, SparseVector):
            phi = self._check_sparse(phi).to_dense()
        phi = as_dense_vector(phi, self.feature_dim, name="phi")
        y = self._check_target(y)
        if self.storage != "dense":
            raise SolverError("observe_dense requires dense Gram storage")
        self._A += np.outer(phi, phi)
        self.B += np.outer(phi, y)
        self.W = _spd_solve(self._A + self.epsilon * np.eye(self.feature_dim), self.B)
        self.steps_seen += 1
        return self

    def observe_sparse(self, phi: SparseVector, y) -> "FtlLearner":
        """Block update restricted to the support of phi."""
        phi = self._check_sparse(phi)
        y = self._check_target(y)
        if phi.nnz == 0:
            logger.warning("observe_sparse called with empty feature support; skipping update")
            return self
        s = phi.indices
        v = phi.values
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("phi contains non-finite entries")

        self._gram_add_block(s, np.outer(v, v))
        self.B[s] += np.outer(v, y)

        A_ss = self._gram_block(s)
        # A[s, s̄] W[s̄] without materializing the complement
        coupling = self._gram_rows_times_w(s) - A_ss @ self.W[s]
        rhs = self.B[s] - coupling
        self.W[s] = _spd_solve(A_ss + self.epsilon * np.eye(s.size), rhs)
        self.steps_seen += 1
        if self.refresh_interval and self.steps_seen % self.refresh_interval == 0:
            self.refresh()
        return self

    def refresh(self) -> float:
        """Re-solve all active rows jointly, pulling untouched coupled rows back to
        the ridge optimum. Returns the relative weight change ‖ΔW‖/‖W‖."""
        act = self.active_rows()
        if act.size == 0:
            return 0.0
        if self.storage == "dense":
            solved = _spd_solve(self._A[np.ix_(act, act)] + self.epsilon * np.eye(act.size), self.B[act])
        else:
            sub = self._A.tocsr()[act][:, act]
            solved = _sparse_spd_solve(sub + self.epsilon * sp.identity(act.size, format="csr"), self.B[act])
        norm = np.linalg.norm(solved)
        drift = float(np.linalg.norm(self.W[act] - solved) / norm) if norm > 0 else 0.0
        self.W[act] = solved
        self.refresh_count += 1
        self.last_refresh_drift = drift
        logger.debug(f"refresh {self.refresh_count} over {act.size} rows: relative drift {drift:.3e}")
        return drift

    # ---------- Queries ----------

    def predict(self, phi: Features) -> np.ndarray:
        if isinstance(phi, SparseVector):
            self._check_sparse(phi)
            return phi.values @ self.W[phi.indices]
        phi = as_dense_vector(phi, self.feature_dim, name="phi")
        return self.W.T @ phi

    def block_residual(self, indices: np.ndarray) -> float:
        """‖(A_ss + εI) W_s + A_ss̄ W_s̄ − B_s‖_F for a row subset."""
        s = np.asarray(indices, dtype=np.int64)
        grad = self._gram_rows_times_w(s) + self.epsilon * self.W[s] - self.B[s]
        return float(np.linalg.norm(grad))

    def oracle_weights(self) -> np.ndarray:
        """Global ridge solution of the current memories."""
        if self.storage == "dense":
            return _spd_solve(self._A + self.epsilon * np.eye(self.feature_dim), self.B)
        return _sparse_spd_solve(self._A + self.epsilon * sp.identity(self.feature_dim, format="lil"), self.B)

    # ---------- Snapshots ----------

    def to_snapshot(self, target: Union[str, io.BytesIO], config_hash: str = "") -> None:
        """Write a versioned .npz snapshot; round-trips bit-exactly."""
        payload = {
            "version": np.array(SNAPSHOT_VERSION),
            "feature_dim": np.array(self.feature_dim),
            "target_dim": np.array(self.target_dim),
            "epsilon": np.array(self.epsilon),
            "steps_seen": np.array(self.steps_seen),
            "storage": np.array(self.storage),
            "refresh_interval": np.array(self.refresh_interval or 0),
            "config_hash": np.array(config_hash),
            "B": self.B,
            "W": self.W,
        }
        if self.storage == "dense":
            payload["A"] = self._A
        else:
            coo = self._A.tocoo()
            payload["A_rows"], payload["A_cols"], payload["A_vals"] = coo.row, coo.col, coo.data
        np.savez(target, **payload)

    @classmethod
    def from_snapshot(cls, source: Union[str, io.BytesIO]) -> "FtlLearner":
        with np.load(source, allow_pickle=False) as data:
            version = int(data["version"])
            if version != SNAPSHOT_VERSION:
                raise ValueError(f"unsupported learner snapshot version {version}")
            refresh = int(data["refresh_interval"]) if "refresh_interval" in data.files else 0
            learner = cls(int(data["feature_dim"]), int(data["target_dim"]),
                          epsilon=float(data["epsilon"]), storage=str(data["storage"]),
                          refresh_interval=refresh or None)
            learner.steps_seen = int(data["steps_seen"])
            learner.B = data["B"].copy()
            learner.W = data["W"].copy()
            if learner.storage == "dense":
                learner._A = data["A"].copy()
            else:
                D = learner.feature_dim
                learner._A = sp.coo_matrix((data["A_vals"], (data["A_rows"], data["A_cols"])), shape=(D, D)).tolil()
            learner.snapshot_config_hash = str(data["config_hash"])
        return learner


def observe_dense(learner: FtlLearner, phi: Features, y) -> FtlLearner:
    return learner.observe_dense(phi, y)


def observe_sparse(learner: FtlLearner, phi: SparseVector, y) -> FtlLearner:
    return learner.observe_sparse(phi, y)


def predict(learner, phi: Features) -> np.ndarray:
    return learner.predict(phi)


def solve_batch_oracle(samples: Sequence[Tuple[Features, Sequence[float]]], epsilon: float = DEFAULT_EPSILON,
                       feature_dim: Optional[int] = None) -> np.ndarray:
    """Exact ridge least-squares minimizer (A + εI)⁻¹B computed from scratch."""
    if not samples:
        raise ShapeError("solve_batch_oracle needs at least one sample")
    first_phi, first_y = samples[0]
    D = feature_dim or (first_phi.dim if isinstance(first_phi, SparseVector) else len(first_phi))
    S = np.atleast_1d(np.asarray(first_y, dtype=float)).size
    A = np.zeros((D, D))
    B = np.zeros((D, S))
    for phi, y in samples:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.size != S:
            raise ShapeError(f"inconsistent target dims: {y.size} vs {S}")
        if isinstance(phi, SparseVector):
            if phi.dim != D:
                raise ShapeError(f"inconsistent feature dims: {phi.dim} vs {D}")
            A[np.ix_(phi.indices, phi.indices)] += np.outer(phi.values, phi.values)
            B[phi.indices] += np.outer(phi.values, y)
        else:
            phi = as_dense_vector(phi, D, name="phi")
            A += np.outer(phi, phi)
            B += np.outer(phi, y)
    return _spd_solve(A + epsilon * np.eye(D), B)


# ---------- Gradient-descent baseline ----------

class SgdLearner:
    """Squared-loss gradient descent on the same features, optional mini-batching."""

    def __init__(self, feature_dim: int, target_dim: int, learning_rate: float, batch: Optional[int] = None):
        if learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {learning_rate}")
        self.feature_dim = feature_dim
        self.target_dim = target_dim
        self.learning_rate = float(learning_rate)
        self.batch = batch
        self.W = np.zeros((feature_dim, target_dim))
        self._pending: List[Tuple[Features, np.ndarray]] = []

    def predict(self, phi: Features) -> np.ndarray:
        if isinstance(phi, SparseVector):
            return phi.values @ self.W[phi.indices]
        return self.W.T @ as_dense_vector(phi, self.feature_dim, name="phi")

    def _apply(self) -> None:
        grad = np.zeros_like(self.W)
        n = len(self._pending)
        for phi, y in self._pending:
            residual = self.predict(phi) - y
            if isinstance(phi, SparseVector):
                np.add.at(grad, phi.indices, 2.0 * np.outer(phi.values, residual))
            else:
                grad += 2.0 * np.outer(phi, residual)
        self._pending.clear()
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("non-finite gradient in SGD step")
        self.W -= self.learning_rate * grad / n

    def step(self, phi: Features, y) -> "SgdLearner":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.size != self.target_dim:
            raise ShapeError(f"target has length {y.size}, expected {self.target_dim}")
        if isinstance(phi, SparseVector):
            if phi.dim != self.feature_dim:
                raise ShapeError(f"feature dim {phi.dim} does not match learner dim {self.feature_dim}")
        else:
            phi = as_dense_vector(phi, self.feature_dim, name="phi")
        self._pending.append((phi, y))
        if self.batch is None or len(self._pending) >= self.batch:
            self._apply()
        return self


def sgd_step(learner: SgdLearner, phi: Features, y) -> SgdLearner:
    return learner.step(phi, y)


# ---------- Regret ----------

@dataclass
class RegretLedger:
    cumulative_loss: float = 0.0
    per_step_losses: List[float] = field(default_factory=list)
    samples: List[Tuple[Features, np.ndarray]] = field(default_factory=list)

    def record(self, learner, phi: Features, y) -> float:
        """Loss suffered by the current weights before the target is used."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        loss = float(np.sum((learner.predict(phi) - y) ** 2))
        self.per_step_losses.append(loss)
        self.cumulative_loss += loss
        self.samples.append((phi, y))
        return loss

    def regret(self, epsilon: float = DEFAULT_EPSILON, feature_dim: Optional[int] = None) -> float:
        if not self.samples:
            raise ValueError("regret requested before any sample was recorded")
        W = solve_batch_oracle(self.samples, epsilon=epsilon, feature_dim=feature_dim)
        hindsight = 0.0
        for phi, y in self.samples:
            pred = phi.values @ W[phi.indices] if isinstance(phi, SparseVector) else W.T @ np.asarray(phi, dtype=float)
            hindsight += float(np.sum((pred - y) ** 2))
        return self.cumulative_loss - hindsight


def record_and_regret(ledger: RegretLedger, learner: FtlLearner, phi: Features, y, final: bool = False) -> float:
    """Predict-then-update: record the loss, update the learner, optionally return regret."""
    ledger.record(learner, phi, y)
    if isinstance(phi, SparseVector):
        learner.observe_sparse(phi, y)
    else:
        learner.observe_dense(phi, y)
    if final:
        return ledger.regret(epsilon=learner.epsilon, feature_dim=learner.feature_dim)
    return ledger.cumulative_loss


__all__ = [
    "DEFAULT_EPSILON",
    "FtlLearner",
    "SgdLearner",
    "RegretLedger",
    "observe_dense",
    "observe_sparse",
    "predict",
    "solve_batch_oracle",
    "sgd_step",
    "record_and_regret",
]

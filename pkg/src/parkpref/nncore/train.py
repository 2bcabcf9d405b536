"""Mini-batch training loop: Adam, early stopping, per-epoch metrics.

The loop is model-shape-agnostic: it talks to a model wrapper that owns
the natively-shaped input arrays and exposes index-based batching — see
the protocol described on `train`. Everything stochastic (batch order)
comes from the generator handed in, so a run is a pure function of
(model init, data, config, generator state).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, TrainingDiverged
from ..metrics import layout_mean_auprc, roc_auc
from .loss import AUTO, weighted_bce

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    patience: int = 30
    batch_size: int = 16
    pos_weight: object = AUTO  # "auto" or a positive float
    dtype: str = "float64"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype}")

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]


class Adam:
    """Adam optimizer over a fixed parameter list (in-place updates)."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: Sequence, learning_rate: float):
        self.params = list(params)
        self.lr = learning_rate
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.BETA1 ** self.t
        b2c = 1.0 - self.BETA2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.BETA1
            m += (1.0 - self.BETA1) * g
            v *= self.BETA2
            v += (1.0 - self.BETA2) * np.square(g)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.EPS)


@dataclass(frozen=True)
class SplitData:
    """Labels and grouping info for one split; inputs live in the model."""

    labels: np.ndarray  # (n_samples, n_cells) binary
    layout_ids: np.ndarray  # (n_samples,) int

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ValueError(f"labels must be 2-D, got {self.labels.shape}")
        if self.layout_ids.shape != (self.labels.shape[0],):
            raise ValueError("layout_ids length must match labels")

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_auprc: float
    test_auprc: float
    roc_auc: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    epochs_run: int = 0
    stopped_early: bool = False


def group_by_layout(pred: np.ndarray, split: SplitData) -> dict:
    """Pack predictions as {layout_id: [(scores, labels)]} for the metrics."""
    groups: dict = {}
    for lid in np.unique(split.layout_ids):
        idx = np.nonzero(split.layout_ids == lid)[0]
        groups[lid.item()] = [(pred[idx].reshape(-1), split.labels[idx].reshape(-1))]
    return groups


def train(model, train_data: SplitData, val_data: SplitData,
          test_data: SplitData, cfg: TrainConfig,
          rng: np.random.Generator) -> TrainResult:
    """Train a model wrapper and record per-epoch diagnostics.

    The model wrapper must expose:
      forward_train(idx)  -> (len(idx), n_cells) predictions, caching for
                             the matching backward_train call;
      backward_train(dp)  -> backpropagate dLoss/dPred and fill gradients;
      predict_split(name) -> (n, n_cells) predictions for the named
                             evaluation split ("val" or "test");
      parameters()        -> list of Parameter objects.

    Per epoch: full pass over the training set in rng-shuffled
    mini-batches; then validation loss/AUPRC and test AUPRC/ROC-AUC.
    Early stopping keeps the parameters of the best-validation-loss epoch
    and stops once `patience` epochs pass without strict improvement.
    """
    if train_data.n == 0 or val_data.n == 0 or test_data.n == 0:
        raise ConfigError("train, val, and test splits must all be non-empty")

    params = model.parameters()
    opt = Adam(params, cfg.learning_rate)
    result = TrainResult()
    best_params: Optional[list[np.ndarray]] = None
    epochs_since_best = 0

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(train_data.n)
        batch_losses = []
        for start in range(0, train_data.n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            pred = model.forward_train(idx)
            labels = train_data.labels[idx]
            loss, dpred = weighted_bce(pred, labels, cfg.pos_weight)
            if not np.isfinite(loss):
                exc = TrainingDiverged(
                    f"non-finite training loss at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}"
                )
                exc.result = result
                raise exc
            model.backward_train(dpred)
            opt.step()
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))

        val_pred = model.predict_split("val")
        val_loss, _ = weighted_bce(val_pred, val_data.labels, cfg.pos_weight)
        if not np.isfinite(val_loss):
            exc = TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
            exc.result = result
            raise exc
        val_auprc = layout_mean_auprc(group_by_layout(val_pred, val_data))

        test_pred = model.predict_split("test")
        test_auprc = layout_mean_auprc(group_by_layout(test_pred, test_data))
        test_roc = roc_auc(test_pred.reshape(-1), test_data.labels.reshape(-1))

        result.history.append(EpochRecord(
            epoch=epoch, train_loss=train_loss, val_loss=val_loss,
            val_auprc=val_auprc, test_auprc=test_auprc, roc_auc=test_roc,
        ))
        result.epochs_run = epoch

        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_params = [p.data.copy() for p in params]
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                result.stopped_early = True
                break

    for p, best in zip(params, best_params):
        p.data[...] = best
    return result

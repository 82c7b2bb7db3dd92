"""Joint multi-task training: alpha-weighted dysarthria cross-entropy plus
mel reconstruction L2, minimized with plain mini-batch SGD.

loss = alpha * CE(y, p) + (1 - alpha) * mean((Y_pred - Y_true)^2)

The L2 mean runs over the n_mels x n_f cells of each utterance (padding is
masked out), then over the batch. alpha = 1 skips the decoder graph entirely,
so a multitask run at alpha = 1 is bit-identical to classifier_only mode;
alpha = 0 never touches the labels.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch, PreparedUtterance, collate, make_batches
from .dsp import MelSpectrogram
from .errors import (
    BadProbability,
    EmptySequence,
    NumericalDivergence,
    ShapeMismatch,
)
from .layers import ParamStore
from .model import ModelConfig, MultiTaskModel

PROB_FLOOR = 1e-7        # CE clamp; keeps log finite at saturated predictions
MODES = ("multitask", "classifier_only", "unsupervised")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    learning_rate: float = 0.03
    batch_size: int = 50
    epochs: int = 100
    seed: int = 0
    mode: str = "multitask"
    patience: int | None = 10   # epochs without improvement before stopping
    min_delta: float = 1e-4     # loss must drop by this much to count

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 or None")

    @property
    def effective_alpha(self) -> float:
        if self.mode == "classifier_only":
            return 1.0
        if self.mode == "unsupervised":
            return 0.0
        return self.alpha


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    joint_loss: float
    cross_entropy: float | None   # None when alpha = 0 (labels unused)
    l2: float | None              # None when alpha = 1 (decoder untrained)
    accuracy: float | None        # train-mode word accuracy; None when alpha = 0
    seconds: float


@dataclass
class TrainReport:
    epochs: list
    total_seconds: float
    stopped_early: bool = False

    @property
    def final(self) -> EpochStats:
        return self.epochs[-1]

    def to_dict(self) -> dict:
        return {
            "total_seconds": self.total_seconds,
            "stopped_early": self.stopped_early,
            "epochs": [vars(e) for e in self.epochs],
        }


def cross_entropy(d_pred: float, y: int) -> float:
    """Binary CE with the prediction clamped to [1e-7, 1 - 1e-7]."""
    if y not in (0, 1):
        raise BadProbability(f"label must be 0 or 1, got {y}")
    if not 0.0 <= d_pred <= 1.0:
        raise BadProbability(f"predicted probability {d_pred} outside [0, 1]")
    d = min(max(float(d_pred), PROB_FLOOR), 1.0 - PROB_FLOOR)
    return -(y * math.log(d) + (1 - y) * math.log(1.0 - d))


def joint_loss(d_pred: float, y, y_pred, y_true, alpha: float) -> float:
    """Scalar reference form of the training objective for one utterance."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    ce = cross_entropy(d_pred, y) if alpha > 0.0 else 0.0
    if alpha == 1.0:
        return ce
    a = np.asarray(y_pred.values if isinstance(y_pred, MelSpectrogram) else y_pred,
                   dtype=float)
    b = np.asarray(y_true.values if isinstance(y_true, MelSpectrogram) else y_true,
                   dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"prediction {a.shape} vs target {b.shape}")
    l2 = float(np.mean((a - b) ** 2))
    return alpha * ce + (1.0 - alpha) * l2


def batch_loss(model: MultiTaskModel, batch: Batch, alpha: float,
               mode: str = "train", rng=None):
    """Differentiable batch objective.

    Returns (loss Tensor, ce float | None, l2 float | None, probs Tensor).
    The reconstruction graph is only built when alpha < 1; the labels are only
    dereferenced when alpha > 0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    dtype = model.dtype
    mel_t = Tensor(batch.mel.astype(dtype))
    text_t = Tensor(batch.text.astype(dtype))
    with_recon = alpha < 1.0
    teacher = batch.mel if (with_recon and mode == "train") else None
    probs, _, y_pred = model.forward_graph(
        mel_t, text_t, mode, rng, frame_mask=batch.frame_mask,
        text_mask=batch.text_mask, teacher=teacher,
        with_reconstruction=with_recon)

    ce_t = None
    if alpha > 0.0:
        labels = np.asarray(batch.labels, dtype=float)
        p1 = ad.clip(probs[:, 1], PROB_FLOOR, 1.0 - PROB_FLOOR)
        ce_t = -ad.mean(Tensor(labels) * ad.log(p1)
                        + Tensor(1.0 - labels) * ad.log(1.0 - p1))

    l2_t = None
    if with_recon:
        b, n_mels, _ = batch.mel.shape
        n_valid = batch.frame_mask.sum(axis=1)
        # per-cell weights: each utterance averages over its own n_mels*n_f
        w = batch.frame_mask[:, None, :] / (n_mels * n_valid[:, None, None] * b)
        l2_t = ad.sum_(ad.square(y_pred - mel_t) * Tensor(w))

    if alpha == 1.0:
        loss = ce_t
    elif alpha == 0.0:
        loss = l2_t
    else:
        loss = ce_t * alpha + l2_t * (1.0 - alpha)
    return (loss,
            None if ce_t is None else ce_t.item(),
            None if l2_t is None else l2_t.item(),
            probs)


def sgd_step(params: ParamStore, learning_rate: float):
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    for t in params.values():
        t.data -= learning_rate * t.grad


def _as_prepared(item) -> PreparedUtterance:
    if isinstance(item, PreparedUtterance):
        return item
    mel, onehot, label = item[0], item[1], item[2]
    if isinstance(mel, MelSpectrogram):
        mel = mel.values
    if hasattr(onehot, "matrix"):
        onehot = onehot.matrix
    return PreparedUtterance(mel=np.asarray(mel, dtype=float),
                             onehot=np.asarray(onehot, dtype=float),
                             label=int(label), record=None)


def train(dataset, model_cfg: ModelConfig = ModelConfig(),
          train_cfg: TrainConfig = TrainConfig(), dtype=np.float32,
          callback=None) -> tuple[ParamStore, TrainReport]:
    """Fit a fresh model; returns its parameters and the per-epoch record.

    Deterministic for a fixed (dataset order, config): Xavier init, batch
    shuffles and dropout masks all derive from train_cfg.seed. `callback`, if
    given, is called as callback(epoch, model, stats) after each epoch.
    """
    items = [_as_prepared(it) for it in dataset]
    if not items:
        raise EmptySequence("training needs at least one utterance")
    model = MultiTaskModel.init(model_cfg, seed=train_cfg.seed, dtype=dtype)
    alpha = train_cfg.effective_alpha
    stats: list[EpochStats] = []
    best = math.inf
    since_best = 0
    stopped = False
    t0 = time.perf_counter()
    for epoch in range(train_cfg.epochs):
        e0 = time.perf_counter()
        rng = np.random.default_rng(
            np.random.SeedSequence((train_cfg.seed, 0xD07, epoch)))
        loss_sum = ce_sum = l2_sum = 0.0
        n = correct = 0
        for batch_items in make_batches(items, train_cfg.batch_size,
                                        train_cfg.seed, epoch):
            batch = collate(batch_items)
            loss, ce_v, l2_v, probs = batch_loss(model, batch, alpha,
                                                 "train", rng)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalDivergence(
                    f"non-finite loss at epoch {epoch}: {value}")
            loss.backward()
            sgd_step(model.params, train_cfg.learning_rate)
            model.params.zero_grads()
            bsz = batch.size
            n += bsz
            loss_sum += value * bsz
            if ce_v is not None:
                ce_sum += ce_v * bsz
            if l2_v is not None:
                l2_sum += l2_v * bsz
            if alpha > 0.0:
                pred = probs.data[:, 1] >= 0.5
                correct += int((pred == (np.asarray(batch.labels) == 1)).sum())
        stats.append(EpochStats(
            epoch=epoch,
            joint_loss=loss_sum / n,
            cross_entropy=ce_sum / n if alpha > 0.0 else None,
            l2=l2_sum / n if alpha < 1.0 else None,
            accuracy=correct / n if alpha > 0.0 else None,
            seconds=time.perf_counter() - e0))
        if callback is not None:
            callback(epoch, model, stats[-1])
        if stats[-1].joint_loss < best - train_cfg.min_delta:
            best = stats[-1].joint_loss
            since_best = 0
        else:
            since_best += 1
            if train_cfg.patience is not None and since_best >= train_cfg.patience:
                stopped = True
                break
    report = TrainReport(epochs=stats, total_seconds=time.perf_counter() - t0,
                         stopped_early=stopped)
    return model.params, report

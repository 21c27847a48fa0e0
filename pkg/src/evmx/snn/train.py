"""BPTT training loop and evaluation for the spiking classifier.

Batches pad clips with all-zero frames to the longest clip in the batch (or
the configured cap); the network masks padding out of its temporal average.
Every source of randomness is a seeded generator, and batch order, summation
order, and log formatting are fixed, so a rerun with the same seed emits
byte-identical epoch lines.  Log line format: `epoch,lr,train_loss,train_acc,val_acc`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import EmptyDataset, InvalidSpec, NonFiniteActivation
from ..optim import Adam, cosine_lr
from .network import SpikingNetwork, mse_loss
from .neuron import PLIFNeuron


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 8
    dropout_rate: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    max_t: int | None = None        # cap/pad target for slices per clip
    early_stop_acc: float | None = None  # stop once held-out accuracy reaches this

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidSpec(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpec("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidSpec(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise InvalidSpec("optimizer constants out of range")
        if self.max_t is not None and self.max_t < 1:
            raise InvalidSpec(f"max_t must be >= 1, got {self.max_t}")


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    top3_accuracy: float
    confusion: np.ndarray  # (n_classes, n_classes), rows true, cols predicted
    n_items: int


@dataclass(frozen=True)
class TrainResult:
    log_lines: tuple[str, ...]
    epochs_run: int
    final_train_loss: float
    final_train_acc: float
    final_val_acc: float | None
    optimizer: Adam


def _checked_labels(clips, n_classes: int) -> list[int]:
    labels = []
    for i, c in enumerate(clips):
        if not 0 <= c.label < n_classes:
            raise InvalidSpec(f"clip {i} has label {c.label}, expected 0..{n_classes - 1}")
        labels.append(c.label)
    return labels


def collate(clips, indices, n_classes: int, max_t: int | None = None):
    """Stack clips[indices] into padded tensors.

    Returns (x (B, Tmax, C, H, W) float32, lengths (B,), targets one-hot
    (B, n_classes), labels (B,)).
    """
    chosen = [clips[i] for i in indices]
    _checked_labels(chosen, n_classes)
    t_each = [len(c) if max_t is None else min(len(c), max_t) for c in chosen]
    t_max = max(t_each)
    shape = chosen[0].data.shape[1:]
    x = torch.zeros((len(chosen), t_max, *shape), dtype=torch.float32)
    for row, (c, tc) in enumerate(zip(chosen, t_each)):
        if c.data.shape[1:] != shape:
            raise InvalidSpec(f"clip shape {c.data.shape[1:]} differs from {shape} in one batch")
        x[row, :tc] = torch.from_numpy(c.data[:tc])
    lengths = torch.tensor(t_each, dtype=torch.long)
    labels = torch.tensor([c.label for c in chosen], dtype=torch.long)
    targets = torch.zeros((len(chosen), n_classes), dtype=torch.float32)
    targets[torch.arange(len(chosen)), labels] = 1.0
    return x, lengths, targets, labels


def _check_tau(net: SpikingNetwork) -> None:
    # sigmoid of any finite w sits in (0,1); only non-finite w can break it
    for m in net.net:
        if isinstance(m, PLIFNeuron) and not torch.isfinite(m.w).all():
            raise NonFiniteActivation("PLIF leak parameter became non-finite")


def train(
    net: SpikingNetwork,
    clips,
    config: TrainConfig,
    val_clips=None,
    log_fn=None,
) -> TrainResult:
    """Train in place; returns the per-epoch log and final metrics.

    Learning rate follows cosine annealing from config.learning_rate to 0
    across config.epochs.  With early_stop_acc set and validation clips
    given, training stops at the end of the first epoch whose held-out
    accuracy reaches the threshold.
    """
    clips = list(clips)
    if not clips:
        raise EmptyDataset("no training clips")
    n_classes = net.spec.n_classes
    labels = _checked_labels(clips, n_classes)
    if len(set(labels)) < 2:
        raise EmptyDataset("training needs at least 2 distinct classes")

    adam = Adam(net.parameters(), lr=config.learning_rate,
                betas=(config.beta1, config.beta2), eps=config.eps)
    shuffle_gen = torch.Generator()
    shuffle_gen.manual_seed(config.seed)

    lines: list[str] = []
    train_loss = train_acc = 0.0
    val_acc: float | None = None
    epochs_run = 0

    for epoch in range(1, config.epochs + 1):
        lr = cosine_lr(epoch - 1, config.epochs, config.learning_rate)
        adam.lr = lr
        net.train()
        perm = torch.randperm(len(clips), generator=shuffle_gen).tolist()

        total_loss = 0.0
        total_correct = 0
        for start in range(0, len(perm), config.batch_size):
            batch_idx = perm[start : start + config.batch_size]
            x, lengths, targets, batch_labels = collate(clips, batch_idx, n_classes,
                                                        config.max_t)
            scores = net(x, lengths)
            loss = mse_loss(scores, targets)
            adam.zero_grad()
            loss.backward()
            adam.step()
            _check_tau(net)
            total_loss += loss.item() * len(batch_idx)
            preds = scores.detach().argmax(dim=1)
            total_correct += int((preds == batch_labels).sum())

        train_loss = total_loss / len(clips)
        train_acc = total_correct / len(clips)
        if val_clips:
            val_acc = evaluate(net, val_clips, batch_size=config.batch_size).accuracy
            val_text = f"{val_acc:.6f}"
        else:
            val_acc = None
            val_text = "na"
        line = f"{epoch},{lr:.8f},{train_loss:.6f},{train_acc:.6f},{val_text}"
        lines.append(line)
        if log_fn is not None:
            log_fn(line)
        epochs_run = epoch
        if (config.early_stop_acc is not None and val_acc is not None
                and val_acc >= config.early_stop_acc):
            break

    return TrainResult(tuple(lines), epochs_run, train_loss, train_acc, val_acc, adam)


def evaluate(net: SpikingNetwork, clips, batch_size: int = 32) -> EvalResult:
    """Accuracy, top-3 accuracy, and a confusion matrix over labeled clips.

    Ties break toward the lowest class index, for both the argmax prediction
    and the top-3 ranking.
    """
    clips = list(clips)
    if not clips:
        raise EmptyDataset("no clips to evaluate")
    n_classes = net.spec.n_classes
    _checked_labels(clips, n_classes)

    was_training = net.training
    net.eval()
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    correct = 0
    top3 = 0
    with torch.no_grad():
        for start in range(0, len(clips), batch_size):
            idx = range(start, min(start + batch_size, len(clips)))
            x, lengths, _, labels = collate(clips, idx, n_classes)
            scores = net(x, lengths).cpu().numpy()
            labels = labels.numpy()
            preds = scores.argmax(axis=1)
            ranked = np.argsort(-scores, axis=1, kind="stable")[:, :3]
            for lab, pred, top in zip(labels, preds, ranked):
                confusion[lab, pred] += 1
                correct += int(pred == lab)
                top3 += int(lab in top)
    if was_training:
        net.train()
    n = len(clips)
    return EvalResult(correct / n, top3 / n, confusion, n)

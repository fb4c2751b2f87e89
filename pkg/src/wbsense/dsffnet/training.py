"""Mini-batch training loop with LR reduction and early stopping.

Validation subband accuracy (per-subband decisions at threshold 0.5) drives
the schedule: no improvement for `patience_lr` epochs cuts the learning
rate to a tenth; none for `patience_stop` epochs ends training. The best
validation checkpoint is restored before returning.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .model import Adam, DsffModel, bce_grad, bce_loss


@dataclass
class TrainSettings:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience_lr: int = 5
    patience_stop: int = 15
    shuffle_seed: int = 0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    lr: float


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_val_accuracy: float = 0.0
    best_epoch: int = 0


def subband_accuracy(model: DsffModel, x_mtm, x_pg, labels,
                     batch_size: int = 64) -> float:
    """Fraction of correct per-subband decisions at threshold 0.5."""
    correct = 0
    total = 0
    for start in range(0, len(labels), batch_size):
        sl = slice(start, start + batch_size)
        gamma = model.forward(x_mtm[sl], x_pg[sl], training=False)
        decisions = (gamma > 0.5).astype(np.uint8)
        correct += int((decisions == labels[sl]).sum())
        total += decisions.size
    return correct / total


def train_model(model: DsffModel, train_mtm, train_pg, train_labels,
                val_mtm, val_pg, val_labels,
                settings: TrainSettings) -> TrainResult:
    """Train in place; the model ends at its best-validation state."""
    n_train = len(train_labels)
    if n_train == 0 or len(val_labels) == 0:
        raise ConfigurationError("training and validation sets must be non-empty")

    opt = Adam(lr=settings.lr, beta1=settings.beta1, beta2=settings.beta2,
               eps=settings.eps)
    rng = np.random.default_rng(settings.shuffle_seed)
    result = TrainResult()
    best_state = model.state_copy()
    best_acc = -np.inf
    since_improve = 0
    since_lr_drop = 0

    for epoch in range(settings.max_epochs):
        order = rng.permutation(n_train)
        loss_sum = 0.0
        for start in range(0, n_train, settings.batch_size):
            batch = order[start : start + settings.batch_size]
            gamma = model.forward(
                train_mtm[batch], train_pg[batch], training=True
            )
            loss = bce_loss(gamma, train_labels[batch])
            loss_sum += loss * len(batch)
            model.backward(bce_grad(gamma, train_labels[batch]))
            opt.step(model.parameters(), model.gradients())

        val_acc = subband_accuracy(model, val_mtm, val_pg, val_labels)
        result.history.append(
            EpochRecord(epoch, loss_sum / n_train, val_acc, opt.lr)
        )

        if val_acc > best_acc:
            best_acc = val_acc
            best_state = model.state_copy()
            result.best_val_accuracy = val_acc
            result.best_epoch = epoch
            since_improve = 0
            since_lr_drop = 0
        else:
            since_improve += 1
            since_lr_drop += 1

        if since_improve >= settings.patience_stop:
            break
        if since_lr_drop >= settings.patience_lr:
            opt.lr *= 0.1
            since_lr_drop = 0

    model.load_state(best_state)
    return result


def write_history_csv(history, path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_accuracy", "lr"])
        for rec in history:
            writer.writerow(
                [rec.epoch, repr(rec.train_loss), repr(rec.val_accuracy), repr(rec.lr)]
            )

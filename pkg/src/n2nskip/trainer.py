"""Mini-batch SGD with momentum, coupled weight decay and a step schedule."""

import csv
from dataclasses import asdict, dataclass, field
import io
import math

import numpy as np

from n2nskip.errors import ConvergenceError, DimensionError
from n2nskip.net import forward, loss_and_grads


@dataclass(frozen=True)
class HyperParams:
    lr0: float = 0.05
    momentum: float = 0.9
    decay_factor: float = 0.5
    decay_every: int = 30
    weight_decay: float = 0.0005
    batch_size: int = 128
    epochs: int = 100

    def __post_init__(self):
        if self.lr0 <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be positive; momentum and weight decay non-negative")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError(f"decay_factor must lie in (0, 1), got {self.decay_factor}")
        if self.decay_every < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("decay_every and batch_size must be positive, epochs non-negative")


def lr_at(epoch, hp):
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return hp.lr0 * hp.decay_factor ** (epoch // hp.decay_every)


@dataclass
class Velocity:
    seq: list
    biases: list
    skips: list

    @classmethod
    def zeros_like(cls, net):
        return cls(
            [np.zeros_like(w) for w in net.seq_weights],
            [np.zeros_like(b) for b in net.biases],
            [np.zeros_like(s.weight) for s in net.skips],
        )


def _update(w, v, g, mask, lr, hp, decay=True):
    if w.shape != g.shape or w.shape != v.shape:
        raise DimensionError(f"parameter {w.shape}, gradient {g.shape}, velocity {v.shape} differ")
    v *= hp.momentum
    v += g
    if decay and hp.weight_decay:
        v += hp.weight_decay * w
    w -= lr * v
    if mask is not None:
        # masked entries stay exactly zero in both weight and velocity
        w[~mask] = 0.0
        v[~mask] = 0.0


def sgd_step(net, grads, vel, lr, hp):
    """In-place momentum step: ``v = mu*v + g + wd*w``, ``w -= lr*v``.

    Weight decay is skipped for biases.
    """
    if len(grads.skips) != len(net.skips) or len(vel.skips) != len(net.skips):
        raise DimensionError("gradients or velocity do not match the network's skips")
    for i, w in enumerate(net.seq_weights):
        _update(w, vel.seq[i], grads.seq[i], net.seq_masks[i], lr, hp)
        _update(net.biases[i], vel.biases[i], grads.biases[i], None, lr, hp, decay=False)
    for i, s in enumerate(net.skips):
        _update(s.weight, vel.skips[i], grads.skips[i], s.mask, lr, hp)


@dataclass
class History:
    epoch: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    def append(self, **record):
        for key, value in record.items():
            getattr(self, key).append(value)

    def to_dict(self):
        return asdict(self)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "lr", "train_loss", "train_acc", "test_acc"])
        for row in zip(self.epoch, self.lr, self.train_loss, self.train_acc, self.test_acc):
            writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
        return buf.getvalue()


def predict(net, x):
    """Class predictions; ties go to the lowest class index."""
    logits = forward(net, np.asarray(x, dtype=np.float64)).a[-1]
    return np.argmax(logits, axis=1)


def evaluate(net, x, y):
    y = np.asarray(y)
    if len(y) == 0:
        return 0.0
    return float(np.mean(predict(net, x) == y))


def train(net, data, hp, seed):
    """Train ``net`` in place on ``data.train`` and return the per-epoch history."""
    if data.n_train == 0:
        raise ValueError("training split is empty")
    rng = np.random.default_rng([seed, 303])
    vel = Velocity.zeros_like(net)
    hist = History()
    n = data.n_train
    for epoch in range(hp.epochs):
        lr = lr_at(epoch, hp)
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hp.batch_size):
            idx = perm[start:start + hp.batch_size]
            grads = loss_and_grads(net, data.x_train[idx], data.y_train[idx])
            if not math.isfinite(grads.loss):
                raise ConvergenceError(f"training loss became non-finite at epoch {epoch}")
            total += grads.loss * len(idx)
            sgd_step(net, grads, vel, lr, hp)
        hist.append(
            epoch=epoch,
            lr=lr,
            train_loss=total / n,
            train_acc=evaluate(net, data.x_train, data.y_train),
            test_acc=evaluate(net, data.x_test, data.y_test),
        )
    return hist

"""Desk-scale datasets: Gaussian blobs and CSV ingestion."""

import csv
from dataclasses import dataclass, field
import math

import numpy as np

from n2nskip.errors import ConfigError

TRAIN_FRACTION = 0.8
STD_EPS = 1e-12


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        for y in (self.y_train, self.y_test):
            if len(y) and (y.min() < 0 or y.max() >= self.classes):
                raise ConfigError(f"labels must lie in [0, {self.classes})")

    @property
    def feature_dim(self):
        return self.x_train.shape[1]

    @property
    def n_train(self):
        return len(self.y_train)

    @property
    def n_test(self):
        return len(self.y_test)


def _split_point(n):
    return int(math.floor(TRAIN_FRACTION * n + 0.5))


def gen_blobs(classes, dim, per_class, spread, seed):
    """Isotropic Gaussian clusters around means drawn uniformly in [-1, 1]^dim.

    Samples are shuffled and split 80/20 into train and test.
    """
    if classes < 2 or dim < 1 or per_class < 1:
        raise ConfigError(
            f"degenerate blob sizes: classes={classes}, dim={dim}, per_class={per_class}"
        )
    if spread < 0:
        raise ConfigError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng([seed, 404])
    means = rng.uniform(-1.0, 1.0, size=(classes, dim))
    y = np.repeat(np.arange(classes), per_class)
    x = means[y] + spread * rng.standard_normal((len(y), dim))
    perm = rng.permutation(len(y))
    x, y = x[perm], y[perm]
    cut = _split_point(len(y))
    desc = {
        "kind": "blobs",
        "classes": classes,
        "dim": dim,
        "per_class": per_class,
        "spread": spread,
        "seed": seed,
    }
    return Dataset(x[:cut], y[:cut], x[cut:], y[cut:], classes, desc)


def standardize(x_train, x_test):
    """Scale features with train-split statistics; constant columns become 0."""
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    flat = std < STD_EPS
    scale = np.where(flat, 1.0, std)
    out = []
    for x in (x_train, x_test):
        z = (x - mean) / scale
        z[:, flat] = 0.0
        out.append(z)
    return out[0], out[1], mean, std


def _parse_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigError(f"{path}: no rows")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = rows[0], rows[1:]
    width = len(header) if header else len(rows[0]) if rows else 0
    feats, labels, linenos = [], [], []
    offset = 2 if header else 1
    for i, row in enumerate(rows):
        lineno = i + offset
        if len(row) != width:
            raise ConfigError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ConfigError(f"{path}: row {lineno}: non-numeric cell ({exc})") from None
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"{path}: row {lineno}: non-finite value")
        label = vals[-1]
        if label != int(label):
            raise ConfigError(f"{path}: row {lineno}: label {row[-1]!r} is not an integer")
        feats.append(vals[:-1])
        labels.append(int(label))
        linenos.append(lineno)
    x = np.array(feats, dtype=np.float64).reshape(len(feats), width - 1)
    return x, np.array(labels, dtype=np.int64), linenos


def load_csv(path, classes, standardize_features=True):
    """Read ``features..., label`` rows; the first 80% of rows form the train split."""
    x, y, linenos = _parse_rows(path)
    if x.shape[1] < 1:
        raise ConfigError(f"{path}: rows need at least one feature and a label")
    for lineno, label in zip(linenos, y):
        if label < 0 or label >= classes:
            raise ConfigError(f"{path}: row {lineno}: label {label} not in [0, {classes})")
    cut = _split_point(len(y))
    x_train, x_test = x[:cut], x[cut:]
    if standardize_features and cut > 0:
        x_train, x_test, _, _ = standardize(x_train, x_test)
    desc = {"kind": "csv", "path": str(path), "classes": classes}
    return Dataset(x_train, y[:cut], x_test, y[cut:], classes, desc)


def save_csv(data, path):
    """Write train rows then test rows so ``load_csv`` reproduces the split."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(data.feature_dim)] + ["label"])
        for x, y in ((data.x_train, data.y_train), (data.x_test, data.y_test)):
            for row, label in zip(x, y):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])

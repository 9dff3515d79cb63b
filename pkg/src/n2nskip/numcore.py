"""Dense float64 primitives shared by the rest of the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and masks are
boolean arrays of the same shape. Batched helpers accept a leading batch axis.
"""

import numpy as np

from n2nskip.errors import DimensionError


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def as_mask(m):
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D mask, got shape {m.shape}")
    if m.dtype != np.bool_:
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("mask entries must be 0 or 1")
        m = m.astype(bool)
    return m


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def masked_apply(w, m):
    """Return ``w * m`` with masked-out entries exactly +0.0."""
    w = np.asarray(w, dtype=np.float64)
    m = np.asarray(m, dtype=bool)
    if w.shape != m.shape:
        raise DimensionError(f"weight shape {w.shape} does not match mask shape {m.shape}")
    return np.where(m, w, 0.0)


def density(m):
    m = np.asarray(m, dtype=bool)
    return float(m.sum()) / m.size if m.size else 0.0


def relu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0)


def relu_grad(x):
    # subgradient at exactly 0 is taken as 0
    x = np.asarray(x, dtype=np.float64)
    return (x > 0.0).astype(np.float64)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def softmax_xent(logits, label):
    """Cross-entropy of ``softmax(logits)`` against an integer label.

    Returns ``(loss, grad)`` with ``grad = softmax(logits) - onehot(label)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DimensionError(f"expected a logit vector, got shape {logits.shape}")
    label = int(label)
    if not 0 <= label < logits.shape[0]:
        raise IndexError(f"label {label} out of range for {logits.shape[0]} classes")
    logp = log_softmax(logits)
    grad = np.exp(logp)
    grad[label] -= 1.0
    return float(-logp[label]), grad


def softmax_xent_batch(logits, labels):
    """Mean cross-entropy over a batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"logits {logits.shape} and labels {labels.shape} are not a matching batch"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise IndexError(f"labels must lie in [0, {logits.shape[1]})")
    n = logits.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n

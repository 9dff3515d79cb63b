"""Masked MLP with optional sparse neuron-to-neuron skip connections.

Layer indices refer to activations: ``a[0]`` is the input and ``a[L]`` the
logits. Sequential weight ``seq_weights[i]`` maps ``a[i]`` to ``z[i + 1]``
and has shape ``(dims[i + 1], dims[i])``. A skip from ``l`` to ``l + k``
contributes ``relu((W_skip * M_skip) @ a[l])`` to ``z[l + k]`` before the
outer nonlinearity::

    a[l + k] = relu(z_seq[l + k] + relu(skip(a[l])))

The final layer emits raw logits.
"""

from dataclasses import dataclass, field

import numpy as np

from n2nskip.errors import DimensionError
from n2nskip.numcore import masked_apply, relu, softmax_xent_batch


@dataclass(frozen=True)
class NetworkSpec:
    layer_dims: tuple
    k: int = 2
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 3:
            raise DimensionError(f"need at least two weight layers, got layer_dims={list(dims)}")
        if any(d < 1 for d in dims):
            raise DimensionError(f"layer sizes must be positive, got {list(dims)}")
        if self.k < 2:
            raise DimensionError(f"skip span k must be >= 2, got {self.k}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class SkipConn:
    from_layer: int
    to_layer: int
    weight: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.to_layer - self.from_layer < 2:
            raise DimensionError(
                f"skip {self.from_layer}->{self.to_layer} must bypass at least one layer"
            )
        if self.weight.shape != self.mask.shape:
            raise DimensionError(
                f"skip weight {self.weight.shape} does not match mask {self.mask.shape}"
            )

    @property
    def span(self):
        return self.to_layer - self.from_layer

    @property
    def nnz(self):
        return int(self.mask.sum())


@dataclass
class Network:
    layer_dims: tuple
    k: int
    seq_weights: list
    seq_masks: list
    biases: list
    skips: list = field(default_factory=list)

    @property
    def num_layers(self):
        """Number of sequential weight layers."""
        return len(self.seq_weights)

    @property
    def num_neurons(self):
        return int(sum(self.layer_dims))

    @property
    def reference_params(self):
        """Sequential weight count of the dense reference network."""
        dims = self.layer_dims
        return int(sum(dims[i] * dims[i + 1] for i in range(len(dims) - 1)))

    def seq_nnz(self):
        return int(sum(int(m.sum()) for m in self.seq_masks))

    def skip_nnz(self):
        return int(sum(s.nnz for s in self.skips))

    def total_nnz(self):
        return self.seq_nnz() + self.skip_nnz()

    def effective_seq(self, i):
        return masked_apply(self.seq_weights[i], self.seq_masks[i])

    def copy(self):
        return Network(
            layer_dims=tuple(self.layer_dims),
            k=self.k,
            seq_weights=[w.copy() for w in self.seq_weights],
            seq_masks=[m.copy() for m in self.seq_masks],
            biases=[b.copy() for b in self.biases],
            skips=[
                SkipConn(s.from_layer, s.to_layer, s.weight.copy(), s.mask.copy())
                for s in self.skips
            ],
        )

    def skip_pairs(self, k=None):
        """Eligible ``(l, l + k)`` pairs: every source layer with ``l + k <= L``."""
        k = self.k if k is None else k
        L = len(self.layer_dims) - 1
        return [(l, l + k) for l in range(0, L - k + 1)]


def he_normal(rng, fan_out, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))


def build_network(spec):
    """Dense network with He-normal weights, zero biases and no skips."""
    rng = np.random.default_rng([spec.seed, 0])
    dims = spec.layer_dims
    weights, masks, biases = [], [], []
    for i in range(len(dims) - 1):
        weights.append(he_normal(rng, dims[i + 1], dims[i]))
        masks.append(np.ones((dims[i + 1], dims[i]), dtype=bool))
        biases.append(np.zeros(dims[i + 1]))
    return Network(tuple(dims), spec.k, weights, masks, biases, [])


@dataclass
class Activations:
    a: list
    z: list
    skip_pre: dict
    single: bool = False

    @property
    def logits(self):
        return self.a[-1][0] if self.single else self.a[-1]


def _incoming_skips(net):
    incoming = {}
    for idx, s in enumerate(net.skips):
        incoming.setdefault(s.to_layer, []).append(idx)
    return incoming


def forward(net, x):
    """Forward pass for one input vector or a ``(batch, d0)`` array."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise DimensionError(
            f"input has {x.shape[-1]} features, network expects {net.layer_dims[0]}"
        )
    L = net.num_layers
    incoming = _incoming_skips(net)
    a = [x]
    z = [None]
    skip_pre = {}
    for j in range(1, L + 1):
        zj = a[j - 1] @ net.effective_seq(j - 1).T + net.biases[j - 1]
        for idx in incoming.get(j, ()):
            s = net.skips[idx]
            u = a[s.from_layer] @ masked_apply(s.weight, s.mask).T
            skip_pre[idx] = u
            zj = zj + relu(u)
        z.append(zj)
        a.append(relu(zj) if j < L else zj)
    return Activations(a, z, skip_pre, single)


@dataclass
class Gradients:
    seq: list
    biases: list
    skips: list
    loss: float = float("nan")


def backward(net, acts, labels):
    """Gradients of the mean softmax cross-entropy over the batch in ``acts``.

    Gradients at masked positions are exactly zero.
    """
    L = net.num_layers
    if len(acts.a) != L + 1 or any(
        acts.a[i].shape[1] != net.layer_dims[i] for i in range(L + 1)
    ):
        raise DimensionError("activations do not belong to this network")
    for idx, s in enumerate(net.skips):
        if s.to_layer <= L and idx not in acts.skip_pre:
            raise DimensionError("activations were computed before skips were added")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    loss, dz = softmax_xent_batch(acts.a[L], labels)

    incoming = _incoming_skips(net)
    da = [np.zeros_like(a) for a in acts.a]
    g_seq = [None] * L
    g_bias = [None] * L
    g_skip = [None] * len(net.skips)
    for j in range(L, 0, -1):
        if j < L:
            dz = da[j] * (acts.z[j] > 0.0)
        g_seq[j - 1] = np.where(net.seq_masks[j - 1], dz.T @ acts.a[j - 1], 0.0)
        g_bias[j - 1] = dz.sum(axis=0)
        da[j - 1] += dz @ net.effective_seq(j - 1)
        for idx in incoming.get(j, ()):
            s = net.skips[idx]
            du = dz * (acts.skip_pre[idx] > 0.0)
            g_skip[idx] = np.where(s.mask, du.T @ acts.a[s.from_layer], 0.0)
            da[s.from_layer] += du @ masked_apply(s.weight, s.mask)
    return Gradients(g_seq, g_bias, g_skip, loss)


def loss_and_grads(net, x, labels):
    acts = forward(net, x)
    return backward(net, acts, labels)


def loss(net, x, labels):
    acts = forward(net, x)
    logits = acts.a[-1]
    value, _ = softmax_xent_batch(logits, np.atleast_1d(np.asarray(labels)))
    return value

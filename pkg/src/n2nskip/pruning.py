"""Prune-at-initialization mask generators.

Two methods are provided:

* ``random_prune`` -- uniform random masks, budget split across layers in
  proportion to layer size, followed by a degree repair so that every
  non-input neuron keeps an incoming edge and every hidden neuron keeps an
  outgoing edge.
* ``csp_prune`` -- connection-sensitivity pruning: keep the global top-k
  weights by ``|w * dL/dw|`` measured on one batch at initialization.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from n2nskip.errors import DimensionError, InfeasibleDensityError
from n2nskip.net import loss_and_grads


@dataclass
class MaskSet:
    seq_masks: list
    target_density: float
    origin: str = "dense"
    # per-layer saliencies, kept so later thinning can follow the same ranking
    saliency: list = field(default=None, repr=False)

    def nnz(self):
        return int(sum(int(m.sum()) for m in self.seq_masks))

    def total(self):
        return int(sum(m.size for m in self.seq_masks))

    def density(self):
        return self.nnz() / self.total()


def round_half_up(x):
    return int(math.floor(x + 0.5))


def _check_density(d):
    if not (0.0 < d <= 1.0) or not math.isfinite(d):
        raise InfeasibleDensityError(f"density must lie in (0, 1], got {d}")


def allocate(total, weights, floors=None, caps=None):
    """Split an integer ``total`` across slots proportionally to ``weights``.

    Every slot receives at least ``floors[i]`` and at most ``caps[i]``.
    Fractional parts are resolved by largest remainder, ties toward the lower
    index, so the result sums to ``total`` exactly.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n = len(weights)
    floors = np.zeros(n, dtype=np.int64) if floors is None else np.asarray(floors, dtype=np.int64)
    caps = np.full(n, np.iinfo(np.int64).max // 4) if caps is None else np.asarray(caps, dtype=np.int64)
    if floors.sum() > total or caps.sum() < total or np.any(floors > caps):
        raise InfeasibleDensityError(
            f"cannot place {total} connections within floors {floors.tolist()} "
            f"and capacities {caps.tolist()}"
        )
    # water-fill: pin slots whose proportional share violates a bound
    pinned = np.full(n, -1, dtype=np.int64)
    while True:
        free = pinned < 0
        remaining = total - pinned[~free].sum()
        wsum = weights[free].sum()
        share = np.zeros(n)
        if wsum > 0:
            share[free] = remaining * weights[free] / wsum
        else:
            share[free] = remaining / max(free.sum(), 1)
        low = free & (share < floors)
        high = free & (share > caps)
        if not low.any() and not high.any():
            break
        pinned[low] = floors[low]
        pinned[high] = caps[high]
    counts = np.where(pinned >= 0, pinned, np.floor(share).astype(np.int64))
    counts = np.maximum(counts, floors)
    short = total - counts.sum()
    frac = np.where(pinned >= 0, -1.0, share - np.floor(share))
    order = np.argsort(-frac, kind="stable")
    i = 0
    while short > 0:
        j = order[i % n]
        if pinned[j] < 0 and counts[j] < caps[j]:
            counts[j] += 1
            short -= 1
        i += 1
        if i > 4 * n * (total + 1):
            raise InfeasibleDensityError("allocation did not converge")
    return counts


def degree_floors(layer_dims):
    """Minimum connections per layer for the RP coverage guarantee.

    Targets (hidden or output neurons) need an incoming edge; sources need an
    outgoing edge unless they are input features.
    """
    floors = []
    for i in range(len(layer_dims) - 1):
        rows, cols = layer_dims[i + 1], layer_dims[i]
        floors.append(max(rows, cols if i > 0 else 0))
    return floors


def _backbone(rng, rows, cols, cols_required, budget):
    """Random minimum edge cover of the required neurons plus uniform filler."""
    sel = np.zeros((rows, cols), dtype=bool)
    pr = rng.permutation(rows)
    pc = rng.permutation(cols) if cols_required else rng.integers(0, cols, size=rows)
    m = max(len(pr), len(pc)) if cols_required else rows
    for i in range(m):
        sel[pr[i % len(pr)], pc[i % len(pc)]] = True
    extra = budget - int(sel.sum())
    if extra > 0:
        free = np.flatnonzero(~sel.ravel())
        sel.ravel()[rng.choice(free, size=extra, replace=False)] = True
    return sel


def _random_layer(rng, rows, cols, budget, cols_required):
    rank = rng.permutation(rows * cols).reshape(rows, cols)
    sel = rank < budget
    protected = np.zeros_like(sel)
    while True:
        indeg = sel.sum(axis=1)
        outdeg = sel.sum(axis=0)
        lack_r = np.flatnonzero(indeg == 0)
        lack_c = np.flatnonzero(outdeg == 0) if cols_required else np.empty(0, dtype=np.int64)
        if len(lack_r) == 0 and len(lack_c) == 0:
            return sel
        if len(lack_r):
            r = rng.choice(lack_r)
            c = rng.choice(lack_c) if len(lack_c) else rng.integers(cols)
        else:
            c = rng.choice(lack_c)
            r = rng.integers(rows)
        sel[r, c] = True
        protected[r, c] = True
        indeg[r] += 1
        outdeg[c] += 1
        removable = sel & ~protected & (indeg[:, None] >= 2)
        if cols_required:
            removable &= outdeg[None, :] >= 2
        if not removable.any():
            return _backbone(rng, rows, cols, cols_required, budget)
        # drop the lowest-priority random pick that keeps coverage intact
        flat = np.where(removable, rank, -1)
        sel.ravel()[int(np.argmax(flat))] = False


def min_rp_density(layer_dims):
    dims = list(layer_dims)
    total = sum(dims[i] * dims[i + 1] for i in range(len(dims) - 1))
    return sum(degree_floors(dims)) / total


def random_prune(net, d, seed):
    """Randomized pruning at initialization with per-neuron degree repair."""
    _check_density(d)
    dims = list(net.layer_dims)
    sizes = [m.size for m in net.seq_masks]
    total = sum(sizes)
    if d == 1.0:
        return MaskSet([np.ones_like(m, dtype=bool) for m in net.seq_masks], 1.0, "rp")
    target = round_half_up(d * total)
    floors = degree_floors(dims)
    if target < sum(floors):
        dmin = sum(floors) / total
        raise InfeasibleDensityError(
            f"density {d} leaves {target} connections but {sum(floors)} are needed so every "
            f"neuron keeps an edge; minimum feasible density is {dmin:.6f}",
            min_density=dmin,
        )
    budgets = allocate(target, sizes, floors=floors, caps=sizes)
    rng = np.random.default_rng([seed, 101])
    masks = []
    for i, b in enumerate(budgets):
        rows, cols = dims[i + 1], dims[i]
        masks.append(_random_layer(rng, rows, cols, int(b), cols_required=i > 0))
    return MaskSet(masks, float(d), "rp")


def snip_saliency(net, x, labels, scale=1.0):
    """Connection sensitivity ``|w * dL/dw|`` of every sequential weight.

    ``L`` is the mean cross-entropy over the batch, multiplied by ``scale``.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("saliency needs a non-empty batch")
    if labels.shape != (x.shape[0],):
        raise DimensionError(f"{x.shape[0]} samples but {labels.shape} labels")
    grads = loss_and_grads(net, x, labels)
    return [np.abs(net.effective_seq(i) * g * scale) for i, g in enumerate(grads.seq)]


def top_k_masks(saliency, n):
    """Global top-``n`` by saliency, ties broken by (layer, row, col)."""
    flat = np.concatenate([s.ravel() for s in saliency])
    order = np.argsort(-flat, kind="stable")
    keep = np.zeros(flat.size, dtype=bool)
    keep[order[:n]] = True
    masks, start = [], 0
    for s in saliency:
        masks.append(keep[start:start + s.size].reshape(s.shape))
        start += s.size
    return masks


def csp_prune(net, x, labels, d, saliency=None):
    """Connection-sensitivity pruning: keep the global top ``round(d * total)``."""
    _check_density(d)
    if saliency is None:
        saliency = snip_saliency(net, x, labels)
    total = sum(s.size for s in saliency)
    n = round_half_up(d * total)
    if n < 1:
        raise InfeasibleDensityError(
            f"density {d} keeps no connections; minimum feasible density is {1 / total:.6g}",
            min_density=1 / total,
        )
    return MaskSet(top_k_masks(saliency, n), float(d), "csp", saliency)

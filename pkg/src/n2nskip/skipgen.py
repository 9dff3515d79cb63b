"""Reallocate part of a pruned network's budget to random N2NSkip connections."""

from dataclasses import dataclass
import math

import numpy as np

from n2nskip.errors import DimensionError, InfeasibleDensityError
from n2nskip.net import SkipConn, he_normal
from n2nskip.pruning import allocate, round_half_up, top_k_masks


@dataclass(frozen=True)
class SkipBudget:
    total_density: float
    split_ratio: float = 0.5
    k: int = 2

    def __post_init__(self):
        r = self.split_ratio
        if not (0.0 < r < 1.0) or not math.isfinite(r):
            raise InfeasibleDensityError(f"split ratio must lie strictly in (0, 1), got {r}")
        if not (0.0 < self.total_density <= 1.0):
            raise InfeasibleDensityError(
                f"density must lie in (0, 1], got {self.total_density}"
            )
        if self.k < 2:
            raise DimensionError(f"skip span k must be >= 2, got {self.k}")


def density(net):
    """Sequential plus skip nonzeros over the dense reference parameter count."""
    return net.total_nnz() / net.reference_params


def _thin_random(rng, masks, keep_total):
    nnz = [int(m.sum()) for m in masks]
    keep = allocate(keep_total, nnz, caps=nnz)
    out = []
    for m, n in zip(masks, keep):
        on = np.flatnonzero(m.ravel())
        thin = np.zeros(m.size, dtype=bool)
        thin[rng.choice(on, size=int(n), replace=False)] = True
        out.append(thin.reshape(m.shape))
    return out


def _thin_by_saliency(masks, saliency, keep_total):
    # restrict the ranking to currently kept positions, then take the top
    ranked = [np.where(m, s, -1.0) for m, s in zip(masks, saliency)]
    return top_k_masks(ranked, keep_total)


def insert_n2nskip(net, masks, budget, seed):
    """Return a new network whose budget is split between sequential and skip weights.

    Sequential masks are thinned to ``d * (1 - r)`` (randomly for RP masks,
    lowest saliency first for CSP masks) and the freed connections are placed
    uniformly at random in one skip matrix per eligible ``(l, l + k)`` pair.
    """
    if net.skips:
        raise ValueError("network already has skip connections")
    if len(masks.seq_masks) != net.num_layers or any(
        m.shape != w.shape for m, w in zip(masks.seq_masks, net.seq_weights)
    ):
        raise DimensionError("mask set does not match the network's layers")
    L = net.num_layers
    if budget.k > L:
        raise DimensionError(f"skip span k={budget.k} exceeds network depth {L}")
    pairs = net.skip_pairs(budget.k)

    total_ref = net.reference_params
    before = masks.nnz()
    seq_keep = round_half_up(budget.total_density * (1.0 - budget.split_ratio) * total_ref)
    seq_keep = min(seq_keep, before)
    skip_n = before - seq_keep
    dims = net.layer_dims
    caps = [dims[t] * dims[f] for f, t in pairs]
    if seq_keep < 1 or skip_n < 1 or skip_n > sum(caps):
        raise InfeasibleDensityError(
            f"cannot split {before} connections into {seq_keep} sequential and "
            f"{skip_n} skip connections (skip capacity {sum(caps)})"
        )

    rng = np.random.default_rng([seed, 202])
    if masks.origin == "csp" and masks.saliency is not None:
        seq_masks = _thin_by_saliency(masks.seq_masks, masks.saliency, seq_keep)
    else:
        seq_masks = _thin_random(rng, masks.seq_masks, seq_keep)

    counts = allocate(skip_n, caps, caps=caps)
    skips = []
    for (f, t), n in zip(pairs, counts):
        rows, cols = dims[t], dims[f]
        w = he_normal(rng, rows, cols)
        m = np.zeros(rows * cols, dtype=bool)
        m[rng.choice(rows * cols, size=int(n), replace=False)] = True
        m = m.reshape(rows, cols)
        skips.append(SkipConn(f, t, np.where(m, w, 0.0), m))

    out = net.copy()
    out.k = budget.k
    out.seq_masks = [m.copy() for m in seq_masks]
    out.seq_weights = [np.where(m, w, 0.0) for m, w in zip(seq_masks, out.seq_weights)]
    out.skips = skips
    return out


def apply_masks(net, masks):
    """Copy of ``net`` gated by ``masks`` with masked weights set to exactly 0."""
    out = net.copy()
    out.seq_masks = [m.copy() for m in masks.seq_masks]
    out.seq_weights = [np.where(m, w, 0.0) for m, w in zip(masks.seq_masks, out.seq_weights)]
    return out

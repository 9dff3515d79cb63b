"""Heat-diffusion connectivity analysis of layered networks.

A network is viewed as an undirected graph over all of its neurons (inputs
first, then each layer in order). From its adjacency ``W`` we form the
Laplacian ``L = D - W``, diagonalize it as ``L = U diag(lam) U^T``, and use
the heat kernel ``H(t) = U exp(-lam t) U^T`` to diffuse heat injected at the
input neurons.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from n2nskip.errors import ConvergenceError, DimensionError, IncomparableError

DEFAULT_T = 1.5
DEFAULT_THRESHOLD = 0.97
MAX_SWEEPS = 100


class DegeneracyWarning(UserWarning):
    """A scree curve decreased; usually a sign of a degenerate spectrum."""


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    @property
    def n(self):
        return len(self.eigenvalues)


@dataclass
class HeatSignature:
    values: np.ndarray
    t: float
    sources: np.ndarray

    @property
    def n(self):
        return len(self.values)


def layer_offsets(layer_dims):
    return np.concatenate([[0], np.cumsum(layer_dims)]).astype(int)


def to_adjacency(net, weighted=True):
    """Symmetric adjacency over all neurons, ``|w|`` or 1 per unmasked weight."""
    off = layer_offsets(net.layer_dims)
    n = int(off[-1])
    A = np.zeros((n, n))

    def put(src, dst, w, m):
        block = np.abs(np.where(m, w, 0.0)) if weighted else m.astype(np.float64)
        A[off[dst]:off[dst + 1], off[src]:off[src + 1]] = block
        A[off[src]:off[src + 1], off[dst]:off[dst + 1]] = block.T

    for i, (w, m) in enumerate(zip(net.seq_weights, net.seq_masks)):
        put(i, i + 1, w, m)
    for s in net.skips:
        put(s.from_layer, s.to_layer, s.weight, s.mask)
    return A


def check_symmetric(W, name="matrix"):
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {W.shape}")
    if not np.array_equal(W, W.T):
        raise ValueError(f"{name} is not symmetric")
    return W


def graph_laplacian(W):
    W = check_symmetric(W, "adjacency")
    if np.any(W < 0):
        raise ValueError("adjacency has negative entries")
    if np.any(np.diag(W) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    L = -W.copy()
    # correctly rounded degrees, independent of summation order
    L[np.diag_indices_from(L)] = [math.fsum(row) for row in W]
    return L


def round_robin(n):
    """Fixed tournament schedule: ``n - 1`` (or ``n``) rounds of disjoint pairs.

    Every unordered pair ``(p, q)`` appears exactly once per sweep.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(A):
    off = A.copy()
    off[np.diag_indices_from(off)] = 0.0
    return float(np.linalg.norm(off))


def eig_sym(L, max_sweeps=MAX_SWEEPS, rtol=1e-12):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, grouped by a round-robin
    schedule so that the pairs of a round are disjoint and can be rotated
    together; the order is fixed, so results are deterministic. Iteration
    stops when the off-diagonal Frobenius norm is at most ``rtol * ||L||_F``.
    """
    A = check_symmetric(L).copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = float(np.linalg.norm(A))
    tol = rtol * scale
    rounds = round_robin(n) if n > 1 else []
    sweeps = 0
    off = _off_norm(A)
    while off > tol:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off:.3e}, tolerance {tol:.3e})",
                residual=off,
                sweeps=sweeps,
            )
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            with np.errstate(over="ignore"):
                theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = A[P, :], A[Q, :]
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, P], A[:, Q]
            A[:, P] = cp * c - cq * s
            A[:, Q] = cp * s + cq * c
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vp, vq = V[:, P], V[:, Q]
            V[:, P] = vp * c - vq * s
            V[:, Q] = vp * s + vq * c
        sweeps += 1
        off = _off_norm(A)
    lam = np.diag(A).copy()
    order = np.argsort(lam, kind="stable")
    return Spectrum(lam[order], V[:, order], sweeps)


def heat_matrix(spec, t):
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"diffusion time must be finite and >= 0, got {t}")
    U = spec.eigenvectors
    H = (U * np.exp(-spec.eigenvalues * t)) @ U.T
    # U diag U^T is symmetric in exact arithmetic; keep it bit-symmetric
    return 0.5 * (H + H.T)


def input_sources(layer_dims):
    """Heat sources at the input neurons, sinks everywhere else."""
    A = np.zeros(int(sum(layer_dims)))
    A[: layer_dims[0]] = 1.0
    return A


def heat_signature(H, sources, t=None):
    H = np.asarray(H, dtype=np.float64)
    sources = np.asarray(sources, dtype=np.float64)
    if sources.ndim != 1 or H.shape != (len(sources), len(sources)):
        raise DimensionError(
            f"heat matrix {H.shape} does not match {sources.shape[0]} source flags"
        )
    if not np.all((sources == 0.0) | (sources == 1.0)):
        raise ValueError("sources must be a 0/1 vector")
    return HeatSignature(H @ sources, t, sources.copy())


def signature_distance(s_ref, s_prune):
    """Euclidean norm of the difference of two heat signatures."""
    if s_ref.n != s_prune.n:
        raise IncomparableError(f"signatures have {s_ref.n} and {s_prune.n} nodes")
    if s_ref.t is not None and s_prune.t is not None and s_ref.t != s_prune.t:
        raise IncomparableError(f"signatures taken at t={s_ref.t} and t={s_prune.t}")
    return float(np.linalg.norm(s_ref.values - s_prune.values))


def k_from_percent(p, n):
    """Number of eigenvalues corresponding to a fraction ``p`` of the ``n - 1`` usable ones."""
    return int(min(max(math.floor(p * (n - 1) + 0.5), 1), n - 1))


def alpha(spec, K, t):
    """Share of the heat-kernel trace (first eigenvalue excluded) held by the
    ``K`` smallest remaining eigenvalues."""
    n = spec.n
    if not 1 <= K <= n - 1:
        raise ValueError(f"K must lie in [1, {n - 1}], got {K}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    lam = spec.eigenvalues[1:]
    # shifting by the smallest term cancels in the ratio and avoids underflow
    terms = np.exp(-t * (lam - lam[0]))
    return float(terms[:K].sum() / terms.sum())


def scree_curve(spec, K, t_grid):
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ValueError("time grid is empty")
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("time grid must be strictly ascending")
    curve = [(t, alpha(spec, K, t)) for t in t_grid]
    drops = [b[1] - a[1] for a, b in zip(curve, curve[1:]) if b[1] < a[1] - 1e-12]
    if drops:
        warnings.warn(
            f"scree curve decreases by up to {-min(drops):.3e}; spectrum may be degenerate",
            DegeneracyWarning,
            stacklevel=2,
        )
    return curve


def saturation_time(curve, threshold=DEFAULT_THRESHOLD):
    """First grid time with ``alpha >= threshold``; ``inf`` if never reached."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if not curve:
        raise ValueError("curve is empty")
    for t, a in curve:
        if a >= threshold:
            return t
    return math.inf


def default_t_grid(t_max=1000.0, steps=241):
    """Log-spaced grid from 1e-3 to ``t_max`` with ``t = 0`` prepended."""
    return [0.0] + [float(v) for v in np.geomspace(1e-3, t_max, steps - 1)]


def write_edge_list(W, fh):
    """Write ``n <count>`` then one ``u v weight`` line per edge with ``u < v``."""
    W = check_symmetric(W, "adjacency")
    fh.write(f"n {W.shape[0]}\n")
    rows, cols = np.nonzero(np.triu(W, 1))
    for u, v in zip(rows, cols):
        fh.write(f"{u} {v} {float(W[u, v])!r}\n")


def read_edge_list(fh):
    header = fh.readline().split()
    if len(header) != 2 or header[0] != "n":
        raise ValueError("edge list must start with 'n <count>'")
    n = int(header[1])
    W = np.zeros((n, n))
    for lineno, line in enumerate(fh, start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'u v weight'")
        u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise ValueError(f"line {lineno}: invalid edge {u} {v}")
        W[u, v] = W[v, u] = w
    return W


def scree_csv(curve):
    lines = ["t,alpha"] + [f"{t:.9g},{a:.9g}" for t, a in curve]
    return "\n".join(lines) + "\n"


def count_near_zero(spec, tol=1e-9):
    return int(np.sum(np.abs(spec.eigenvalues) < tol))

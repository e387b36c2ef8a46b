"""
Communication graphs and mixing matrices for fixed and stochastic networks.

Weight matrices are plain ``(m, m)`` float ndarrays. Graphs are immutable
records holding the undirected edge set in canonical (sorted) order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

EIG_TOL = 1e-10


@dataclass(frozen=True)
class Graph:
    """Undirected graph on ``m`` nodes, optionally embedded in the unit square."""

    m: int
    edges: tuple[tuple[int, int], ...]
    positions: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge ({i}, {j}) out of range for m={self.m}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.m, self.m))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def neighbors(self, i: int) -> list[int]:
        return [b if a == i else a for a, b in self.edges if i in (a, b)]

    @classmethod
    def from_weights(cls, w: np.ndarray, tol: float = 0.0) -> "Graph":
        """Recover the support graph of a weight matrix (entries above ``tol``)."""
        w = np.asarray(w)
        iu, ju = np.nonzero(np.triu(np.abs(w) > tol, k=1))
        return cls(w.shape[0], tuple(zip(iu.tolist(), ju.tolist())))


@dataclass(frozen=True)
class LinkFailureModel:
    """Each link is active with probability ``p``, independently per iteration."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"link activation probability must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class SpectralReport:
    lambda_min: float
    lambda_max: float
    rho_mix: float
    gershgorin_min: float
    symmetric: bool
    stochastic: bool
    nonnegative: bool
    passes_assumption1: bool
    messages: tuple[str, ...] = ()


def sensing_radius(m: int, r: float) -> float:
    return r * math.sqrt(math.log(m) / m)


def random_geometric_graph(m: int, r: float, seed: int | None) -> Graph:
    """
    Drop ``m`` nodes uniformly in the unit square and link every pair closer
    than ``r * sqrt(log(m) / m)``.

    The result may be disconnected; see :func:`connected_geometric_graph`.
    """
    if m < 2:
        raise ValueError("need at least two nodes")
    if r <= 0:
        raise ValueError("range scale r must be positive")
    rng = np.random.default_rng(seed)
    pos = rng.random((m, 2))
    radius = sensing_radius(m, r)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    iu, ju = np.nonzero(np.triu(dist <= radius, k=1))
    return Graph(m, tuple(zip(iu.tolist(), ju.tolist())), positions=pos)


def connected_geometric_graph(m: int, r: float, seed: int, max_retries: int = 100) -> tuple[Graph, int]:
    """
    Draw geometric graphs with seeds ``seed, seed+1, ...`` until the Metropolis
    matrix mixes (``rho_mix < 1``). Returns the graph and the seed that worked.
    """
    for attempt in range(max_retries + 1):
        s = seed + attempt
        g = random_geometric_graph(m, r, s)
        rep = validate_weights(metropolis_weights(g))
        if rep.rho_mix < 1.0 - EIG_TOL:
            return g, s
        log.info("geometric graph with seed %d is disconnected (rho_mix=%.3g), retrying", s, rep.rho_mix)
    raise RuntimeError(f"no connected graph found for m={m}, r={r} in {max_retries} retries from seed {seed}")


def metropolis_weights(g: Graph, blend: float = 0.0) -> np.ndarray:
    """
    Modified Metropolis-Hastings weights ``1 / (2 max(d_i, d_j))`` on edges,
    with the leftover mass on the diagonal.

    ``blend`` mixes in the identity, ``(1 - blend) W + blend I``, which makes
    degenerate cases (e.g. a single edge) strictly positive definite.
    """
    if not 0.0 <= blend < 1.0:
        raise ValueError("blend must lie in [0, 1)")
    deg = g.degrees
    w = np.zeros((g.m, g.m))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (2.0 * max(deg[i], deg[j]))
    if blend:
        w *= 1.0 - blend
    _fill_diagonal(w)
    return w


def _fill_diagonal(w: np.ndarray) -> None:
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))


def validate_weights(w: np.ndarray, tol: float = EIG_TOL) -> SpectralReport:
    """Spectral and structural checks of the mixing-matrix assumptions."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    m = w.shape[0]
    msgs = []
    symmetric = bool(np.array_equal(w, w.T))
    if not symmetric:
        msgs.append("matrix is not symmetric")
    stochastic = bool(np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-12))
    if not stochastic:
        msgs.append("rows do not sum to one")
    nonneg = bool(np.all(w >= 0.0))
    if not nonneg:
        msgs.append("matrix has negative entries")

    sym = 0.5 * (w + w.T)
    eig = np.linalg.eigvalsh(sym)
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    mixed = sym - np.full((m, m), 1.0 / m)
    rho_mix = float(np.max(np.abs(np.linalg.eigvalsh(mixed)))) if m > 1 else 0.0
    gersh = float(np.min(2.0 * np.diag(w) - 1.0))

    if lam_min <= tol:
        msgs.append(f"not positive definite (lambda_min={lam_min:.3g})")
    if rho_mix >= 1.0 - tol:
        msgs.append(f"not connected (rho_mix={rho_mix:.3g})")
    ok = symmetric and stochastic and nonneg and lam_min > tol and rho_mix < 1.0 - tol
    return SpectralReport(lam_min, lam_max, rho_mix, gersh, symmetric, stochastic, nonneg, ok, tuple(msgs))


def canonical_edges(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the positive upper-triangular entries, sorted."""
    iu, ju = np.nonzero(np.triu(w > 0.0, k=1))
    return iu, ju


def sample_network(base: np.ndarray, fm: LinkFailureModel | float, rng: np.random.Generator,
                   edges: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """
    One realization of the stochastic mixing matrix.

    Every edge of ``base`` survives with probability ``p`` (one uniform draw
    per edge, canonical order). A failed link has its weight folded into both
    endpoints' diagonal entries, so the sample stays symmetric and stochastic
    and dominates ``base`` in the PSD order.
    """
    p = fm.p if isinstance(fm, LinkFailureModel) else float(fm)
    iu, ju = canonical_edges(base) if edges is None else edges
    keep = rng.random(iu.size) < p
    if keep.all():
        return base.copy()
    w = base.copy()
    drop_i, drop_j = iu[~keep], ju[~keep]
    w[drop_i, drop_j] = 0.0
    w[drop_j, drop_i] = 0.0
    _fill_diagonal(w)
    return w


def expected_weight_matrix(base: np.ndarray, p: float) -> np.ndarray:
    """Mean of :func:`sample_network`, ``p W + (1 - p) I``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return p * base + (1.0 - p) * np.eye(base.shape[0])


def write_edge_list(path: str | Path, g: Graph, w: np.ndarray | None = None) -> None:
    """Write ``m=<count>`` then one ``i j [weight]`` line per edge."""
    lines = [f"m={g.m}"]
    for i, j in g.edges:
        lines.append(f"{i} {j}" if w is None else f"{i} {j} {float(w[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> tuple[Graph, np.ndarray]:
    """
    Parse the edge-list format. If any edge omits its weight, Metropolis
    weights are recomputed for the whole graph.
    """
    m = None
    edges, weights = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if m is None:
            if not line.startswith("m="):
                raise ValueError(f"line {lineno}: expected header 'm=<count>'")
            m = int(line[2:])
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"line {lineno}: expected 'i j [weight]'")
        edges.append((int(parts[0]), int(parts[1])))
        weights.append(float(parts[2]) if len(parts) == 3 else None)
    if m is None:
        raise ValueError("missing header 'm=<count>'")
    g = Graph(m, tuple(edges))
    if not edges or any(wt is None for wt in weights):
        return g, metropolis_weights(g)
    w = np.zeros((m, m))
    for (i, j), wt in zip(edges, weights):
        w[i, j] = w[j, i] = wt
    _fill_diagonal(w)
    return g, w

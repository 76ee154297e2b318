"""Four-partition weighted networks and their block-matrix encoding.

Node roles follow the path ``X - Y - W - Z``: ``G1`` holds the ``X-Y``
weights, ``S`` the ``Y-W`` weights, ``G2`` the ``W-Z`` weights, and ``R`` the
``X-Z`` weights, which in a tropical network are longest-path lengths.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from .tropical import MaskedMatrix, maxplus_matmul

log = logging.getLogger(__name__)

ROLES = ("X", "Y", "W", "Z")

Edge = Tuple[Hashable, Hashable, float]


def node_key(v):
    """Sort key putting integer ids before string ids."""
    return (0, v, "") if isinstance(v, (int, np.integer)) else (1, 0, str(v))


def _pair(u, v):
    return (u, v) if node_key(u) <= node_key(v) else (v, u)


@dataclass
class WeightedNetwork:
    node_ids: List[Hashable]
    edges: List[Edge]
    directed: bool = False

    def __post_init__(self):
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValueError("node ids must be unique")
        known = set(self.node_ids)
        for u, v, w in self.edges:
            if u not in known or v not in known:
                raise ValueError(f"edge ({u}, {v}) uses an unknown node")
            if not math.isfinite(w):
                raise ValueError(f"edge ({u}, {v}) has non-finite weight")

    @property
    def weights(self) -> Dict[Tuple[Hashable, Hashable], float]:
        if self.directed:
            return {(u, v): w for u, v, w in self.edges}
        return {_pair(u, v): w for u, v, w in self.edges}

    def weight(self, u, v) -> Optional[float]:
        key = (u, v) if self.directed else _pair(u, v)
        return self.weights.get(key)

    def density(self) -> float:
        n = len(self.node_ids)
        if n < 2:
            return 0.0
        pairs = n * (n - 1) if self.directed else n * (n - 1) // 2
        return len(self.edges) / pairs

    def to_networkx(self) -> nx.Graph:
        g = nx.DiGraph() if self.directed else nx.Graph()
        g.add_nodes_from(self.node_ids)
        g.add_weighted_edges_from(self.edges)
        return g

    def without(self, removed: Iterable[Edge]) -> "WeightedNetwork":
        drop = {_pair(u, v) for u, v, _ in removed}
        kept = [e for e in self.edges if _pair(e[0], e[1]) not in drop]
        return WeightedNetwork(list(self.node_ids), kept, self.directed)


@dataclass
class FourPartition:
    """Node roles; every role's nodes are kept sorted by id, which fixes the
    row/column order of the block matrices."""

    X: List[Hashable]
    Y: List[Hashable]
    W: List[Hashable]
    Z: List[Hashable]

    def __post_init__(self):
        for role in ROLES:
            setattr(self, role, sorted(getattr(self, role), key=node_key))
        seen = [v for role in ROLES for v in getattr(self, role)]
        if len(set(seen)) != len(seen):
            raise ValueError("a node is assigned to more than one role")

    @classmethod
    def from_assignment(cls, assignment: Dict[Hashable, str]) -> "FourPartition":
        groups = {r: [] for r in ROLES}
        for v, role in assignment.items():
            if role not in groups:
                raise ValueError(f"unknown role {role!r} for node {v}")
            groups[role].append(v)
        return cls(**groups)

    @property
    def assignment(self) -> Dict[Hashable, str]:
        return {v: role for role in ROLES for v in getattr(self, role)}

    @property
    def sizes(self) -> Tuple[int, int, int, int]:
        return len(self.X), len(self.Y), len(self.W), len(self.Z)

    @property
    def nodes(self) -> List[Hashable]:
        return sorted(self.assignment, key=node_key)

    @property
    def ranks_within_bounds(self) -> bool:
        m, r1, r2, n = self.sizes
        return max(r1, r2) <= min(m, n)

    def to_json(self) -> str:
        return json.dumps({str(v): r for v, r in self.assignment.items()}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FourPartition":
        raw = json.loads(text)
        return cls.from_assignment({_parse_id(k): r for k, r in raw.items()})


def _parse_id(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def mu_fraction(sizes: Sequence[int]) -> float:
    m, r1, r2, n = sizes
    return (m + n) / (m + r1 + r2 + n)


def mu(partition) -> int:
    """Share of nodes in the outer roles, as an integer percent (half rounds up)."""
    sizes = partition.sizes if hasattr(partition, "sizes") else partition
    return int(math.floor(100 * mu_fraction(sizes) + 0.5))


@dataclass
class BlockMatrices:
    R: MaskedMatrix
    G1: np.ndarray
    S: np.ndarray
    G2: np.ndarray
    # which factor entries came from real edges rather than the random fill
    G1_observed: np.ndarray = None
    S_observed: np.ndarray = None
    G2_observed: np.ndarray = None
    held_out: List[Edge] = field(default_factory=list)


# --------------------------------------------------------------------------
# synthetic network


def gen_synthetic_tropical_network(m: int, r1: int, r2: int, n: int, rng: np.random.Generator):
    """Network ``K`` over ``A ∪ B ∪ C ∪ D`` with ``A-D`` weights ``M1 ⊗ T ⊗ M2``.

    Nodes are ``0 .. m+r1+r2+n-1`` in role order.  Returns
    ``(network, true_partition, blocks)``.
    """
    if min(m, r1, r2, n) < 1:
        raise ValueError("all part sizes must be >= 1")
    M1 = rng.uniform(0.0, 10.0, (m, r1))
    T = rng.uniform(0.0, 10.0, (r1, r2))
    M2 = rng.uniform(0.0, 10.0, (r2, n))
    E = maxplus_matmul(maxplus_matmul(M1, T), M2)
    ids = np.arange(m + r1 + r2 + n)
    A, B, C, D = np.split(ids, np.cumsum([m, r1, r2]))
    A, B, C, D = ([int(v) for v in part] for part in (A, B, C, D))
    edges: List[Edge] = []
    for rows, cols, mat in ((A, B, M1), (B, C, T), (C, D, M2), (A, D, E)):
        for a, u in enumerate(rows):
            for b, v in enumerate(cols):
                edges.append((u, v, float(mat[a, b])))
    net = WeightedNetwork([int(v) for v in ids], edges)
    truth = FourPartition(A, B, C, D)
    blocks = BlockMatrices(
        MaskedMatrix.full(E), M1, T, M2,
        np.ones(M1.shape, bool), np.ones(T.shape, bool), np.ones(M2.shape, bool),
    )
    return net, truth, blocks


# --------------------------------------------------------------------------
# partitioning


def random_partition(nodes: Sequence, sizes: Sequence[int], rng: np.random.Generator) -> FourPartition:
    if len(sizes) != 4 or any(s < 0 for s in sizes):
        raise ValueError("need four non-negative sizes")
    if sum(sizes) != len(nodes):
        raise ValueError(f"sizes sum to {sum(sizes)} but there are {len(nodes)} nodes")
    order = sorted(nodes, key=node_key)
    shuffled = [order[i] for i in rng.permutation(len(order))]
    bounds = np.cumsum([0, *sizes])
    parts = [shuffled[bounds[i]:bounds[i + 1]] for i in range(4)]
    return FourPartition(*parts)


def partially_random_partition(
    A_nodes: Sequence, D_nodes: Sequence, all_nodes: Sequence, r1: int, r2: int,
    rng: np.random.Generator,
) -> FourPartition:
    """``X = A``, ``Z = D``; the remaining nodes are split at random into ``Y``, ``W``."""
    A, D = set(A_nodes), set(D_nodes)
    if A & D:
        raise ValueError("A and D must be disjoint")
    rest = sorted((v for v in all_nodes if v not in A and v not in D), key=node_key)
    if len(rest) != r1 + r2:
        raise ValueError(f"{len(rest)} inner nodes left, expected r1 + r2 = {r1 + r2}")
    shuffled = [rest[i] for i in rng.permutation(len(rest))]
    return FourPartition(list(A_nodes), shuffled[:r1], shuffled[r1:], list(D_nodes))


def louvain_partition(network: WeightedNetwork, gamma: float = 1.0, seed: int = 0) -> List[List]:
    """Louvain modularity communities at resolution ``gamma``, each sorted by id,
    largest first."""
    g = network.to_networkx()
    comms = nx.community.louvain_communities(g, weight="weight", resolution=gamma, seed=seed)
    comms = [sorted(c, key=node_key) for c in comms]
    comms.sort(key=lambda c: (-len(c), node_key(c[0])))
    return comms


class PartitionError(ValueError):
    pass


def _block_has_edge(weights, us, vs) -> bool:
    vs = set(vs)
    for u in us:
        for v in vs:
            if _pair(u, v) in weights:
                return True
    return False


def select_four_partition(communities: Sequence[Sequence], network: WeightedNetwork) -> FourPartition:
    """Assign four communities to roles: the two largest become the outer
    roles (larger one ``X``), the smaller two the inner roles (larger one ``Y``).

    Size ties go to the community holding the smallest node id.  Raises
    ``PartitionError`` unless there are exactly four communities and each of
    the ``X-Y``, ``Y-W``, ``W-Z`` blocks carries at least one edge.
    """
    if len(communities) != 4:
        raise PartitionError(f"need exactly 4 communities, got {len(communities)}; try another gamma")
    comms = [sorted(c, key=node_key) for c in communities]
    comms.sort(key=lambda c: (-len(c), node_key(c[0])))
    X, Z, Y, W = comms
    part = FourPartition(X, Y, W, Z)
    weights = network.weights
    for a, b in (("X", "Y"), ("Y", "W"), ("W", "Z")):
        if not _block_has_edge(weights, getattr(part, a), getattr(part, b)):
            raise PartitionError(f"block {a}-{b} has no edges; try another gamma")
    if not part.ranks_within_bounds:
        log.warning("inner roles exceed min(m, n): sizes %s", part.sizes)
    return part


def select_by_gamma(
    network: WeightedNetwork, gammas: Iterable[float], mu_threshold: float = 0.7, seed: int = 0
) -> Tuple[float, FourPartition]:
    """First ``gamma`` giving a usable four-partition with outer share >= threshold."""
    for gamma in gammas:
        comms = louvain_partition(network, gamma, seed)
        try:
            part = select_four_partition(comms, network)
        except PartitionError:
            continue
        if mu_fraction(part.sizes) >= mu_threshold:
            return float(gamma), part
    raise PartitionError("no gamma in the grid produced a usable four-partition")


# --------------------------------------------------------------------------
# block matrices


def _block(weights, rows, cols):
    mat = np.zeros((len(rows), len(cols)))
    obs = np.zeros((len(rows), len(cols)), dtype=bool)
    for a, u in enumerate(rows):
        for b, v in enumerate(cols):
            w = weights.get(_pair(u, v))
            if w is not None:
                mat[a, b] = w
                obs[a, b] = True
    return mat, obs


def build_matrices(
    network: WeightedNetwork,
    partition: FourPartition,
    rng: np.random.Generator,
    held_out: Sequence[Edge] = (),
    mask_zeros: bool = False,
) -> BlockMatrices:
    """Read ``R`` and the factor blocks off the network.

    Absent ``X-Z`` edges are masked in ``R`` (and zero weights too if
    ``mask_zeros``).  Absent factor edges are filled with values drawn from
    the observed factor entries.
    """
    if set(partition.assignment) != set(network.node_ids):
        raise ValueError("partition does not cover the network's nodes")
    weights = network.weights
    R, R_obs = _block(weights, partition.X, partition.Z)
    if mask_zeros:
        R_obs &= R != 0
    factors = [_block(weights, a, b) for a, b in
               ((partition.X, partition.Y), (partition.Y, partition.W), (partition.W, partition.Z))]
    pool = np.concatenate([mat[obs] for mat, obs in factors])
    if pool.size == 0 and any((~obs).any() for _, obs in factors):
        raise ValueError("no factor edges to fill missing entries from")
    filled = []
    for mat, obs in factors:
        mat = mat.copy()
        missing = ~obs
        if missing.any():
            mat[missing] = rng.choice(pool, size=int(missing.sum()))
        filled.append(mat)
    R_data = np.where(R_obs, R, np.nan)
    return BlockMatrices(
        MaskedMatrix(R_data, R_obs), filled[0], filled[1], filled[2],
        factors[0][1], factors[1][1], factors[2][1], list(held_out),
    )


def sample_networks(
    network: WeightedNetwork, count: int, max_missing_fraction: float, rng: np.random.Generator
) -> List[Tuple[WeightedNetwork, List[Edge]]]:
    """Bootstrap edge samples of ``network``.

    Draws ``|E|`` edges with replacement and keeps drawing while more than
    ``max_missing_fraction`` of the edges are still missing.  The undrawn
    edges of each sample are returned as its held-out set.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= max_missing_fraction < 1:
        raise ValueError("max_missing_fraction must be in [0, 1)")
    edges = list(network.edges)
    total = len(edges)
    out = []
    for _ in range(count):
        drawn = np.zeros(total, dtype=bool)
        if total:
            drawn[rng.integers(total, size=total)] = True
            allowed = math.floor(max_missing_fraction * total)
            while total - drawn.sum() > allowed:
                drawn[rng.integers(total)] = True
        kept = [e for e, d in zip(edges, drawn) if d]
        held = [e for e, d in zip(edges, drawn) if not d]
        out.append((WeightedNetwork(list(network.node_ids), kept, network.directed), held))
    return out


# --------------------------------------------------------------------------
# whole-network prediction


BLOCK_PAIRS = {
    ("X", "Y"): "G1",
    ("Y", "W"): "S",
    ("W", "Z"): "G2",
    ("X", "W"): "G1S",
    ("Y", "Z"): "SG2",
    ("X", "Z"): "G1SG2",
}


def predicted_blocks(factors) -> Dict[Tuple[str, str], np.ndarray]:
    G1, S, G2 = factors.G1, factors.S, factors.G2
    G1S = maxplus_matmul(G1, S)
    return {
        ("X", "Y"): G1,
        ("Y", "W"): S,
        ("W", "Z"): G2,
        ("X", "W"): G1S,
        ("Y", "Z"): maxplus_matmul(S, G2),
        ("X", "Z"): maxplus_matmul(G1S, G2),
    }


def predict_whole_network(factors, partition: FourPartition) -> Dict[Tuple[Hashable, Hashable], float]:
    """Predicted weight for every node pair lying in two different roles.

    Keys are unordered pairs normalised as ``(smaller id, larger id)``.
    """
    m, r1, r2, n = partition.sizes
    if factors.G1.shape != (m, r1) or factors.S.shape != (r1, r2) or factors.G2.shape != (r2, n):
        raise ValueError("factor shapes do not match the partition sizes")
    out = {}
    for (a, b), mat in predicted_blocks(factors).items():
        for ia, u in enumerate(getattr(partition, a)):
            for ib, v in enumerate(getattr(partition, b)):
                out[_pair(u, v)] = float(mat[ia, ib])
    return out


# --------------------------------------------------------------------------
# interaction data


def _parse_token(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def ingest_interactions(path) -> pd.DataFrame:
    """Parse ``u v weight day`` records; ``%``/``#`` lines are comments.

    Undirected pairs are stored with ``u < v``; self-interactions are
    dropped; repeated ``(u, v, day)`` records are summed.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line[0] in "%#":
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected 'u v weight [day]'")
            u, v = _parse_token(parts[0]), _parse_token(parts[1])
            if u == v:
                continue
            u, v = _pair(u, v)
            w = float(parts[2])
            day = int(float(parts[3])) if len(parts) > 3 else 1
            rows.append((u, v, day, w))
    df = pd.DataFrame(rows, columns=["u", "v", "day", "weight"])
    if df.empty:
        return df
    return df.groupby(["u", "v", "day"], as_index=False, sort=True)["weight"].sum()


def day_group_network(table: pd.DataFrame, day_range: Tuple[int, int]) -> WeightedNetwork:
    """Daily-average network over the inclusive ``day_range``; nodes are those
    with at least one positive-weight edge in that range."""
    lo, hi = day_range
    if hi < lo:
        raise ValueError("empty day range")
    span = hi - lo + 1
    sub = table[(table["day"] >= lo) & (table["day"] <= hi)] if len(table) else table
    if sub.empty:
        return WeightedNetwork([], [])
    agg = sub.groupby(["u", "v"], sort=True)["weight"].sum() / span
    agg = agg[agg > 0]
    edges = [(u, v, float(w)) for (u, v), w in agg.items()]
    nodes = sorted({u for u, _, _ in edges} | {v for _, v, _ in edges}, key=node_key)
    return WeightedNetwork(nodes, edges)


def pair_day_matrix(table: pd.DataFrame, nodes: Optional[Sequence] = None):
    """Rows are unordered node pairs (upper triangle), columns are days."""
    if nodes is None:
        nodes = sorted(set(table["u"]) | set(table["v"]), key=node_key)
    days = sorted(table["day"].unique()) if len(table) else []
    grid = table.pivot_table(index=["u", "v"], columns="day", values="weight",
                             aggfunc="sum", fill_value=0.0)
    pairs = [(nodes[a], nodes[b]) for a in range(len(nodes)) for b in range(a + 1, len(nodes))]
    grid = grid.reindex(index=pd.MultiIndex.from_tuples(pairs, names=["u", "v"]),
                        columns=days, fill_value=0.0).fillna(0.0)
    return grid.to_numpy(dtype=float), pairs, days


def kmeans_rows(H: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300):
    """Lloyd's k-means on the rows of ``H``.

    Returns ``(centroids, labels, objective_history)``; the history holds the
    within-cluster sum of squares after every assignment step.
    """
    H = np.asarray(H, dtype=float)
    if not 1 <= k <= H.shape[0]:
        raise ValueError("k must be between 1 and the number of rows")
    centroids = H[rng.choice(H.shape[0], size=k, replace=False)].copy()
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = np.empty((H.shape[0], k))
        for c in range(k):
            d2[:, c] = ((H - centroids[c]) ** 2).sum(axis=1)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(H.shape[0]), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = H[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return centroids, labels, history


# --------------------------------------------------------------------------
# files


def read_edge_list(path) -> WeightedNetwork:
    """Whitespace ``u v weight [day]`` lines; day columns are summed away."""
    table = ingest_interactions(path)
    if table.empty:
        return WeightedNetwork([], [])
    agg = table.groupby(["u", "v"], sort=True)["weight"].sum()
    edges = [(u, v, float(w)) for (u, v), w in agg.items()]
    nodes = sorted({u for u, _, _ in edges} | {v for _, v, _ in edges}, key=node_key)
    return WeightedNetwork(nodes, edges)


def write_edge_list(path, edges: Iterable[Edge], header: Optional[str] = None) -> None:
    with open(Path(path), "w") as fh:
        if header:
            fh.write(f"% {header}\n")
        for u, v, w in edges:
            fh.write(f"{u} {v} {w!r}\n")

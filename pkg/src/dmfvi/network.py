"""Network graphs and data partitioning for the simulated multi-node setting."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

TOPOLOGIES = ("ring", "chain", "complete", "star")
_MIN_NODES = {"ring": 3, "chain": 2, "complete": 1, "star": 2}


class ConfigurationError(ValueError):
    """Invalid experiment or model configuration."""


@dataclass(frozen=True)
class NetworkGraph:
    node_count: int
    neighbors: tuple

    def __post_init__(self):
        if self.node_count < 1 or len(self.neighbors) != self.node_count:
            raise ConfigurationError("neighbor lists must match node_count")
        for i, nbrs in enumerate(self.neighbors):
            if i in nbrs:
                raise ConfigurationError(f"self-loop at node {i}")
            if list(nbrs) != sorted(set(nbrs)):
                raise ConfigurationError(f"neighbors of node {i} must be sorted and unique")
            for j in nbrs:
                if not 0 <= j < self.node_count or i not in self.neighbors[j]:
                    raise ConfigurationError(f"adjacency not symmetric at edge ({i}, {j})")
        if not is_connected(self):
            raise ConfigurationError("graph is not connected")

    @property
    def directed_edges(self) -> list:
        """Ordered pairs (i, j) with j in B_i, node-major."""
        return [(i, j) for i in range(self.node_count) for j in self.neighbors[i]]

    @property
    def undirected_edges(self) -> list:
        return [(i, j) for i, j in self.directed_edges if i < j]


def is_connected(graph: NetworkGraph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in graph.neighbors[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == graph.node_count


def build_topology(kind: str, n: int) -> NetworkGraph:
    """Build a ring, chain, complete or star graph on ``n`` nodes.

    The star (node 0 is the hub) is a stress case beyond the usual ring/chain/complete set.
    """
    if kind not in TOPOLOGIES:
        raise ConfigurationError(f"unknown topology {kind!r}; expected one of {TOPOLOGIES}")
    if n < _MIN_NODES[kind]:
        raise ConfigurationError(f"{kind} topology needs at least {_MIN_NODES[kind]} nodes, got {n}")
    adj = [set() for _ in range(n)]

    def link(a, b):
        adj[a].add(b)
        adj[b].add(a)

    if kind == "ring":
        for i in range(n):
            link(i, (i + 1) % n)
    elif kind == "chain":
        for i in range(n - 1):
            link(i, i + 1)
    elif kind == "complete":
        for i in range(n):
            for j in range(i + 1, n):
                link(i, j)
    else:
        for i in range(1, n):
            link(0, i)
    return NetworkGraph(n, tuple(tuple(sorted(s)) for s in adj))


@dataclass(frozen=True)
class DataPartition:
    assignment: tuple

    @property
    def counts(self) -> list:
        return [len(a) for a in self.assignment]

    @property
    def total(self) -> int:
        return sum(self.counts)


def partition_equal(total: int, graph: NetworkGraph, seed: int = 0, shuffle: bool = False) -> DataPartition:
    """Split ``total`` sample indices into contiguous, near-equal blocks.

    Block sizes are ``total // n`` with the remainder spread over the first
    nodes.  With ``shuffle`` the indices are permuted (seeded) first.
    """
    n = graph.node_count
    if total < n:
        raise ConfigurationError(f"cannot split {total} samples over {n} nodes")
    order = np.arange(total)
    if shuffle:
        order = np.random.default_rng(seed).permutation(total)
    base, extra = divmod(total, n)
    blocks, start = [], 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        blocks.append(tuple(int(k) for k in order[start:start + size]))
        start += size
    return DataPartition(tuple(blocks))


def partition_blocks(sizes) -> DataPartition:
    """Contiguous partition with explicit block sizes (e.g. one camera per node)."""
    blocks, start = [], 0
    for s in sizes:
        if s < 1:
            raise ConfigurationError("every node needs at least one sample")
        blocks.append(tuple(range(start, start + s)))
        start += s
    return DataPartition(tuple(blocks))

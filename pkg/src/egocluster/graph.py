"""Weighted undirected member graph: loading, degree queries and degree bins."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graph input or unknown members."""


class EdgeListParseError(GraphError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class Graph:
    """Immutable weighted undirected graph over non-negative integer member ids.

    Neighbour lists are kept sorted by member id so that every traversal is
    reproducible. Isolated members are allowed.
    """

    __slots__ = ("_adj", "_nodes", "_edge_count")

    def __init__(self, adjacency: dict[int, dict[int, float]]):
        for u, nbrs in adjacency.items():
            for v, w in nbrs.items():
                if u == v:
                    raise GraphError(f"self-loop on member {u}")
                if not w > 0:
                    raise GraphError(f"edge ({u}, {v}) has non-positive weight {w}")
                if adjacency.get(v, {}).get(u) != w:
                    raise GraphError(f"edge ({u}, {v}) is not symmetric")
        self._adj = {
            u: tuple(sorted(adjacency[u].items())) for u in sorted(adjacency)
        }
        self._nodes = tuple(self._adj)
        self._edge_count = sum(len(n) for n in self._adj.values()) // 2

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[int, int] | tuple[int, int, float]],
        nodes: Iterable[int] = (),
    ) -> "Graph":
        """Build a graph from (u, v[, w]) tuples.

        Repeated edges in either direction are merged keeping the maximum
        weight. Self-loops and negative weights raise ``GraphError``.
        """
        adj: dict[int, dict[int, float]] = {}
        for n in nodes:
            adj.setdefault(_member(n), {})
        for e in edges:
            u, v = _member(e[0]), _member(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            _add_edge(adj, u, v, w)
        return cls(adj)

    def __contains__(self, m) -> bool:
        return m in self._adj

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[int]:
        return iter(self._nodes)

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self._adj == other._adj

    def __repr__(self) -> str:
        return f"Graph(nodes={self.node_count}, edges={self.edge_count})"

    @property
    def nodes(self) -> tuple[int, ...]:
        return self._nodes

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def neighbors(self, m: int) -> tuple[tuple[int, float], ...]:
        """(neighbour, weight) pairs of ``m``, sorted by neighbour id."""
        try:
            return self._adj[m]
        except KeyError:
            raise GraphError(f"unknown member {m}") from None

    def neighbor_ids(self, m: int) -> list[int]:
        return [v for v, _ in self.neighbors(m)]

    def weight(self, u: int, v: int) -> float:
        """Edge weight, 0.0 when the edge is absent."""
        for x, w in self.neighbors(u):
            if x == v:
                return w
        return 0.0

    def strength(self, m: int) -> float:
        return math.fsum(w for _, w in self.neighbors(m))

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for u, nbrs in self._adj.items():
            for v, w in nbrs:
                if u < v:
                    yield u, v, w

    def degrees(self) -> dict[int, int]:
        return {u: len(n) for u, n in self._adj.items()}

    def summary(self) -> dict:
        deg = np.array([len(n) for n in self._adj.values()], dtype=float)
        if deg.size == 0:
            deg = np.zeros(1)
        return {
            "nodes": self.node_count,
            "edges": self.edge_count,
            "degree_mean": float(deg.mean()),
            "degree_p50": float(np.percentile(deg, 50)),
            "degree_p90": float(np.percentile(deg, 90)),
            "degree_max": int(deg.max()),
        }

    def write_edge_list(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_edge_list())

    def to_edge_list(self) -> str:
        lines = [f"{u}\t{v}\t{w!r}" for u, v, w in self.edges()]
        lines += [str(u) for u, n in self._adj.items() if not n]
        return "".join(line + "\n" for line in lines)


def _member(x) -> int:
    m = int(x)
    if m < 0 or m >= 2**64:
        raise GraphError(f"member id {x!r} is not an unsigned 64-bit integer")
    return m


def _add_edge(adj, u: int, v: int, w: float) -> None:
    if u == v:
        raise GraphError(f"self-loop on member {u}")
    if math.isnan(w) or w < 0:
        raise GraphError(f"negative weight {w} on edge ({u}, {v})")
    if w == 0:
        # absent edge; still register the endpoints
        adj.setdefault(u, {})
        adj.setdefault(v, {})
        return
    a = adj.setdefault(u, {})
    b = adj.setdefault(v, {})
    if w > a.get(v, 0.0):
        a[v] = w
        b[u] = w


def load_graph(path) -> Graph:
    """Read a whitespace separated edge list ``src dst [weight]``.

    Lines starting with ``#`` and blank lines are skipped. A line holding a
    single id declares an isolated member.
    """
    path = Path(path)
    adj: dict[int, dict[int, float]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) > 3:
                raise EdgeListParseError(path, lineno, f"expected 'src dst [weight]', got {line!r}")
            try:
                ids = [_member(p) for p in parts[:2]]
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except (ValueError, GraphError) as exc:
                raise EdgeListParseError(path, lineno, str(exc)) from None
            if len(ids) == 1:
                adj.setdefault(ids[0], {})
                continue
            try:
                _add_edge(adj, ids[0], ids[1], w)
            except GraphError as exc:
                raise EdgeListParseError(path, lineno, str(exc)) from None
    return Graph(adj)


def degree(g: Graph, m: int) -> int:
    return len(g.neighbors(m))


@dataclass
class DegreeBins:
    """Members with degree >= 1 split by degree cutoffs.

    A member of degree ``d`` falls in bin ``bisect_left(boundaries, d)``, so
    each boundary is the largest degree of its bin. Bins are listed from the
    lowest to the highest degrees and hold members in shuffled order.
    """

    boundaries: list[int]
    bins: dict[int, list[int]] = field(default_factory=dict)

    def bin_of(self, d: int) -> int:
        return int(np.searchsorted(self.boundaries, d, side="left"))

    def __len__(self) -> int:
        return len(self.bins)


def quantile_boundaries(degrees: Iterable[int], bin_count: int) -> list[int]:
    """Upper-inclusive degree cutoffs splitting the population into
    ``bin_count`` groups of (as near as ties allow) equal size."""
    d = np.sort(np.asarray(list(degrees), dtype=np.int64))
    if d.size == 0:
        return []
    n = d.size
    cuts = []
    for k in range(1, bin_count):
        c = int(d[math.ceil(k * n / bin_count) - 1])
        if c < d[-1] and (not cuts or c > cuts[-1]):
            cuts.append(c)
    return cuts


def make_degree_bins(g: Graph, bin_count: int = 20, seed: int = 0) -> DegreeBins:
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    degs = g.degrees()
    eligible = [m for m in g.nodes if degs[m] > 0]
    boundaries = quantile_boundaries((degs[m] for m in eligible), bin_count)
    bins: dict[int, list[int]] = {i: [] for i in range(len(boundaries) + 1)}
    if not eligible:
        return DegreeBins(boundaries=[], bins={})
    idx = np.searchsorted(boundaries, [degs[m] for m in eligible], side="left")
    for m, b in zip(eligible, idx):
        bins[int(b)].append(m)
    rng = np.random.default_rng(seed)
    for b in sorted(bins):
        members = np.array(bins[b], dtype=np.uint64)
        rng.shuffle(members)
        bins[b] = [int(m) for m in members]
    return DegreeBins(boundaries=boundaries, bins=bins)


def summary_json(g: Graph) -> str:
    return json.dumps(g.summary(), sort_keys=True, indent=2) + "\n"

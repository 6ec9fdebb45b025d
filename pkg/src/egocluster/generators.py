"""Synthetic graph generators used as test substrate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .graph import Graph

GENERATORS = ("erdos_renyi", "power_law", "disjoint_stars")
WEIGHTS = ("unit", "exponential", "uniform")


class GraphSpecError(ValueError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    """Parameters of a synthetic graph.

    ``mean_degree`` applies to ``erdos_renyi`` and ``power_law``; ``exponent``
    only to ``power_law``; ``stars`` and ``leaves`` only to
    ``disjoint_stars`` (``node_count`` is then derived).
    """

    generator: str = "power_law"
    node_count: int = 1000
    mean_degree: float = 10.0
    exponent: float = 2.5
    stars: int = 10
    leaves: int = 5
    weights: str = "unit"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSpec":
        return cls(**d)


def generate_graph(spec: GraphSpec) -> Graph:
    if spec.generator not in GENERATORS:
        raise GraphSpecError(f"unknown generator {spec.generator!r}")
    if spec.weights not in WEIGHTS:
        raise GraphSpecError(f"unknown weight distribution {spec.weights!r}")
    rng = np.random.default_rng(spec.seed)
    if spec.generator == "disjoint_stars":
        if spec.stars < 0 or spec.leaves < 1:
            raise GraphSpecError("disjoint_stars needs stars >= 0 and leaves >= 1")
        n = spec.stars * (spec.leaves + 1)
        centers = np.arange(0, n, spec.leaves + 1)
        u = np.repeat(centers, spec.leaves)
        v = u + np.tile(np.arange(1, spec.leaves + 1), spec.stars)
    else:
        n = spec.node_count
        if n < 2:
            raise GraphSpecError("node_count must be >= 2")
        if not 0 < spec.mean_degree < n - 1:
            raise GraphSpecError(f"mean_degree must be in (0, {n - 1})")
        if spec.generator == "erdos_renyi":
            u, v = _erdos_renyi(n, spec.mean_degree, rng)
        else:
            u, v = _power_law(n, spec.mean_degree, spec.exponent, rng)
    w = _weights(spec.weights, len(u), rng)
    adj: dict[int, dict[int, float]] = {i: {} for i in range(n)}
    for a, b, x in zip(u.tolist(), v.tolist(), w.tolist()):
        adj[a][b] = x
        adj[b][a] = x
    return Graph(adj)


def _erdos_renyi(n: int, mean_degree: float, rng) -> tuple[np.ndarray, np.ndarray]:
    # G(n, p): draw the edge count, then that many distinct pairs uniformly
    pairs = n * (n - 1) // 2
    m = int(rng.binomial(pairs, mean_degree / (n - 1)))
    chosen = np.empty(0, dtype=np.int64)
    while chosen.size < m:
        extra = rng.integers(0, pairs, size=int((m - chosen.size) * 1.1) + 16)
        chosen = np.unique(np.concatenate([chosen, extra]))
    chosen = rng.permutation(chosen)[:m]
    chosen.sort()
    return _unrank_pairs(chosen, n)


def _unrank_pairs(k: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    # pair index k over (i < j), row-major; row i starts at i*n - i*(i+1)/2
    kf = k.astype(np.float64)
    i = np.floor((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8 * kf)) / 2).astype(np.int64)
    start = i * n - i * (i + 1) // 2
    # fix float rounding at row borders
    low = k < start
    i[low] -= 1
    start = i * n - i * (i + 1) // 2
    high = k >= start + (n - 1 - i)
    i[high] += 1
    start = i * n - i * (i + 1) // 2
    j = k - start + i + 1
    return i, j


def power_law_degrees(n: int, mean_degree: float, exponent: float, rng) -> np.ndarray:
    """Degree sequence with density ~ k**-exponent, floored continuous Pareto
    draws capped at ``n - 1``, with the scale set for the requested mean."""
    if exponent <= 2:
        raise GraphSpecError("power_law exponent must be > 2 for a finite mean degree")
    xmin = (mean_degree + 0.5) * (exponent - 2) / (exponent - 1)
    if xmin < 1:
        raise GraphSpecError("mean_degree too small for this exponent")
    x = xmin * (1 - rng.random(n)) ** (-1.0 / (exponent - 1))
    deg = np.minimum(np.floor(x), n - 1).astype(np.int64)
    if deg.sum() % 2:
        deg[int(rng.integers(n))] += 1
    return deg


def _power_law(n: int, mean_degree: float, exponent: float, rng) -> tuple[np.ndarray, np.ndarray]:
    # erased configuration model: random stub matching, self-loops and
    # repeated pairs dropped
    deg = power_law_degrees(n, mean_degree, exponent, rng)
    stubs = rng.permutation(np.repeat(np.arange(n, dtype=np.int64), deg))
    a, b = stubs[0::2], stubs[1::2]
    keep = a != b
    a, b = np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])
    key = np.unique(a * n + b)
    return key // n, key % n


def _weights(kind: str, m: int, rng) -> np.ndarray:
    if kind == "unit":
        return np.ones(m)
    if kind == "exponential":
        w = rng.exponential(1.0, m)
    else:
        w = rng.uniform(0.0, 1.0, m)
    # strictly positive, short decimal form
    return np.round(np.maximum(w, 1e-6), 6)

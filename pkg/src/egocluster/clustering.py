"""Ego-cluster construction.

Two procedures are provided. ``naive_cluster`` draws random egos and gives
each one every neighbour nobody has claimed yet, stopping once recent egos
lose too many alters. ``stratified_cluster`` draws egos from degree bins
in proportion to their populations and only accepts an ego whose loss rate can be kept under a cap;
``reattach_alters`` then hands the remaining neighbours of egos back to them
while evening out loss rates.
"""

from __future__ import annotations

import io
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .graph import Graph, make_degree_bins

ACCEPTED = "accepted"
COLLISION = "collision"
REJECTED = "rejected"

# Comparisons against loss thresholds tolerate this much float noise.
_EPS = 1e-12


class ClusteringError(ValueError):
    pass


@dataclass
class EgoCluster:
    ego: int
    cluster_alters: list[int]
    original_degree: int
    loss_rate: float
    weighted_loss_rate: float

    @property
    def members(self) -> list[int]:
        return [self.ego, *self.cluster_alters]


@dataclass
class IterationRecord:
    """One draw attempt. ``ego_loss_rate`` is None unless the draw was accepted."""

    iteration: int
    candidate: int
    outcome: str
    ego_original_degree: int
    ego_loss_rate: float | None = None
    collision_kind: str = ""

    @property
    def collision(self) -> bool:
        return self.outcome == COLLISION


@dataclass
class IterationDiagnostics:
    records: list[IterationRecord] = field(default_factory=list)

    def ego_records(self) -> list[IterationRecord]:
        return [r for r in self.records if r.outcome == ACCEPTED]

    @property
    def collision_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.collision for r in self.records) / len(self.records)

    def rollups(self, window: int = 20) -> dict:
        egos = self.ego_records()
        losses = np.array([r.ego_loss_rate for r in egos], dtype=float)
        degs = np.array([r.ego_original_degree for r in egos], dtype=float)
        kinds = [r.collision_kind for r in self.records if r.collision]
        out = {
            "draws": len(self.records),
            "egos": len(egos),
            "collisions": len(kinds),
            "collisions_on_alters": kinds.count("alter"),
            "collisions_on_egos": kinds.count("ego"),
            "rejections": sum(r.outcome == REJECTED for r in self.records),
            "collision_rate": self.collision_rate,
            "mean_loss_rate": float(losses.mean()) if losses.size else float("nan"),
            "fraction_loss_under_10pct": _frac_under(losses),
            "window": window,
            "window_mean_loss_rate": [],
            "window_mean_ego_degree": [],
        }
        for start in range(0, len(egos), window):
            out["window_mean_loss_rate"].append(float(losses[start:start + window].mean()))
            out["window_mean_ego_degree"].append(float(degs[start:start + window].mean()))
        return out


@dataclass
class ClusteringResult:
    clusters: list[EgoCluster]
    leftover: list[int]
    diagnostics: IterationDiagnostics
    params: dict

    @property
    def egos(self) -> list[int]:
        return [c.ego for c in self.clusters]

    @property
    def mean_loss_rate(self) -> float:
        """Average per-ego loss rate (the alpha driving attenuation)."""
        if not self.clusters:
            return float("nan")
        return math.fsum(c.loss_rate for c in self.clusters) / len(self.clusters)

    def owner(self) -> dict[int, int]:
        """Map of every clustered member to the ego of its cluster."""
        own = {}
        for c in self.clusters:
            for m in c.members:
                own[m] = c.ego
        return own

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "clusters": [asdict(c) for c in self.clusters],
            "leftover": list(self.leftover),
            "diagnostics": [asdict(r) for r in self.diagnostics.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ClusteringResult":
        return cls(
            clusters=[EgoCluster(**c) for c in d["clusters"]],
            leftover=list(d["leftover"]),
            diagnostics=IterationDiagnostics([IterationRecord(**r) for r in d["diagnostics"]]),
            params=dict(d["params"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "ClusteringResult":
        return cls.from_dict(json.loads(text))

    def clusters_tsv(self) -> str:
        buf = io.StringIO()
        for c in self.clusters:
            alters = ",".join(str(a) for a in c.cluster_alters)
            buf.write(f"{c.ego}\t{c.loss_rate!r}\t{c.weighted_loss_rate!r}\t{alters}\n")
        return buf.getvalue()

    def leftover_txt(self) -> str:
        return "".join(f"{m}\n" for m in self.leftover)


def make_cluster(g: Graph, ego: int, alters: Iterable[int]) -> EgoCluster:
    """Build an EgoCluster, computing both loss rates from the graph."""
    alters = sorted(alters)
    nbrs = dict(g.neighbors(ego))
    d = len(nbrs)
    if d == 0:
        raise ClusteringError(f"member {ego} has no neighbours and cannot be an ego")
    total = math.fsum(nbrs.values())
    kept = math.fsum(nbrs[a] for a in alters)
    return EgoCluster(
        ego=ego,
        cluster_alters=alters,
        original_degree=d,
        loss_rate=1.0 - len(alters) / d,
        weighted_loss_rate=max(0.0, 1.0 - kept / total),
    )


def _frac_under(losses, threshold: float = 0.10) -> float:
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        return float("nan")
    return float(np.mean(losses < threshold - _EPS))


def _finish(g: Graph, clusters: list[EgoCluster], diag, params) -> ClusteringResult:
    used = set()
    for c in clusters:
        used.update(c.members)
    leftover = [m for m in g.nodes if m not in used]
    return ClusteringResult(clusters=clusters, leftover=leftover, diagnostics=diag, params=params)


def naive_cluster(g: Graph, stop_loss: float = 0.25, window: int = 20, seed: int = 0) -> ClusteringResult:
    """Random sequential ego sampling.

    Candidates are drawn uniformly without replacement among members with at
    least one neighbour. A candidate already taken by an earlier cluster is a
    collision and is skipped; otherwise it becomes an ego and takes all of its
    free neighbours. Sampling stops once the mean loss rate of the last
    ``window`` egos reaches ``stop_loss``, or when candidates run out.
    """
    if not 0 < stop_loss <= 1:
        raise ClusteringError(f"stop_loss must be in (0, 1], got {stop_loss}")
    if window < 1:
        raise ClusteringError(f"window must be >= 1, got {window}")
    params = {"algorithm": "naive", "stop_loss": stop_loss, "window": window, "seed": seed}

    eligible = np.array([m for m in g.nodes if g.neighbors(m)], dtype=np.uint64)
    order = np.random.default_rng(seed).permutation(eligible)

    role: dict[int, str] = {}
    clusters: list[EgoCluster] = []
    diag = IterationDiagnostics()
    recent: deque[float] = deque(maxlen=window)
    for it, m in enumerate(order.tolist()):
        nbrs = g.neighbors(m)
        if m in role:
            diag.records.append(IterationRecord(it, m, COLLISION, len(nbrs), collision_kind=role[m]))
            continue
        role[m] = "ego"
        alters = [v for v, _ in nbrs if v not in role]
        for v in alters:
            role[v] = "alter"
        c = make_cluster(g, m, alters)
        clusters.append(c)
        diag.records.append(IterationRecord(it, m, ACCEPTED, len(nbrs), c.loss_rate))
        recent.append(c.loss_rate)
        if len(recent) == window and math.fsum(recent) / window >= stop_loss - _EPS:
            break
    return _finish(g, clusters, diag, params)


def required_alters(degree: int, target_loss: float) -> int:
    """Smallest alter count keeping ``1 - k/degree`` at or below the target."""
    k = max(1, math.ceil((1.0 - target_loss) * degree - 1e-9))
    while k < degree and 1.0 - k / degree > target_loss:
        k += 1
    return min(k, degree)


def stratified_cluster(
    g: Graph, target_loss: float = 0.2, bin_count: int = 20, seed: int = 0
) -> ClusteringResult:
    """Degree-stratified ego selection with a loss-rate cap.

    Bins are visited in proportion to their populations, so the egos follow
    the degree distribution of eligible members; equal-sized bins reduce to a
    plain rotation from lowest to highest degree. Each visit
    pops shuffled candidates until one is accepted: an unclaimed member of
    degree ``d`` with at least ``required_alters(d, target_loss)`` unclaimed
    neighbours. It claims exactly that many, heaviest edges first (ties by
    member id). The first visit that empties a bin without an acceptance ends
    the procedure.
    """
    if not 0 <= target_loss < 1:
        raise ClusteringError(f"target_loss must be in [0, 1), got {target_loss}")
    if bin_count < 1:
        raise ClusteringError(f"bin_count must be >= 1, got {bin_count}")
    params = {
        "algorithm": "stratified",
        "target_loss": target_loss,
        "bin_count": bin_count,
        "seed": seed,
    }
    bins = make_degree_bins(g, bin_count, seed)
    queues = [deque(bins.bins[b]) for b in sorted(bins.bins)]
    total = sum(len(q) for q in queues)
    shares = [len(q) / total for q in queues] if total else []
    picked = [0] * len(queues)
    role: dict[int, str] = {}
    clusters: list[EgoCluster] = []
    diag = IterationDiagnostics()
    it = 0
    while queues:
        b = _next_bin(shares, picked, len(clusters))
        q = queues[b]
        accepted = False
        while q:
            m = q.popleft()
            nbrs = g.neighbors(m)
            d = len(nbrs)
            if m in role:
                diag.records.append(IterationRecord(it, m, COLLISION, d, collision_kind=role[m]))
                it += 1
                continue
            need = required_alters(d, target_loss)
            free = [(v, w) for v, w in nbrs if v not in role]
            if len(free) < need:
                diag.records.append(IterationRecord(it, m, REJECTED, d))
                it += 1
                continue
            free.sort(key=lambda vw: (-vw[1], vw[0]))
            alters = [v for v, _ in free[:need]]
            role[m] = "ego"
            for v in alters:
                role[v] = "alter"
            c = make_cluster(g, m, alters)
            clusters.append(c)
            diag.records.append(IterationRecord(it, m, ACCEPTED, d, c.loss_rate))
            it += 1
            accepted = True
            break
        if not accepted:
            break
        picked[b] += 1
    return _finish(g, clusters, diag, params)


def _next_bin(shares: list[float], picked: list[int], step: int) -> int:
    # bin furthest behind its population share; lowest bin on ties, so
    # equal-sized bins are visited in plain ascending rotation
    best, best_gap = 0, None
    for b, share in enumerate(shares):
        gap = share * (step + 1) - picked[b]
        if best_gap is None or gap > best_gap + _EPS:
            best, best_gap = b, gap
    return best


def reattach_alters(g: Graph, partial: ClusteringResult) -> ClusteringResult:
    """Attach free neighbours of egos to an adjacent ego, then even out losses.

    Every unclaimed member adjacent to at least one ego first goes to the
    adjacent ego with the heaviest edge (ties by lower ego id). Then an
    attached member is moved from ego ``s`` to another adjacent ego ``t``
    whenever that strictly narrows the gap between their loss rates, i.e.
    ``1/d_s + 1/d_t < 2 (loss_t - loss_s)``. Each move strictly lowers
    ``sum(d_e * loss_e**2)``, so the passes terminate. Only reattached members
    move, so no ego ends above its loss rate from ``stratified_cluster``.
    """
    if partial.params.get("algorithm") != "stratified" or "target_loss" not in partial.params:
        raise ClusteringError("reattach_alters needs a result from stratified_cluster")
    if partial.params.get("reattached"):
        raise ClusteringError("result has already been reattached")

    ego_set = {c.ego for c in partial.clusters}
    taken = set()
    for c in partial.clusters:
        taken.update(c.members)
    deg = {c.ego: c.original_degree for c in partial.clusters}
    count = {c.ego: len(c.cluster_alters) for c in partial.clusters}

    # candidate egos per free member, heaviest edge first
    options: dict[int, list[int]] = {}
    for m in g.nodes:
        if m in taken:
            continue
        adj = [(w, e) for e, w in g.neighbors(m) if e in ego_set]
        if adj:
            adj.sort(key=lambda we: (-we[0], we[1]))
            options[m] = [e for _, e in adj]

    assigned = {m: opts[0] for m, opts in options.items()}
    for e in assigned.values():
        count[e] += 1

    movable = sorted(m for m, opts in options.items() if len(opts) > 1)
    moves = 0
    changed = True
    while changed:
        changed = False
        for m in movable:
            s = assigned[m]
            best, best_gain = None, 0
            for t in options[m]:
                if t == s:
                    continue
                # integer form of 2(loss_t - loss_s) - 1/d_s - 1/d_t, times d_s*d_t
                gain = 2 * (count[s] * deg[t] - count[t] * deg[s]) - deg[s] - deg[t]
                if gain > 0 and (best is None or gain * deg[best] > best_gain * deg[t]
                                 or (gain * deg[best] == best_gain * deg[t] and t < best)):
                    best, best_gain = t, gain
            if best is not None:
                assigned[m] = best
                count[s] -= 1
                count[best] += 1
                moves += 1
                changed = True

    extra: dict[int, list[int]] = {}
    for m, e in assigned.items():
        extra.setdefault(e, []).append(m)
    clusters = [make_cluster(g, c.ego, c.cluster_alters + extra.get(c.ego, [])) for c in partial.clusters]
    params = dict(partial.params, reattached=True, reattached_members=len(assigned), rebalancing_moves=moves)
    return _finish(g, clusters, partial.diagnostics, params)


def diagnostics_report(result: ClusteringResult, window: int = 20) -> list[dict]:
    """Per-draw table with rolling statistics over the last ``window`` egos.

    Rolling columns are empty until the first ego has been accepted; on
    collision rows they repeat the statistics of the latest egos.
    """
    if window < 1:
        raise ClusteringError("window must be >= 1")
    rows = []
    losses: deque[float] = deque(maxlen=window)
    degs: deque[int] = deque(maxlen=window)
    draws: deque[bool] = deque(maxlen=window)
    collisions = 0
    for n, r in enumerate(result.diagnostics.records, 1):
        collisions += r.collision
        draws.append(r.collision)
        if r.outcome == ACCEPTED:
            losses.append(r.ego_loss_rate)
            degs.append(r.ego_original_degree)
        row = {
            "iteration": r.iteration,
            "candidate": r.candidate,
            "outcome": r.outcome,
            "ego_loss_rate": r.ego_loss_rate,
            "ego_degree": r.ego_original_degree,
            "cumulative_collision_rate": collisions / n,
            "rolling_collision_rate": sum(draws) / len(draws),
            "rolling_mean_loss_rate": None,
            "rolling_fraction_loss_under_10pct": None,
            "rolling_mean_ego_degree": None,
        }
        if losses:
            row["rolling_mean_loss_rate"] = math.fsum(losses) / len(losses)
            row["rolling_fraction_loss_under_10pct"] = _frac_under(losses)
            row["rolling_mean_ego_degree"] = sum(degs) / len(degs)
        rows.append(row)
    return rows


DIAGNOSTIC_COLUMNS = (
    "iteration",
    "candidate",
    "outcome",
    "ego_loss_rate",
    "ego_degree",
    "cumulative_collision_rate",
    "rolling_collision_rate",
    "rolling_mean_loss_rate",
    "rolling_fraction_loss_under_10pct",
    "rolling_mean_ego_degree",
)


def diagnostics_tsv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("\t".join(DIAGNOSTIC_COLUMNS) + "\n")
    for row in rows:
        buf.write("\t".join(_cell(row[c]) for c in DIAGNOSTIC_COLUMNS) + "\n")
    return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)

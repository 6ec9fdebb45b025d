"""Synthetic experiments with known network effects.

Outcomes follow ``y = baseline + direct * z + network * f(exposure) + noise``
where ``exposure`` is the treated share of a member's graph neighbours and
``f`` is a non-decreasing response with ``f(0) = 0`` and ``f(1) = 1``. Only a
member's own and neighbours' assignments enter its outcome.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .analysis import OutcomeTable, analyze_experiment
from .assignment import AssignmentPlan, EgoMode, assign
from .clustering import ClusteringResult, naive_cluster, reattach_alters, stratified_cluster
from .generators import GraphSpec, GraphSpecError, generate_graph
from .graph import Graph
from .seeding import derive_seed

__all__ = [
    "GraphSpec",
    "GraphSpecError",
    "OutcomeModel",
    "RESPONSES",
    "attenuation_study",
    "generate_graph",
    "naive_vs_stratified_study",
    "run_replication",
    "simulate_outcomes",
]


def _logistic(p, k: float = 10.0):
    s = lambda x: 1.0 / (1.0 + np.exp(-x))
    lo, hi = s(-k / 2), s(k / 2)
    return (s(k * (p - 0.5)) - lo) / (hi - lo)


RESPONSES = {
    "linear": lambda p: p,
    "convex": lambda p: p ** 2,
    "concave": np.sqrt,
    "threshold": lambda p: (p >= 0.5).astype(float),
    "logistic": _logistic,
}

NOISES = ("gaussian", "lognormal")


@dataclass(frozen=True)
class OutcomeModel:
    baseline: float = 10.0
    direct_effect: float = 0.0
    network_effect: float = 1.0
    noise_sd: float = 1.0
    response: str = "linear"
    noise: str = "gaussian"

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ValueError(f"unknown response {self.response!r}; choose from {sorted(RESPONSES)}")
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise {self.noise!r}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")

    def respond(self, p) -> np.ndarray:
        return RESPONSES[self.response](np.asarray(p, dtype=float))

    def outcome(self, z, p, eps=0.0):
        return self.baseline + self.direct_effect * np.asarray(z, dtype=float) \
            + self.network_effect * self.respond(p) + eps

    def to_dict(self) -> dict:
        return asdict(self)


def exposures(g: Graph, plan: AssignmentPlan) -> tuple[np.ndarray, np.ndarray]:
    """Own treatment and treated-neighbour share, in ``g.nodes`` order."""
    missing = [m for m in g.nodes if m not in plan.assignments]
    if missing:
        raise ValueError(f"plan does not cover {len(missing)} graph members (first: {missing[0]})")
    treated = {m for m, a in plan.assignments.items() if a.variant.value == "treated"}
    z = np.fromiter((m in treated for m in g.nodes), dtype=float, count=len(g))
    p = np.zeros(len(g))
    for i, m in enumerate(g.nodes):
        nbrs = g.neighbors(m)
        if nbrs:
            p[i] = sum(v in treated for v, _ in nbrs) / len(nbrs)
    return z, p


def noise(model: OutcomeModel, n: int, seed: int) -> np.ndarray:
    z = np.random.default_rng(seed).standard_normal(n)
    if model.noise == "lognormal":
        # centred, unit-variance lognormal
        z = (np.exp(z) - math.exp(0.5)) / math.sqrt((math.e - 1) * math.e)
    return model.noise_sd * z


def simulate_outcomes(g: Graph, plan: AssignmentPlan, model: OutcomeModel, seed: int = 0,
                      metric: str = "y") -> OutcomeTable:
    z, p = exposures(g, plan)
    y = model.outcome(z, p, noise(model, len(g), seed))
    return OutcomeTable(g.nodes, {metric: y})


def cluster_pipeline(g: Graph, target_loss: float, bin_count: int, seed: int) -> ClusteringResult:
    return reattach_alters(g, stratified_cluster(g, target_loss, bin_count, seed))


def run_replication(g: Graph, model: OutcomeModel, target_loss: float, p: float, seed: int,
                    mode: EgoMode = EgoMode.ALL_TREATED, bin_count: int = 20) -> dict:
    """One cluster -> assign -> simulate -> analyze pass."""
    result = cluster_pipeline(g, target_loss, bin_count, derive_seed(seed, "cluster"))
    plan = assign(result, mode, p, derive_seed(seed, "assign"))
    outcomes = simulate_outcomes(g, plan, model, derive_seed(seed, "noise"))
    r = analyze_experiment(plan, outcomes, ["y"]).results[0]
    return {
        "seed": seed,
        "egos": len(result.clusters),
        "alpha": result.mean_loss_rate,
        "estimate": r.delta,
        "std_err": r.std_err,
        "p_value": r.p_value,
    }


def _replicate(args):
    return run_replication(*args)


def _run_all(tasks: list[tuple], workers: int) -> list[dict]:
    if workers <= 1:
        return [_replicate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate, tasks))


def expected_estimate(model: OutcomeModel, alpha: float, mode: EgoMode) -> float | None:
    """Expected arm contrast under a linear response, or None otherwise.

    The treated-share gap between arms is ``(1 - alpha*(1-p)) - alpha*p =
    1 - alpha`` whatever ``p`` is.
    """
    if model.response != "linear":
        return None
    mode = EgoMode(mode)
    direct = model.direct_effect if mode is EgoMode.MATCH_ALTERS else 0.0
    return direct + model.network_effect * (1 - alpha)


def attenuation_study(spec: GraphSpec, model: OutcomeModel, target_loss: float = 0.2, p: float = 0.5,
                      replications: int = 100, seed: int = 0, mode: EgoMode = EgoMode.ALL_TREATED,
                      bin_count: int = 20, workers: int = 1) -> dict:
    """Repeat the whole pipeline on one synthetic graph and compare the mean
    estimate with the attenuated effect predicted from the realized loss."""
    if replications < 30:
        raise ValueError("attenuation_study needs at least 30 replications")
    g = generate_graph(spec)
    tasks = [(g, model, target_loss, p, derive_seed(seed, "rep", r), mode, bin_count)
             for r in range(replications)]
    reps = _run_all(tasks, workers)
    est = np.array([r["estimate"] for r in reps])
    alpha = float(np.mean([r["alpha"] for r in reps]))
    mean = float(est.mean())
    se = float(est.std(ddof=1) / math.sqrt(len(est)))
    expected = expected_estimate(model, alpha, mode)
    report = {
        "graph": spec.to_dict(),
        "model": model.to_dict(),
        "target_loss": target_loss,
        "p": p,
        "mode": EgoMode(mode).value,
        "replications": replications,
        "seed": seed,
        "mean_alpha": alpha,
        "mean_estimate": mean,
        "mc_std_err": se,
        "ideal_effect": model.network_effect + (model.direct_effect if EgoMode(mode) is EgoMode.MATCH_ALTERS else 0.0),
        "expected_estimate": expected,
        "z_vs_expected": None if expected is None or se == 0 else (mean - expected) / se,
        "ratio_to_network_effect": mean / model.network_effect if model.network_effect else None,
        "per_replication": reps,
    }
    return report


HIST_EDGES = np.linspace(0.0, 1.0, 21)


def _hist(losses) -> list[int]:
    # bins are (low, high], with 0 in the first, so a loss sitting exactly on
    # the cap is counted below it
    x = np.round(np.asarray(losses, dtype=float), 12)
    idx = np.clip(np.searchsorted(HIST_EDGES, x, side="left") - 1, 0, len(HIST_EDGES) - 2)
    return [int(c) for c in np.bincount(idx, minlength=len(HIST_EDGES) - 1)]


def naive_vs_stratified_study(spec: GraphSpec, seeds: Sequence[int], target_loss: float = 0.2,
                              bin_count: int = 20, window: int = 20) -> dict:
    """Loss-rate distributions of early naive egos, late naive egos and
    stratified egos (after reattachment) on graphs drawn from ``spec``.

    Per seed, ``k`` is the number of stratified egos; the naive sampler is run
    to exhaustion and its first ``k`` and last ``k`` egos form the two naive
    groups.
    """
    seeds = list(seeds)
    if len(seeds) < 5:
        raise ValueError("naive_vs_stratified_study needs at least 5 seeds")
    groups = {"naive_early": [], "naive_late": [], "stratified": []}
    per_seed = []
    for s in seeds:
        g = generate_graph(replace(spec, seed=derive_seed(s, "graph")))
        strat = cluster_pipeline(g, target_loss, bin_count, derive_seed(s, "stratified"))
        naive = naive_cluster(g, 1.0, window, derive_seed(s, "naive"))
        k = min(len(strat.clusters), len(naive.clusters) // 2)
        loss = {
            "stratified": [c.loss_rate for c in strat.clusters],
            "naive_early": [c.loss_rate for c in naive.clusters[:k]],
            "naive_late": [c.loss_rate for c in naive.clusters[len(naive.clusters) - k:]],
        }
        for name, v in loss.items():
            groups[name].extend(v)
        per_seed.append({"seed": s, "k": k, **{f"mean_{n}": float(np.mean(v)) if v else math.nan
                                                for n, v in loss.items()}})
    return {
        "graph": spec.to_dict(),
        "target_loss": target_loss,
        "bin_edges": [float(x) for x in HIST_EDGES],
        "histograms": {n: _hist(v) for n, v in groups.items()},
        "mean_loss": {n: float(np.mean(v)) if v else math.nan for n, v in groups.items()},
        "max_loss": {n: float(np.max(v)) if v else math.nan for n, v in groups.items()},
        "per_seed": per_seed,
    }


def histograms_tsv(report: dict) -> str:
    edges = report["bin_edges"]
    names = list(report["histograms"])
    lines = ["bin_low\tbin_high\t" + "\t".join(names)]
    for i in range(len(edges) - 1):
        counts = "\t".join(str(report["histograms"][n][i]) for n in names)
        lines.append(f"{edges[i]!r}\t{edges[i + 1]!r}\t{counts}")
    return "\n".join(lines) + "\n"

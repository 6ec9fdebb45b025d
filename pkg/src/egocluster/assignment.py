"""Ego-level Bernoulli randomization of ego clusters.

Each ego gets one coin. The coin decides the variant of all of its cluster
alters; the ego's own variant follows the chosen ``EgoMode``. Members outside
every cluster are randomized independently with the same probability.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clustering import ClusteringResult
from .graph import Graph
from .seeding import bernoulli


class AssignmentError(ValueError):
    pass


class Variant(str, Enum):
    TREATED = "treated"
    CONTROL = "control"


class Role(str, Enum):
    EGO = "ego"
    ALTER = "alter"
    LEFTOVER = "leftover"


class EgoMode(str, Enum):
    ALL_TREATED = "all-treated"
    ALL_CONTROL = "all-control"
    MATCH_ALTERS = "match-alters"
    INDEPENDENT = "independent"


def _variant(flag: bool) -> Variant:
    return Variant.TREATED if flag else Variant.CONTROL


@dataclass(frozen=True)
class Assignment:
    variant: Variant
    role: Role
    ego: int | None = None


@dataclass
class AssignmentPlan:
    assignments: dict[int, Assignment]
    ego_coin: dict[int, bool]
    params: dict = field(default_factory=dict)

    def variant(self, m: int) -> Variant:
        return self.assignments[m].variant

    def is_treated(self, m: int) -> bool:
        return self.assignments[m].variant is Variant.TREATED

    def alters_of(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {e: [] for e in self.ego_coin}
        for m, a in self.assignments.items():
            if a.role is Role.ALTER:
                out.setdefault(a.ego, []).append(m)
        return out

    def ego_arms(self) -> dict[int, Variant]:
        """Variant of each ego's cluster alters, for egos that have alters.

        This is the arm an ego is analysed in. Egos without cluster alters
        carry no contrast and are left out.
        """
        arms: dict[int, Variant] = {}
        for m, a in sorted(self.assignments.items()):
            if a.role is Role.ALTER and a.ego not in arms:
                arms[a.ego] = a.variant
        return dict(sorted(arms.items()))

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("member_id\tvariant\trole\tego_id\n")
        for m in sorted(self.assignments):
            a = self.assignments[m]
            ego = "" if a.ego is None else str(a.ego)
            buf.write(f"{m}\t{a.variant.value}\t{a.role.value}\t{ego}\n")
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str, params: dict | None = None) -> "AssignmentPlan":
        """Parse a plan TSV. Coins are recovered from alter variants, so
        egos without alters only get a coin in match-alters mode."""
        assignments: dict[int, Assignment] = {}
        lines = text.splitlines()
        if not lines or lines[0].split("\t")[:4] != ["member_id", "variant", "role", "ego_id"]:
            raise AssignmentError("plan TSV must start with a member_id/variant/role/ego_id header")
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise AssignmentError(f"plan line {lineno}: expected 4 columns")
            try:
                m = int(parts[0])
                a = Assignment(Variant(parts[1]), Role(parts[2]), int(parts[3]) if parts[3] else None)
            except ValueError as exc:
                raise AssignmentError(f"plan line {lineno}: {exc}") from None
            if m in assignments:
                raise AssignmentError(f"plan line {lineno}: duplicate member {m}")
            assignments[m] = a
        plan = cls(assignments, {}, dict(params or {}))
        coins = {e: v is Variant.TREATED for e, v in plan.ego_arms().items()}
        match = plan.params.get("mode") == EgoMode.MATCH_ALTERS.value
        for m, a in assignments.items():
            if a.role is Role.EGO and m not in coins and match:
                coins[m] = a.variant is Variant.TREATED
        plan.ego_coin = dict(sorted(coins.items()))
        return plan


def _check(result: ClusteringResult, p: float) -> None:
    if not 0 < p < 1:
        raise AssignmentError(f"p must be in (0, 1), got {p}")
    if not result.clusters:
        raise AssignmentError("clustering has no clusters")


def plan_from_coins(
    result: ClusteringResult,
    mode: EgoMode,
    coins: dict[int, bool],
    own_coins: dict[int, bool] | None = None,
    leftover_coins: dict[int, bool] | None = None,
    params: dict | None = None,
) -> AssignmentPlan:
    """Build a plan from explicit coin outcomes.

    ``coins[ego]`` is the cluster coin, ``own_coins`` the ego's own coin (used
    only in independent mode) and ``leftover_coins`` the coin of each member
    outside the clusters.
    """
    mode = EgoMode(mode)
    assignments: dict[int, Assignment] = {}
    for c in result.clusters:
        coin = coins[c.ego]
        if mode is EgoMode.ALL_TREATED:
            own = True
        elif mode is EgoMode.ALL_CONTROL:
            own = False
        elif mode is EgoMode.MATCH_ALTERS:
            own = coin
        else:
            own = own_coins[c.ego]
        assignments[c.ego] = Assignment(_variant(own), Role.EGO, c.ego)
        for a in c.cluster_alters:
            assignments[a] = Assignment(_variant(coin), Role.ALTER, c.ego)
    for m in result.leftover:
        assignments[m] = Assignment(_variant((leftover_coins or {}).get(m, False)), Role.LEFTOVER)
    ego_coin = {c.ego: coins[c.ego] for c in result.clusters}
    return AssignmentPlan(assignments, ego_coin, dict(params or {"mode": mode.value}))


def assign(result: ClusteringResult, mode: EgoMode = EgoMode.ALL_TREATED, p: float = 0.5, seed: int = 0) -> AssignmentPlan:
    """Randomize a clustering.

    Coins are keyed hashes of ``(seed, member)``, so any member's assignment
    can be recomputed without replaying the others.
    """
    _check(result, p)
    mode = EgoMode(mode)
    coins = {c.ego: bernoulli(seed, p, "cluster", c.ego) for c in result.clusters}
    own = None
    if mode is EgoMode.INDEPENDENT:
        own = {c.ego: bernoulli(seed, p, "ego", c.ego) for c in result.clusters}
    left = {m: bernoulli(seed, p, "member", m) for m in result.leftover}
    params = {"mode": mode.value, "p": p, "seed": seed}
    return plan_from_coins(result, mode, coins, own, left, params)


def exposure(plan: AssignmentPlan, g: Graph, m: int) -> float:
    """Share of ``m``'s graph neighbours that are treated (0 when isolated)."""
    nbrs = g.neighbors(m)
    if not nbrs:
        return 0.0
    return sum(plan.is_treated(v) for v, _ in nbrs) / len(nbrs)


def exposure_summary(plan: AssignmentPlan, g: Graph, result: ClusteringResult) -> dict:
    """Realized versus expected exposure of every ego.

    Expected exposure takes the cluster alters as fully treated (or fully
    control) and every lost neighbour as treated with probability ``p``:
    ``(1 - loss) + p * loss`` in the treated-alters arm, ``p * loss`` in the
    other.
    """
    p = plan.params.get("p", 0.5)
    arms = plan.ego_arms()
    rows = []
    for c in result.clusters:
        if c.ego not in plan.assignments or any(a not in plan.assignments for a in c.cluster_alters):
            raise AssignmentError(f"plan does not cover cluster of ego {c.ego}")
        if c.ego not in g:
            raise AssignmentError(f"ego {c.ego} is not in the graph")
        if c.ego not in arms:
            continue
        treated_arm = arms[c.ego] is Variant.TREATED
        expected = (1 - c.loss_rate) * treated_arm + p * c.loss_rate
        rows.append({
            "ego": c.ego,
            "arm": arms[c.ego].value,
            "loss_rate": c.loss_rate,
            "exposure": exposure(plan, g, c.ego),
            "expected_exposure": expected,
        })
    summary = {}
    for arm in Variant:
        sel = [r for r in rows if r["arm"] == arm.value]
        x = np.array([r["exposure"] for r in sel], dtype=float)
        summary[arm.value] = {
            "egos": len(sel),
            "mean_exposure": float(x.mean()) if sel else math.nan,
            "mean_expected_exposure": float(np.mean([r["expected_exposure"] for r in sel])) if sel else math.nan,
            "std_err": float(x.std(ddof=1) / math.sqrt(len(sel))) if len(sel) > 1 else math.nan,
        }
    return {"rows": rows, "arms": summary}


def expected_exposure(alpha: float, p: float, alters_treated: bool) -> float:
    return (1 - alpha) * alters_treated + p * alpha

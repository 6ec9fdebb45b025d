"""Ego-level readout of an experiment: A/B and A/A t-tests, ego
representativity, and how the leftover population differs from everyone."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assignment import AssignmentPlan, Variant
from .clustering import ClusteringResult
from .graph import Graph
from .stats import InsufficientSampleError, TTestResult, standardized_mean_difference, welch_t_test

SIGNIFICANCE_GUIDANCE = 0.1


class AnalysisError(ValueError):
    pass


class OutcomeTable:
    """Per-member metric values; every row carries every metric."""

    def __init__(self, members: Sequence[int], columns: dict[str, Sequence[float]]):
        self.members = [int(m) for m in members]
        if len(set(self.members)) != len(self.members):
            raise AnalysisError("outcome table has duplicate members")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        for k, v in self.columns.items():
            if v.shape != (len(self.members),):
                raise AnalysisError(f"metric {k!r} has {v.size} values for {len(self.members)} members")
        self._index = {m: i for i, m in enumerate(self.members)}

    @property
    def metrics(self) -> list[str]:
        return list(self.columns)

    def __contains__(self, m) -> bool:
        return m in self._index

    def __len__(self) -> int:
        return len(self.members)

    def values(self, metric: str, members: Iterable[int]) -> np.ndarray:
        if metric not in self.columns:
            raise AnalysisError(f"unknown metric {metric!r}")
        col = self.columns[metric]
        try:
            return col[[self._index[m] for m in members]]
        except KeyError as exc:
            raise AnalysisError(f"no outcome row for member {exc.args[0]}") from None

    def row(self, m: int) -> dict[str, float]:
        i = self._index[m]
        return {k: float(v[i]) for k, v in self.columns.items()}

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("\t".join(["member_id", *self.columns]) + "\n")
        cols = list(self.columns.values())
        for i, m in enumerate(self.members):
            buf.write("\t".join([str(m), *(repr(float(c[i])) for c in cols)]) + "\n")
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> "OutcomeTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise AnalysisError("empty outcome file")
        header = lines[0].split("\t")
        if header[0] != "member_id" or len(header) < 2:
            raise AnalysisError("outcome header must be member_id<TAB>metric...")
        members, rows = [], []
        for lineno, line in enumerate(lines[1:], 2):
            parts = line.split("\t")
            if len(parts) != len(header):
                raise AnalysisError(f"outcome line {lineno}: expected {len(header)} columns")
            try:
                members.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise AnalysisError(f"outcome line {lineno}: {exc}") from None
        data = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
        return cls(members, {k: data[:, j] for j, k in enumerate(header[1:])})

    @classmethod
    def read(cls, path) -> "OutcomeTable":
        return cls.from_tsv(Path(path).read_text(encoding="utf-8"))


@dataclass
class AnalysisReport:
    results: list[TTestResult] = field(default_factory=list)
    aa_results: list[TTestResult] = field(default_factory=list)
    aa_failures: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)
    representativity: dict | None = None
    egos_treated_arm: int = 0
    egos_control_arm: int = 0
    aa_level: float = 0.05

    @property
    def aa_failed(self) -> bool:
        return bool(self.aa_failures)

    @property
    def analysis_units(self) -> int:
        return self.egos_treated_arm + self.egos_control_arm

    def to_dict(self) -> dict:
        return {
            "analysis_units": self.analysis_units,
            "egos_treated_arm": self.egos_treated_arm,
            "egos_control_arm": self.egos_control_arm,
            "results": [_annotated(r, r.metric in self.excluded) for r in self.results],
            "aa_level": self.aa_level,
            "aa_results": [r.to_dict() for r in self.aa_results],
            "aa_failures": list(self.aa_failures),
            "excluded": list(self.excluded),
            "representativity": self.representativity,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        out = [f"egos analysed: {self.egos_treated_arm} treated-alters / {self.egos_control_arm} control-alters"]
        head = f"{'metric':<20}{'mean_T':>12}{'mean_C':>12}{'delta%':>9}{'t':>9}{'p':>9}  note"
        if self.results:
            out += ["", head]
            for r in self.results:
                note = _annotated(r, r.metric in self.excluded)["note"]
                out.append(
                    f"{r.metric:<20}{r.mean_a:>12.4g}{r.mean_b:>12.4g}{100 * r.delta_pct:>8.2f}%"
                    f"{r.t_stat:>9.3f}{r.p_value:>9.4f}  {note}"
                )
        if self.aa_results:
            out += ["", f"A/A checks (level {self.aa_level}):", head]
            for r in self.aa_results:
                note = "A/A FAILED" if r.metric in self.aa_failures else "ok"
                out.append(
                    f"{r.metric:<20}{r.mean_a:>12.4g}{r.mean_b:>12.4g}{100 * r.delta_pct:>8.2f}%"
                    f"{r.t_stat:>9.3f}{r.p_value:>9.4f}  {note}"
                )
        return "\n".join(out) + "\n"


def _annotated(r: TTestResult, excluded: bool) -> dict:
    d = r.to_dict()
    if excluded:
        d["note"] = "excluded: significant in A/A"
    elif r.degenerate:
        d["note"] = "degenerate: zero variance in both arms"
    elif r.p_value < SIGNIFICANCE_GUIDANCE:
        d["note"] = f"p < {SIGNIFICANCE_GUIDANCE}: worth a closer look"
    else:
        d["note"] = ""
    return d


def _clean(obj):
    # JSON has no inf/nan
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def _arms(plan: AssignmentPlan) -> tuple[list[int], list[int]]:
    arms = plan.ego_arms()
    treated = [e for e, v in arms.items() if v is Variant.TREATED]
    control = [e for e, v in arms.items() if v is Variant.CONTROL]
    return treated, control


def _ego_tests(plan: AssignmentPlan, outcomes: OutcomeTable, metrics: Sequence[str]) -> tuple[list[TTestResult], int, int]:
    treated, control = _arms(plan)
    if len(treated) < 2 or len(control) < 2:
        raise InsufficientSampleError(
            f"need at least 2 egos per arm, got {len(treated)} treated-alters and {len(control)} control-alters"
        )
    missing = [e for e in treated + control if e not in outcomes]
    if missing:
        raise AnalysisError(f"{len(missing)} egos have no outcome row (first: {missing[0]})")
    results = [
        welch_t_test(outcomes.values(m, treated), outcomes.values(m, control), metric=m)
        for m in metrics
    ]
    return results, len(treated), len(control)


def aa_check(plan: AssignmentPlan, pre_outcomes: OutcomeTable, metrics: Sequence[str] | None = None,
             level: float = 0.05) -> AnalysisReport:
    """A/A t-tests on pre-experiment data; significant metrics are failures.

    A failing randomization is reported, never re-drawn.
    """
    metrics = list(metrics or pre_outcomes.metrics)
    results, nt, nc = _ego_tests(plan, pre_outcomes, metrics)
    failures = [r.metric for r in results if r.p_value < level]
    return AnalysisReport(aa_results=results, aa_failures=failures, excluded=list(failures),
                          egos_treated_arm=nt, egos_control_arm=nc, aa_level=level)


def analyze_experiment(plan: AssignmentPlan, outcomes: OutcomeTable, metrics: Sequence[str] | None = None,
                       aa: AnalysisReport | None = None) -> AnalysisReport:
    """Compare egos whose alters were treated against egos whose alters were
    control. Alters and leftover members are never analysis units."""
    metrics = list(metrics or outcomes.metrics)
    results, nt, nc = _ego_tests(plan, outcomes, metrics)
    report = AnalysisReport(results=results, egos_treated_arm=nt, egos_control_arm=nc)
    if aa is not None:
        report.aa_results = aa.aa_results
        report.aa_failures = list(aa.aa_failures)
        report.aa_level = aa.aa_level
        report.excluded = [m for m in metrics if m in aa.aa_failures]
    return report


def _rep_entry(ego_vals, ref_vals) -> dict:
    t = welch_t_test(ego_vals, ref_vals)
    return {
        "ego_mean": t.mean_a,
        "population_mean": t.mean_b,
        "smd": standardized_mean_difference(ego_vals, ref_vals),
        "t_stat": t.t_stat,
        "p_value": t.p_value,
        "n_egos": t.n_a,
        "n_population": t.n_b,
    }


def representativity_check(result: ClusteringResult, g: Graph, pre_metrics: OutcomeTable | None = None,
                           level: float = 0.05) -> dict:
    """Degree and pre-period metrics of egos against the ego-eligible
    population (members with a neighbour) and against all members."""
    egos = result.egos
    degs = g.degrees()
    eligible = [m for m in g.nodes if degs[m] > 0]
    report = {"level": level, "variables": {}}
    variables = {"degree": lambda ms: np.array([degs[m] for m in ms], dtype=float)}
    for name in (pre_metrics.metrics if pre_metrics is not None else []):
        variables[name] = lambda ms, name=name: pre_metrics.values(name, ms)
    for name, get in variables.items():
        ego_vals = get(egos)
        report["variables"][name] = {
            "eligible": _rep_entry(ego_vals, get(eligible)),
            "all_members": _rep_entry(ego_vals, get(g.nodes)),
        }
    report["rejected"] = sorted(
        k for k, v in report["variables"].items() if v["eligible"]["p_value"] < level
    )
    return report


def leftover_diagnostics(result: ClusteringResult, metrics: OutcomeTable, g: Graph | None = None) -> dict:
    """Mean and sd of each metric over everyone and over the leftover set,
    scaled so the population mean is 100. With a graph, degree is included."""
    population = list(metrics.members)
    cols = dict(metrics.columns)
    if g is not None:
        degs = g.degrees()
        cols = {"degree": np.array([degs[m] for m in population], dtype=float), **cols}
    left = [m for m in result.leftover if m in metrics]
    if len(left) != len(result.leftover):
        raise AnalysisError("metrics do not cover the leftover population")
    idx = [metrics._index[m] for m in left]
    rows = []
    for name, col in cols.items():
        mean = float(col.mean())
        scale = 100.0 / mean if mean != 0 else math.nan
        row = {
            "metric": name,
            "population_mean": 100.0,
            "population_sd": float(col.std(ddof=1) * scale) if col.size > 1 else math.nan,
            "population_n": int(col.size),
            "leftover_n": len(idx),
            "leftover_mean": None,
            "leftover_sd": None,
        }
        if idx:
            sub = col[idx]
            row["leftover_mean"] = float(sub.mean() * scale)
            row["leftover_sd"] = float(sub.std(ddof=1) * scale) if sub.size > 1 else math.nan
        rows.append(row)
    return {"empty_leftover": not idx, "rows": rows}


def leftover_table(diag: dict) -> str:
    out = [f"{'':<16}" + "".join(f"{r['metric']:>22}" for r in diag["rows"])]
    out.append(f"{'all members':<16}" + "".join(
        f"{r['population_mean']:>12.0f} +- {r['population_sd']:<6.0f}" for r in diag["rows"]))
    if diag["empty_leftover"]:
        out.append(f"{'leftover':<16}(empty)")
    else:
        out.append(f"{'leftover':<16}" + "".join(
            f"{r['leftover_mean']:>12.0f} +- {r['leftover_sd']:<6.0f}" for r in diag["rows"]))
    return "\n".join(out) + "\n"

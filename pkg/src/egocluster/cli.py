"""Command line front-end: ingest, cluster, assign, analyze, simulate, diagnose.

Every subcommand writes its artifacts into ``--out`` together with a
``<subcommand>.meta.json`` sidecar holding the parameters, input hashes,
artifact hashes and creation time. ``SOURCE_DATE_EPOCH`` pins the creation
time for reproducible builds.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .analysis import (
    AnalysisError,
    OutcomeTable,
    aa_check,
    analyze_experiment,
    leftover_diagnostics,
    leftover_table,
    representativity_check,
)
from .assignment import AssignmentError, AssignmentPlan, EgoMode, assign
from .clustering import (
    ClusteringError,
    ClusteringResult,
    diagnostics_report,
    diagnostics_tsv,
    naive_cluster,
    reattach_alters,
    stratified_cluster,
)
from .generators import GraphSpecError
from .graph import GraphError, load_graph, summary_json
from .simulation import (
    GraphSpec,
    OutcomeModel,
    attenuation_study,
    generate_graph,
    histograms_tsv,
    naive_vs_stratified_study,
    simulate_outcomes,
)
from .stats import InsufficientSampleError

log = logging.getLogger("egocluster")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_AA_FAILED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures (exit 1); exit 2 means a failed A/A check
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


@dataclass
class PipelineConfig:
    subcommand: str
    out: Path
    params: dict = field(default_factory=dict)
    inputs: dict[str, Path] = field(default_factory=dict)

    def validate(self) -> None:
        for name, path in self.inputs.items():
            if path is not None and not Path(path).is_file():
                raise UsageError(f"--{name.replace('_', '-')}: no such file: {path}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> dt.datetime:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return dt.datetime.fromtimestamp(int(epoch), tz=dt.timezone.utc)
    return dt.datetime.now(tz=dt.timezone.utc).replace(microsecond=0)


def _write_artifacts(cfg: PipelineConfig, artifacts: dict[str, str]) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    for name, text in artifacts.items():
        (cfg.out / name).write_text(text, encoding="utf-8")
    meta = {
        "tool": "egocluster",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "params": cfg.params,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in cfg.inputs.items() if v is not None},
        "artifacts": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in artifacts.items()},
        "created_at": _now().isoformat(),
    }
    (cfg.out / f"{cfg.subcommand}.meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _read_clusters(path: Path) -> ClusteringResult:
    try:
        return ClusteringResult.from_json(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a clusters.json file ({exc})") from None


def _clustering_age_days(clusters_path: Path) -> float | None:
    meta = clusters_path.parent / "cluster.meta.json"
    if not meta.is_file():
        return None
    created = dt.datetime.fromisoformat(json.loads(meta.read_text())["created_at"])
    return (_now() - created).total_seconds() / 86400.0


def cmd_ingest(args) -> int:
    cfg = PipelineConfig("ingest", args.out, {}, {"graph": args.graph})
    cfg.validate()
    g = load_graph(args.graph)
    _write_artifacts(cfg, {"graph_summary.json": summary_json(g)})
    print(f"ingest: {g.node_count} nodes, {g.edge_count} edges -> {args.out / 'graph_summary.json'}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    params = {"algo": args.algo, "seed": args.seed, "window": args.window}
    if args.algo == "stratified":
        params.update(target_loss=args.target_loss, bins=args.bins, reattach=not args.no_reattach)
    else:
        params.update(stop_loss=args.stop_loss)
    cfg = PipelineConfig("cluster", args.out, params, {"graph": args.graph})
    cfg.validate()
    g = load_graph(args.graph)
    if args.algo == "stratified":
        result = stratified_cluster(g, args.target_loss, args.bins, args.seed)
        if not args.no_reattach:
            result = reattach_alters(g, result)
    else:
        result = naive_cluster(g, args.stop_loss, args.window, args.seed)
    rows = diagnostics_report(result, args.window)
    _write_artifacts(cfg, {
        "clusters.tsv": result.clusters_tsv(),
        "clusters.json": result.to_json(),
        "leftover.txt": result.leftover_txt(),
        "diagnostics.tsv": diagnostics_tsv(rows),
    })
    worst = max((c.loss_rate for c in result.clusters), default=float("nan"))
    print(f"cluster: {len(result.clusters)} egos, mean loss {result.mean_loss_rate:.4f}, "
          f"max loss {worst:.4f}, {len(result.leftover)} leftover -> {args.out}")
    return EXIT_OK


def cmd_assign(args) -> int:
    cfg = PipelineConfig("assign", args.out, {"mode": args.mode, "p": args.p, "seed": args.seed},
                         {"clusters": args.clusters})
    cfg.validate()
    age = _clustering_age_days(args.clusters)
    if age is not None and age > args.max_age_days:
        log.warning("clustering is %.1f days old (limit %s); re-run the clustering for a new experiment",
                    age, args.max_age_days)
    result = _read_clusters(args.clusters)
    plan = assign(result, EgoMode(args.mode), args.p, args.seed)
    _write_artifacts(cfg, {"plan.tsv": plan.to_tsv()})
    treated = sum(plan.ego_coin.values())
    print(f"assign: {len(plan.ego_coin)} egos ({treated} with treated alters), "
          f"{len(plan.assignments)} members -> {args.out / 'plan.tsv'}")
    return EXIT_OK


def _read_plan(path: Path) -> AssignmentPlan:
    params = {}
    meta = path.parent / "assign.meta.json"
    if meta.is_file():
        params = json.loads(meta.read_text()).get("params", {})
    return AssignmentPlan.from_tsv(path.read_text(encoding="utf-8"), params)


def cmd_analyze(args) -> int:
    cfg = PipelineConfig("analyze", args.out,
                         {"metrics": args.metrics, "aa_level": args.aa_level},
                         {"plan": args.plan, "outcomes": args.outcomes, "pre_outcomes": args.pre_outcomes})
    cfg.validate()
    plan = _read_plan(args.plan)
    outcomes = OutcomeTable.read(args.outcomes)
    metrics = args.metrics.split(",") if args.metrics else outcomes.metrics
    aa = None
    if args.pre_outcomes is not None:
        aa = aa_check(plan, OutcomeTable.read(args.pre_outcomes), None, args.aa_level)
    report = analyze_experiment(plan, outcomes, metrics, aa)
    _write_artifacts(cfg, {"report.json": report.to_json(), "report.txt": report.to_text()})
    sys.stdout.write(report.to_text())
    if report.aa_failed:
        print(f"analyze: A/A check failed for {', '.join(report.aa_failures)}")
        return EXIT_AA_FAILED
    print(f"analyze: {report.analysis_units} egos, {len(report.results)} metrics -> {args.out}")
    return EXIT_OK


def _graph_spec(cfg: dict, seed: int) -> GraphSpec:
    d = dict(cfg)
    d.setdefault("seed", seed)
    return GraphSpec.from_dict(d)


def cmd_simulate(args) -> int:
    try:
        conf = json.loads(args.config.read_text(encoding="utf-8")) if args.config.is_file() else None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
    if conf is None:
        raise UsageError(f"--config: no such file: {args.config}")
    kind = conf.get("kind")
    inputs = {"config": args.config}
    for key in ("graph_path", "plan_path"):
        if key in conf:
            inputs[key] = Path(conf[key])
    cfg = PipelineConfig("simulate", args.out, {"seed": args.seed, "config": conf}, inputs)
    cfg.validate()
    if kind == "graph":
        g = generate_graph(_graph_spec(conf["graph"], args.seed))
        artifacts = {"graph.tsv": g.to_edge_list()}
        msg = f"{g.node_count} nodes, {g.edge_count} edges"
    elif kind == "outcomes":
        g = load_graph(conf["graph_path"])
        plan = _read_plan(Path(conf["plan_path"]))
        model = OutcomeModel(**conf.get("model", {}))
        table = simulate_outcomes(g, plan, model, args.seed, conf.get("metric", "y"))
        artifacts = {"outcomes.tsv": table.to_tsv()}
        msg = f"outcomes for {len(table)} members"
    elif kind == "attenuation":
        rep = attenuation_study(
            _graph_spec(conf["graph"], args.seed),
            OutcomeModel(**conf.get("model", {})),
            conf.get("target_loss", 0.2),
            conf.get("p", 0.5),
            conf.get("replications", 100),
            args.seed,
            EgoMode(conf.get("mode", EgoMode.ALL_TREATED.value)),
            conf.get("bin_count", 20),
            conf.get("workers", 1),
        )
        artifacts = {"attenuation.json": json.dumps(rep, sort_keys=True, indent=2) + "\n"}
        msg = (f"mean estimate {rep['mean_estimate']:.4f} +- {rep['mc_std_err']:.4f}, "
               f"mean loss {rep['mean_alpha']:.4f}")
    elif kind == "naive_vs_stratified":
        rep = naive_vs_stratified_study(
            _graph_spec(conf["graph"], args.seed),
            conf.get("seeds", list(range(args.seed, args.seed + 5))),
            conf.get("target_loss", 0.2),
            conf.get("bin_count", 20),
        )
        artifacts = {
            "naive_vs_stratified.json": json.dumps(rep, sort_keys=True, indent=2) + "\n",
            "loss_histograms.tsv": histograms_tsv(rep),
        }
        msg = ", ".join(f"{k} mean loss {v:.3f}" for k, v in rep["mean_loss"].items())
    else:
        raise UsageError(f"config kind must be graph, outcomes, attenuation or naive_vs_stratified, got {kind!r}")
    _write_artifacts(cfg, artifacts)
    print(f"simulate {kind}: {msg} -> {args.out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = PipelineConfig("diagnose", args.out, {"window": args.window},
                         {"clusters": args.clusters, "graph": args.graph, "metrics": args.metrics})
    cfg.validate()
    result = _read_clusters(args.clusters)
    rows = diagnostics_report(result, args.window)
    artifacts = {
        "diagnostics.tsv": diagnostics_tsv(rows),
        "diagnostics_summary.json": json.dumps(result.diagnostics.rollups(args.window), sort_keys=True, indent=2) + "\n",
    }
    if args.graph is not None:
        g = load_graph(args.graph)
        pre = OutcomeTable.read(args.metrics) if args.metrics is not None else None
        rep = representativity_check(result, g, pre)
        artifacts["representativity.json"] = json.dumps(rep, sort_keys=True, indent=2) + "\n"
        if pre is not None:
            left = leftover_diagnostics(result, pre, g)
            artifacts["leftover.json"] = json.dumps(left, sort_keys=True, indent=2) + "\n"
            artifacts["leftover.txt"] = leftover_table(left)
    _write_artifacts(cfg, artifacts)
    print(f"diagnose: {len(rows)} draws, {len(result.clusters)} egos -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="egocluster", description="Ego-cluster randomization for network-effect experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="validate an edge list and write a graph summary")
    s.add_argument("--graph", type=Path, required=True, help="edge list: src dst [weight] per line")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("cluster", help="build ego clusters")
    s.add_argument("--graph", type=Path, required=True)
    s.add_argument("--algo", choices=["stratified", "naive"], default="stratified")
    s.add_argument("--target-loss", type=float, default=0.2, help="loss-rate cap (stratified)")
    s.add_argument("--bins", type=int, default=20, help="degree bins (stratified)")
    s.add_argument("--no-reattach", action="store_true", help="skip alter reattachment (stratified)")
    s.add_argument("--stop-loss", type=float, default=0.25, help="trailing mean loss that stops sampling (naive)")
    s.add_argument("--window", type=int, default=20, help="trailing window for the stop rule and diagnostics")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("assign", help="randomize clusters into variants")
    s.add_argument("--clusters", type=Path, required=True, help="clusters.json from 'cluster'")
    s.add_argument("--mode", choices=[m.value for m in EgoMode], default=EgoMode.ALL_TREATED.value)
    s.add_argument("--p", type=float, default=0.5, help="treatment probability")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--max-age-days", type=float, default=30.0, help="warn when the clustering is older")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_assign)

    s = sub.add_parser("analyze", help="ego-level t-tests, optionally with an A/A check")
    s.add_argument("--plan", type=Path, required=True)
    s.add_argument("--outcomes", type=Path, required=True, help="TSV member_id<TAB>metric...")
    s.add_argument("--pre-outcomes", type=Path, help="pre-experiment TSV for the A/A check")
    s.add_argument("--metrics", help="comma separated subset of metrics")
    s.add_argument("--aa-level", type=float, default=0.05)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="synthetic graphs, outcomes and estimator studies from a JSON config")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("diagnose", help="per-draw diagnostics, representativity and leftover checks")
    s.add_argument("--clusters", type=Path, required=True)
    s.add_argument("--window", type=int, default=20)
    s.add_argument("--graph", type=Path, help="graph used for the clustering (enables representativity)")
    s.add_argument("--metrics", type=Path, help="pre-period metrics TSV (enables leftover comparison)")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_diagnose)
    return p


def run_subcommand(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InsufficientSampleError as exc:
        print(f"egocluster {args.command}: insufficient sample: {exc}", file=sys.stderr)
    except (UsageError, GraphError, GraphSpecError, ClusteringError, AssignmentError, AnalysisError,
            ValueError, KeyError, OSError) as exc:
        print(f"egocluster {args.command}: {exc}", file=sys.stderr)
    return EXIT_INVALID


def main() -> None:
    sys.exit(run_subcommand())

"""Ego-cluster randomization for measuring network effects in A/B tests."""

__version__ = "0.1.0"

from .analysis import (
    AnalysisReport,
    OutcomeTable,
    aa_check,
    analyze_experiment,
    leftover_diagnostics,
    representativity_check,
)
from .assignment import AssignmentPlan, EgoMode, Role, Variant, assign, exposure_summary
from .clustering import (
    ClusteringResult,
    EgoCluster,
    diagnostics_report,
    naive_cluster,
    reattach_alters,
    stratified_cluster,
)
from .graph import DegreeBins, Graph, degree, load_graph, make_degree_bins
from .simulation import (
    GraphSpec,
    OutcomeModel,
    attenuation_study,
    generate_graph,
    naive_vs_stratified_study,
    simulate_outcomes,
)
from .stats import TTestResult, welch_t_test

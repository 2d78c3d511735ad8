"""Optimal software diversification for networked systems.

The toolkit derives product vulnerability-similarity tables from CVE feeds,
compiles a network's candidate products into a pairwise MRF solved by
sequential tree-reweighted message passing, evaluates assignments with a
noisy-OR Bayesian diversity metric, and measures resilience with a
Monte-Carlo propagation simulator. See the demos directory for worked
examples of each capability; the ``divnet`` command wires them into a
pipeline.
"""

from .bayes import (
    AttackNode,
    BayesNet,
    ExploitKit,
    InferenceResult,
    attack_cpt,
    build_bn,
    diversity_metric,
    infection_prob,
    infer,
    noisy_or,
)
from .errors import (
    BuildError,
    DivnetError,
    FeedParseError,
    FormatError,
    GuardError,
    MissingEntryError,
    ValidationError,
)
from .harness import (
    Budgets,
    ExperimentReport,
    ExperimentRow,
    GenSpec,
    count_attack_paths,
    gen_network,
    routing_nodes,
    run_experiment,
    write_report_csv,
)
from .mrf import (
    MrfProblem,
    SolveResult,
    SolverConfig,
    brute_force,
    build_problem,
    energy,
    solve_trws,
)
from .netmodel import (
    ALL_HOSTS,
    Assignment,
    Clamp,
    Constraint,
    Network,
    Violation,
    apply_clamps,
    check_constraints,
    mono_assignment,
    random_assignment,
    validate_assignment,
    validate_network,
)
from .scenario import Scenario, load_assignment, load_scenario, save_assignment, save_scenario
from .sim import EdgeRates, SimReport, SimScenario, edge_rates, mttc, run_once
from .similarity import (
    ProductId,
    SimilarityTable,
    VulnCatalog,
    build_table,
    ingest_feed,
    jaccard,
    load_table,
    save_table,
)

__version__ = "0.1.0"

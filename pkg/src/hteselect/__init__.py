"""Causal feature selection for heterogeneous-treatment-effect estimation.

The package generates ground-truth structural causal models and datasets,
fits meta-learner effect estimators on selected feature subsets, scores
them with heuristic fit metrics, discovers local causal structure around
the treatment, and benchmarks the resulting selectors against vanilla and
oracle baselines.
"""

from .errors import (
    ConfigError,
    ConstantColumn,
    DegenerateArms,
    DimensionMismatch,
    HteSelectError,
    InfeasibleSpec,
    LengthMismatch,
    NotPositiveDefinite,
    NoValidPair,
    SingularSystem,
)
from .estimators import (
    CateEstimator,
    fit_dr_learner,
    fit_estimator,
    fit_s_learner,
    fit_t_learner,
    fit_x_learner,
    predict_cate,
)
from .fit_metrics import (
    FitMetricReport,
    cfcv,
    inclusion_error,
    mse_true,
    nn_pehe,
    plugin_tau,
    rank_methods,
    tau_risk,
)
from .harness import (
    BenchmarkRow,
    ExperimentConfig,
    MethodSpec,
    hte_fs,
    report,
    run_experiment,
)
from .hte_fit import SelectionTrace, backward_select, forward_select, select_features
from .scm_gen import (
    CausalGraph,
    Dataset,
    ScmSpec,
    generate,
    has_backdoor_path,
    make_dataset,
    sample_graph,
    sample_noise,
    sample_or_retry,
    select_roles,
    true_ite,
)
# the discovery entry point keeps its module-level home
# (hteselect.structure_fit.structure_fit) so the submodule name stays usable
from .structure_fit import (
    CiTestConfig,
    DSepOracle,
    FisherZTester,
    GraphOrienter,
    PartialGraph,
    discover_colliders,
    fisher_z,
    local_structure,
    oracle_adjustment,
    orient_reci,
    pc_simple,
)
from .supervised import LinearModel, fit_logistic, fit_ridge, predict

__version__ = "0.1.0"

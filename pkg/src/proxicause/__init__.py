"""Causal effect estimation from selection-biased data with proxy variables.

The package recovers interventional means E[Y | do(X)] for continuous
treatments and targets when the labeled data passed through a selection
mechanism and the treatment may be confounded.  It combines a regression on
the selected sample with plug-in quantities from an external, unbiased
sample of treatment and proxy columns, guarded by graphical criteria that
decide when the construction is valid.
"""

from .data import LabeledDataset, Provenance
from .estimators import (
    CausalCurve,
    DegenerateSampleError,
    EstimationError,
    StageConfig,
    evaluate_mse,
    fit_naive,
    fit_rr,
    fit_tsr,
    rr_closed_form,
)
from .examples import EXAMPLE_NAMES, BuiltinExample, TruthFunctions, builtin_example
from .graph import (
    CausalDag,
    CriterionReport,
    GraphError,
    TsrCase,
    check_do_calculus_rule,
    check_gact3,
    check_pmar,
    check_recoverability,
    check_selection_backdoor,
    d_separated,
    decompose_proxies,
    descendants,
    load_dag,
    mutilate,
    tsr_case,
)
from .linear import (
    DEFAULT_LAMBDA_GRID,
    DegenerateFeatureError,
    DesignMatrix,
    FeatureMap,
    FittedLinearModel,
    SingularDesignError,
    cross_validate_lambda,
    expand_features,
    fit_ols,
    fit_ridge,
    predict,
)
from .scm import (
    DoCurve,
    Exogenous,
    LogisticSelection,
    PairedSample,
    SampleMode,
    ScmSpec,
    SimulationError,
    Structural,
    ThresholdClause,
    ThresholdSelection,
    VarRole,
    apply_selection,
    make_paired,
    oracle_do_curve,
    sample,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Workbench for measuring how closely a black-box ML service can be
imitated: served modules, extraction attacks, a two-party assisted-learning
protocol, and Monte-Carlo estimation of imitation privacy."""

__version__ = "0.1.0"

from .core import (
    EPS_DENOM,
    DegenerateDenominatorError,
    DimensionMismatchError,
    FitFailureError,
    InformationSet,
    Learner,
    LossFn,
    Module,
    PredictionFn,
    QueryBudget,
    SCALED_L2,
    SQUARED,
    ZERO_ONE,
    as_data_matrix,
    as_label_vector,
    evaluate,
    fit_module,
    loss,
    loss_by_name,
    pair_losses,
)
from .learners import (
    LinearClassifier,
    LogisticModel,
    OlsModel,
    RegressionTree,
    classify,
    fit_logistic,
    fit_ols,
    fit_tree,
)
from .metric import (
    FunctionFamilyTaskSampler,
    FunctionImitation,
    GaussianTestSampler,
    LinearTaskSampler,
    PrivacyEstimate,
    TaskDegenerateError,
    check_eps_delta,
    empirical_rho,
    estimate_rho,
    self_imitation,
    zero_imitation,
)
from .protocol import (
    AssistedPredictor,
    ProtocolConfig,
    ProtocolTranscript,
    oracle_fit,
    run_stage1,
    stage2_predict,
)
from .rng import child_rng, child_seed

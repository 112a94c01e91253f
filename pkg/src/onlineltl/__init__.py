"""Online learning-to-learn of a shared regularisation bias for within-task SGD."""

__version__ = "0.1.0"

from .environments import (
    EnvironmentSpec,
    EnvMode,
    TaskCollection,
    environment_variance,
    gen_classification_tasks,
    gen_regression_tasks,
    generate_tasks,
    load_collection,
    load_rating_tasks,
    save_collection,
    split_collection,
)
from .erm import ErmSolution, exact_meta_gradient, fista_solve, meta_objective_value
from .estimators import BiasedSGD, OnlineBiasLearner
from .evaluation import (
    HyperGrid,
    LearningCurve,
    baseline_curves,
    online_model_selection,
    test_error,
    theoretical_rates,
)
from .losses import (
    LossKind,
    SubgradientInterval,
    conjugate_prox,
    loss_conjugate,
    loss_prox,
    loss_subgradient,
    loss_value,
    pick_subgradient,
)
from .meta import GradientMode, MetaConfig, MetaRun, meta_step, meta_train
from .task_data import (
    TaskDataset,
    TaskSplit,
    dual_objective,
    empirical_risk,
    primal_from_dual,
    regularized_empirical_risk,
)
from .within_task import (
    InnerRun,
    approx_meta_gradient,
    dual_coordinate_inner,
    epsilon_certificate,
    inner_regret_gap,
    sgd_inner,
)

"""Learning classifiers from weak multi-instance supervision.

Hidden label vectors are observed only through a deterministic transition
map; the package covers the full pipeline: transition construction and
unambiguity analysis, exact weighted-model-counting losses with gradients,
gradient-descent trainers for known, multi-block, and unknown transitions,
and the closed-form sample-complexity and risk-bound calculators.
"""

from .expr import (
    ExprError,
    ExprSyntaxError,
    TransitionExpr,
    UnknownVariableError,
    VariableIndexError,
    parse_transition_expr,
)
from .transitions import (
    ENUMERATION_CAP,
    LabelSpace,
    Transition,
    TransitionSpace,
    from_table,
    load_space,
    load_transition,
    materialize,
    parse_space_text,
    parse_transition_text,
    tabulate,
    weighted_sum_space,
)
from .unambiguity import (
    CheckReport,
    MultiProblemSpec,
    TransitionMatrix,
    ambiguity_degree_deterministic,
    ambiguity_degree_stochastic,
    build_transition_matrix,
    check_1_unambiguous,
    check_I_unambiguous,
    check_M_unambiguous,
    check_multi_unambiguous,
    check_space_unambiguous,
    check_space_unambiguous_all,
    left_invertible,
)
from .wmc import (
    MAX_ENUM_VARIABLES,
    MAX_IE_DISJUNCTS,
    WEIGHT_EPS,
    WMC_FLOOR,
    DnfFormula,
    DualScalar,
    LabelVariable,
    WeightAssignment,
    formula_from_vectors,
    grad_topk_loss,
    semantic_loss,
    topk_l1_loss,
    topk_partial_loss,
    topk_select,
    wmc,
    wmc_dual,
    zero_one_partial_loss,
)
from .learner import (
    ConfusionStats,
    EpochStats,
    EvalReport,
    LabeledData,
    ScoringModel,
    TrainConfig,
    TrainingDiverged,
    TransitionPosterior,
    WeakDataset,
    WeakSample,
    evaluate,
    load_labeled,
    load_models,
    load_weak,
    make_synthetic_dataset,
    rademacher_estimate,
    save_labeled,
    save_models,
    save_weak,
    train_multi,
    train_single,
    train_unknown,
    weak_labelize,
    write_history,
)
from .bounds import (
    error_bound_topk,
    error_bound_topk_multi,
    phi_I,
    risk_transfer_M,
    risk_transfer_ambiguity,
    risk_transfer_multi,
    sample_complexity_known,
    sample_complexity_multi,
    sample_complexity_sensitive,
    sample_complexity_unknown,
    vc_bounds,
)
from .presets import PRESETS, get_preset

__version__ = "0.1.0"

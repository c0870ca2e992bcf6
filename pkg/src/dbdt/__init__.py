"""Deep boosting decision trees: soft-tree gradient boosting with
compositional AUC maximization for imbalanced binary classification."""

from .auc_head import AUCHead, auc_surrogate, g1, g2, g3, psi, q_map, score_for_auc
from .data import (
    ColumnSpec,
    DataError,
    Dataset,
    NormalizationStats,
    SchemaError,
    apply_normalize,
    batch_iter,
    fit_normalize,
    load_csv,
    schema_from_json,
    split,
    undersample_majority,
)
from .ensemble import (
    DBDTModel,
    ensemble_backward,
    ensemble_score,
    ensemble_scores,
    global_objective,
    init_model,
    local_loss,
    partial_score,
    predict_label,
    residuals,
)
from .importance import ImportanceReport, permutation_importance
from .metrics import ConfusionMatrix, RocCurve, auc, confusion, h_measure, roc_curve
from .model_io import load_model, save_model
from .sdt import (
    ForwardTrace,
    NodeNet,
    SDTParams,
    balance_alpha,
    hard_route,
    leaf_class_distribution,
    path_probabilities,
    predict_score,
    reg_balance,
    reg_l2,
    routing_prob,
)
from .trainer import (
    PDSCAConfig,
    PDSCAState,
    SGDConfig,
    TrainingDivergedError,
    pdsca_step,
    train_pdsca,
    train_sgd,
)

__version__ = "0.1.0"

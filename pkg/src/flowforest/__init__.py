"""SYN flood detection toolkit: data prep, random forest, cross-validated tuning."""

from .crossval import (
    AggregateMetrics,
    CrossValConfig,
    CrossValResult,
    SplitPlan,
    cross_val_model,
    stratified_kfold,
)
from .errors import ConfigError, DataError, FlowForestError, ModelFormatError
from .flowdata import (
    CleanPolicy,
    CleanStats,
    Dataset,
    RawTable,
    ScalerParams,
    apply_scaler,
    clean,
    clean_csv,
    fit_scaler,
    load_csv,
    train_test_split,
    write_csv,
)
from .forest import (
    FeatureMode,
    ForestHyperparams,
    ForestModel,
    Internal,
    Leaf,
    best_split,
    bootstrap_indices,
    derive_seed,
    fit_forest,
    gini,
    grow_tree,
    predict,
    predict_score,
    tree_depth,
)
from .metrics import (
    ConfusionMatrix,
    DerivedMetrics,
    MetricsReport,
    confusion,
    derive_metrics,
    evaluate_predictions,
    roc_auc,
    time_predict,
)
from .modelfile import load_model, save_model
from .synthgen import SynthConfig, generate
from .tuner import GridSpec, TuneResult, finalize, grid_search, select_best

__version__ = "0.1.0"

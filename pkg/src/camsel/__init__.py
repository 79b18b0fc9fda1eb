"""Learning on-air camera selection from multi-view features.

Broadcast logs record which camera a human operator put on air, but only
that camera's footage; the other views of the same instant are missing not
at random. This package imputes those missing views with a random survival
forest, verifies the imputations against a model trained on complete data,
and trains a random-forest selector on the enriched set. A synthetic
multi-view generator with known ground truth, an evaluation harness, and a
``camsel`` command-line tool round out the workflow.
"""

__version__ = "0.1.0"

from .data import (
    CameraId,
    Dataset,
    DatasetSchema,
    FeatureBlock,
    MultiViewSample,
    flatten,
    load_dataset,
    load_schema,
    save_dataset,
    save_schema,
    split_complete_incomplete,
)
from .forest import Forest, ForestConfig, TreeNode, train_forest
from .heatmap import (
    DetectionBox,
    GridGeometry,
    Heatmap,
    box_points,
    build_heatmap,
    contrastive_loss,
    featurize_boxes,
    point_weights,
    pool_heatmap,
)
from .impute import (
    ImputationErrorReport,
    ImputationResult,
    SurvivalConfig,
    SurvivalForest,
    imputation_error,
    impute_mean,
    impute_nn,
    impute_rsf,
    node_draw_bounds,
)
from .evalkit import (
    EvalReport,
    baseline_constant,
    cv_splits,
    evaluate,
    imputation_benchmark,
    mask_tail_mnar,
    switch_stats,
)
from .pipeline import (
    PipelineConfig,
    SelectionTimeline,
    final_forest_config,
    predict_sequence,
    smooth_labels,
    smooth_timeline,
    train_full,
    verify_imputed,
)
from .synth import SynthConfig, generate

__all__ = [
    "__version__",
    "CameraId",
    "Dataset",
    "DatasetSchema",
    "FeatureBlock",
    "MultiViewSample",
    "flatten",
    "load_dataset",
    "load_schema",
    "save_dataset",
    "save_schema",
    "split_complete_incomplete",
    "Forest",
    "ForestConfig",
    "TreeNode",
    "train_forest",
    "DetectionBox",
    "GridGeometry",
    "Heatmap",
    "box_points",
    "build_heatmap",
    "contrastive_loss",
    "featurize_boxes",
    "point_weights",
    "pool_heatmap",
    "ImputationErrorReport",
    "ImputationResult",
    "SurvivalConfig",
    "SurvivalForest",
    "imputation_error",
    "impute_mean",
    "impute_nn",
    "impute_rsf",
    "node_draw_bounds",
    "EvalReport",
    "baseline_constant",
    "cv_splits",
    "evaluate",
    "imputation_benchmark",
    "mask_tail_mnar",
    "switch_stats",
    "PipelineConfig",
    "SelectionTimeline",
    "final_forest_config",
    "predict_sequence",
    "smooth_labels",
    "smooth_timeline",
    "train_full",
    "verify_imputed",
    "SynthConfig",
    "generate",
]

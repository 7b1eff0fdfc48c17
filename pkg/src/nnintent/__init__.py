"""Few-shot intent detection with out-of-scope rejection.

The library classifies an utterance by matching it pairwise against a small
bank of labeled examples and rejecting to out-of-scope when the best match
score falls below a dev-calibrated threshold. Four decision rules share
that contract: a pairwise nearest-neighbor matcher, its faster two-stage
retrieve-then-rerank variant, an embedding k-NN baseline, and a centroid
softmax classifier baseline.
"""

from .classify import (
    Method,
    Prediction,
    centroid_classifier_predict,
    dnnc_joint_predict,
    dnnc_predict,
    emb_knn_predict,
)
from .corpus import (
    OOS_LABEL,
    Dataset,
    FewShotSet,
    Utterance,
    domain_filter,
    load_dataset,
    sample_k_shot,
)
from .evaluation import (
    CalibrationResult,
    Metrics,
    ScoredInstance,
    calibrate_threshold,
    compute_metrics,
    export_report,
)
from .pairs import PairSet, generate_pairs
from .scorers import BuiltinScorer, RemoteScorer, hash_embed, lexical_score, open_scorer

__version__ = "0.1.0"

__all__ = [
    "Method",
    "Prediction",
    "centroid_classifier_predict",
    "dnnc_joint_predict",
    "dnnc_predict",
    "emb_knn_predict",
    "OOS_LABEL",
    "Dataset",
    "FewShotSet",
    "Utterance",
    "domain_filter",
    "load_dataset",
    "sample_k_shot",
    "CalibrationResult",
    "Metrics",
    "ScoredInstance",
    "calibrate_threshold",
    "compute_metrics",
    "export_report",
    "PairSet",
    "generate_pairs",
    "BuiltinScorer",
    "RemoteScorer",
    "hash_embed",
    "lexical_score",
    "open_scorer",
    "__version__",
]

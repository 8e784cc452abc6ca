from .observe import ObservationLog, classify, collect
from .candidates import (
    FEATURES, MAX_CANDIDATES, CandidateSet, TrainingSet, alt_heuristic, build_training_set,
    consecutive_id_seed, efficiency_score, rank_candidates, shuffle_control,
)
from .mlp import DegenerateDataError, MappingModel, ModelConfig, gradient_check, train
from .pipeline import (
    InferenceRun, countermeasure_eval, default_network_config, generate_traces, mapping_accuracy,
    predict_all, result_mapping, run_default, run_pipeline,
)

__all__ = [
    "ObservationLog", "classify", "collect",
    "FEATURES", "MAX_CANDIDATES", "CandidateSet", "TrainingSet", "alt_heuristic", "build_training_set",
    "consecutive_id_seed", "efficiency_score", "rank_candidates", "shuffle_control",
    "DegenerateDataError", "MappingModel", "ModelConfig", "gradient_check", "train",
    "InferenceRun", "countermeasure_eval", "default_network_config", "generate_traces", "mapping_accuracy",
    "predict_all", "result_mapping", "run_default", "run_pipeline",
]

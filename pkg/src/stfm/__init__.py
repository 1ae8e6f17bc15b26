"""Prompt-guided spatial-temporal filtering of video tokens, in numpy."""
from .config import ExperimentConfig
from .errors import (
    CheckpointError,
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    ShapeError,
    TrainingDivergedError,
)
from .estimator import STFMRegressor
from .hstf import hstf_sam, hstf_sam_ratio, stfm_forward
from .model import ModelConfig, init_params
from .params import ParamSet
from .pbtf import pbtf_queries
from .similarity import similarity_matrix
from .temporal import VpeConfig, vpe_encode
from .training import Report, attention_mass, run_ablation_grid, token_budget_sweep, train

__all__ = [
    "CheckpointError", "CheckpointFormatError", "CheckpointShapeError", "CheckpointTruncatedError",
    "CheckpointVersionError", "ConfigError", "ExperimentConfig", "ModelConfig", "ParamSet", "Report",
    "STFMRegressor", "ShapeError", "TrainingDivergedError", "VpeConfig", "attention_mass",
    "hstf_sam", "hstf_sam_ratio", "init_params", "pbtf_queries", "run_ablation_grid",
    "similarity_matrix", "stfm_forward", "token_budget_sweep", "train", "vpe_encode",
]

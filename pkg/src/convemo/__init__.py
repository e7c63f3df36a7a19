"""Multimodal conversation emotion modeling on a from-scratch autodiff core.

The pieces compose bottom-up: a reverse-mode tape over float64 numpy
arrays, masked multi-head transformer encoders, a two-level hierarchy
(utterance branch + conversation backbone) with per-modality context
policies, gated pairwise fusion, categorical/continuous heads, metrics,
and a CLI harness for synthetic-rule datasets, training, and ablations.
"""

from .autodiff import InvalidMaskError, NumericError, Tape, Tensor, gradient_check
from .conversation import (
    Conversation,
    Expression,
    conversational_context,
    individual_context,
    load_jsonl,
    save_jsonl,
)
from .hierarchical import DEPENDENT, FREE, MaskPolicy
from .metrics import EvalReport, MetricError, pearson_r, weighted_scores
from .model import ConversationEmotionModel, ModelConfig
from .synthetic import SyntheticRule, generate_conversations, make_rule, write_dataset
from .training import TrainConfig, evaluate_model, load_model, save_model, train_model

__version__ = "0.1.0"

__all__ = [
    "Conversation",
    "ConversationEmotionModel",
    "DEPENDENT",
    "EvalReport",
    "Expression",
    "FREE",
    "InvalidMaskError",
    "MaskPolicy",
    "MetricError",
    "ModelConfig",
    "NumericError",
    "SyntheticRule",
    "Tape",
    "Tensor",
    "TrainConfig",
    "conversational_context",
    "evaluate_model",
    "generate_conversations",
    "gradient_check",
    "individual_context",
    "load_jsonl",
    "load_model",
    "make_rule",
    "pearson_r",
    "save_jsonl",
    "save_model",
    "train_model",
    "weighted_scores",
    "write_dataset",
]

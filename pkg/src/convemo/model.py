"""Full conversation emotion model wiring encoders, hierarchy, fusion, head.

Per conversation, every utterance is branch-encoded once per modality with
its same-speaker context, the backbone re-encodes each target over the
window of preceding branch features, the modality representations are
fused, and the head scores each utterance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import parse_bool
from .conversation import Conversation, conversational_context, individual_context
from .encoders import ModalProjector, TextEncoder
from .fusion import make_fusion
from .heads import CATEGORICAL, ConfigError, Discriminator, Prediction
from .hierarchical import BackboneEncoder, BranchEncoder, MaskPolicy
from .params import ParameterBag, load_checkpoint

MODALITIES = ("t", "v", "a")
_MODALITY_NAMES = {"t": "text", "v": "visual", "a": "acoustic"}


@dataclass
class ModelConfig:
    """Desk-scale hyperparameters; every key is exposed in config files."""

    vocab_size: int = 32
    d_model: int = 64
    d_visual: int = 32
    d_acoustic: int = 16
    max_seq_len: int = 48
    context_window: int = 8
    n_branch: int = 2
    n_backbone: int = 2
    heads: int = 4
    ffn_mult: int = 4
    fusion_n_layers: int = 2
    fusion_heads: int = 4
    fusion_d_h: int = 64
    fusion_mode: str = "gate+trm"
    modalities: tuple[str, ...] = MODALITIES
    share_modal_params: bool = True
    policy: MaskPolicy = field(default_factory=MaskPolicy)
    head_kind: str = CATEGORICAL
    num_classes: int = 6

    def __post_init__(self):
        if isinstance(self.modalities, str):
            self.modalities = tuple(m.strip() for m in self.modalities.split(",") if m.strip())
        self.modalities = tuple(self.modalities)
        unknown = [m for m in self.modalities if m not in MODALITIES]
        if unknown:
            raise ConfigError(f"unknown modalities {unknown}; valid ids are {MODALITIES}")
        if len(self.modalities) < 2 and self.fusion_mode != "text-only":
            raise ConfigError("need at least two modalities unless fusion is text-only")
        if self.max_seq_len < 2:
            raise ConfigError("max_seq_len must leave room for the special rows")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ModelConfig":
        cfg = cls()
        ints = {
            "vocab_size", "d_model", "d_visual", "d_acoustic", "max_seq_len",
            "context_window", "n_branch", "n_backbone", "heads", "ffn_mult",
            "num_classes",
        }
        policy = dict(cfg.policy.as_dict())
        for key, value in mapping.items():
            if key in ints:
                setattr(cfg, key, int(value))
            elif key == "K":
                cfg.context_window = int(value)
            elif key == "fusion.n_layers":
                cfg.fusion_n_layers = int(value)
            elif key == "fusion.heads":
                cfg.fusion_heads = int(value)
            elif key == "fusion.d_h":
                cfg.fusion_d_h = int(value)
            elif key == "fusion.mode":
                cfg.fusion_mode = value
            elif key == "modalities":
                cfg.modalities = tuple(m.strip() for m in value.split(",") if m.strip())
            elif key == "share_modal_params":
                cfg.share_modal_params = parse_bool(value)
            elif key.startswith("policy."):
                policy[key.split(".", 1)[1]] = value
            elif key == "head.kind":
                cfg.head_kind = value
            elif key == "head.num_classes":
                cfg.num_classes = int(value)
            elif key in ("lr", "warmup_steps", "weight_decay", "beta1", "beta2",
                         "betas", "adam_eps", "epochs", "batch_size", "seed",
                         "max_steps", "runs"):
                continue  # training keys share the same file
            else:
                raise ConfigError(f"unknown model config key {key!r}")
        cfg.policy = MaskPolicy(**policy)
        cfg.__post_init__()
        return cfg

    def to_mapping(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "d_visual": self.d_visual,
            "d_acoustic": self.d_acoustic,
            "max_seq_len": self.max_seq_len,
            "context_window": self.context_window,
            "n_branch": self.n_branch,
            "n_backbone": self.n_backbone,
            "heads": self.heads,
            "ffn_mult": self.ffn_mult,
            "fusion.n_layers": self.fusion_n_layers,
            "fusion.heads": self.fusion_heads,
            "fusion.d_h": self.fusion_d_h,
            "fusion.mode": self.fusion_mode,
            "modalities": ",".join(self.modalities),
            "share_modal_params": self.share_modal_params,
            "policy.text": self.policy.text,
            "policy.visual": self.policy.visual,
            "policy.acoustic": self.policy.acoustic,
            "head.kind": self.head_kind,
            "head.num_classes": self.num_classes,
        }

    def with_policy(self, **settings) -> "ModelConfig":
        return replace(self, policy=MaskPolicy(**{**self.policy.as_dict(), **settings}))


class ConversationEmotionModel:
    """Hierarchy over one conversation followed by fusion and the head."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self.bag = ParameterBag()
        rng = np.random.default_rng(seed)
        d = cfg.d_model

        self.text_encoder = TextEncoder(self.bag, "text", cfg.vocab_size, d, cfg.max_seq_len, rng)
        self.projectors = {}
        if "v" in cfg.modalities:
            self.projectors["v"] = ModalProjector(self.bag, "visual", cfg.d_visual, d, rng)
        if "a" in cfg.modalities:
            self.projectors["a"] = ModalProjector(self.bag, "acoustic", cfg.d_acoustic, d, rng)

        def build_branch(prefix):
            return BranchEncoder(self.bag, prefix, d, cfg.n_branch, cfg.heads,
                                 cfg.max_seq_len, rng, cfg.ffn_mult)

        def build_backbone(prefix):
            return BackboneEncoder(self.bag, prefix, d, cfg.n_backbone, cfg.heads,
                                   cfg.context_window, rng, cfg.ffn_mult)

        if cfg.share_modal_params:
            shared_branch = build_branch("branch")
            shared_backbone = build_backbone("backbone")
            self.branches = {m: shared_branch for m in cfg.modalities}
            self.backbones = {m: shared_backbone for m in cfg.modalities}
        else:
            self.branches = {m: build_branch(f"branch_{m}") for m in cfg.modalities}
            self.backbones = {m: build_backbone(f"backbone_{m}") for m in cfg.modalities}

        self.fusion = make_fusion(
            cfg.fusion_mode, self.bag, "fusion", d, cfg.fusion_d_h,
            cfg.fusion_n_layers, cfg.fusion_heads, cfg.modalities, rng, cfg.ffn_mult,
        )
        self.head = Discriminator(self.bag, "head", cfg.fusion_d_h, cfg.head_kind,
                                  cfg.num_classes, rng)

    @property
    def parameters(self) -> ParameterBag:
        return self.bag

    def load(self, path) -> None:
        load_checkpoint(path, self.bag)

    def encode_expression(self, expression, modality: str) -> Tensor:
        if modality == "t":
            return self.text_encoder.encode(expression.text)
        if modality == "v":
            return self.projectors["v"].encode(expression.visual)
        if modality == "a":
            return self.projectors["a"].encode(expression.acoustic)
        raise ConfigError(f"unknown modality {modality!r}")

    def branch_features(self, conv: Conversation, modality: str) -> list[Tensor]:
        """Branch feature of every utterance, packed with same-speaker context."""
        policy = self.cfg.policy.for_modality(modality)
        branch = self.branches[modality]
        k = self.cfg.context_window
        features = []
        for i in range(1, conv.length + 1):
            target_rows = self.encode_expression(conv.expression(i), modality)
            context_rows = [
                self.encode_expression(e, modality)
                for e in individual_context(conv, i, k)
            ]
            features.append(branch.encode_target(target_rows, context_rows, policy))
        return features

    def representations(self, conv: Conversation, modality: str) -> list[Tensor]:
        """Backbone representation of every utterance over its window."""
        policy = self.cfg.policy.for_modality(modality)
        backbone = self.backbones[modality]
        k = self.cfg.context_window
        features = self.branch_features(conv, modality)
        reps = []
        for i in range(1, conv.length + 1):
            lo = max(0, i - 1 - k)
            reps.append(backbone.encode(features[lo : i - 1] + [features[i - 1]], policy))
        return reps

    def fused_representations(self, conv: Conversation) -> list[Tensor]:
        per_modality = {m: self.representations(conv, m) for m in self.fusion.modalities}
        return [
            self.fusion.fuse({m: per_modality[m][i] for m in self.fusion.modalities})
            for i in range(conv.length)
        ]

    def predict_conversation(self, conv: Conversation) -> list[Prediction]:
        return [self.head.predict(u) for u in self.fused_representations(conv)]

    def conversation_loss(self, conv: Conversation) -> tuple[Tensor, list[Prediction]]:
        predictions = self.predict_conversation(conv)
        labels = [e.label for e in conv.expressions]
        return self.head.loss(predictions, labels), predictions

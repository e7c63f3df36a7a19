"""Two-level conversation encoding with context-preference attention masks.

The branch encoder packs a target utterance with its same-speaker context
into one classification-slot sequence; the backbone encoder runs over the
branch features of the surrounding conversation window and reads out the
target position. Each level takes a per-modality policy:

  dependent  all-ones mask, the stack behaves sequentially over context
  free       the target span attends only to itself, so the stack collapses
             to a feed-forward function of the target

Under the free policy the general masked path still executes; nothing is
special-cased, which makes the context-invariance a real property of the
masks rather than of shortcut code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .layers import TransformerEncoder
from .params import ParameterBag, uniform_init

DEPENDENT = "dependent"
FREE = "free"
_SETTINGS = (DEPENDENT, FREE)


@dataclass
class MaskPolicy:
    """Context-preference setting per modality."""

    text: str = DEPENDENT
    visual: str = FREE
    acoustic: str = FREE

    def __post_init__(self):
        for name in ("text", "visual", "acoustic"):
            value = getattr(self, name)
            if value not in _SETTINGS:
                raise ValueError(f"policy.{name} must be one of {_SETTINGS}, got {value!r}")

    def for_modality(self, modality: str) -> str:
        return {"t": self.text, "v": self.visual, "a": self.acoustic}[modality]

    def as_dict(self) -> dict[str, str]:
        return {"text": self.text, "visual": self.visual, "acoustic": self.acoustic}


@dataclass
class BranchInput:
    """Packed sequence [CLS] + target + [SEP] + context with mask and segments."""

    rows: Tensor
    segment_ids: list[int]
    attn_mask: np.ndarray
    cls_index: int = 0
    target_slice: tuple[int, int] = field(default=(1, 1))


def branch_mask(segment_ids: list[int], policy: str) -> np.ndarray:
    """Mask for the packed branch sequence.

    dependent: all ones. free: segment-0 queries (classification slot,
    target, separator) attend to segment 0 only; context queries attend to
    themselves so every row keeps at least one 1. Only the classification
    slot is read out, so the context rows' self-loops are unobservable.
    """
    seg = np.asarray(segment_ids)
    n = seg.size
    if policy == DEPENDENT:
        return np.ones((n, n))
    is_target = seg == 0
    mask = np.zeros((n, n))
    mask[np.ix_(is_target, is_target)] = 1.0
    ctx = np.flatnonzero(~is_target)
    mask[ctx, ctx] = 1.0
    return mask


def backbone_mask(n: int, policy: str) -> np.ndarray:
    """All ones when dependent; identity (every slot self-only) when free."""
    if policy == DEPENDENT:
        return np.ones((n, n))
    return np.eye(n)


class BranchEncoder:
    """Packs and encodes a target with its same-speaker context rows."""

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_model: int,
        n_layers: int,
        heads: int,
        max_seq_len: int,
        rng: np.random.Generator,
        ffn_mult: int = 4,
    ):
        self.d_model = d_model
        self.max_seq_len = max_seq_len
        self.cls = bag.add(f"{prefix}.cls", uniform_init(rng, (d_model,), d_model))
        self.sep = bag.add(f"{prefix}.sep", uniform_init(rng, (d_model,), d_model))
        self.segment_emb = bag.add(f"{prefix}.segment_emb", uniform_init(rng, (2, d_model), d_model))
        self.encoder = TransformerEncoder(bag, f"{prefix}.enc", n_layers, d_model, heads, rng, ffn_mult)

    def build_input(
        self,
        target_rows: Tensor,
        context_rows: list[Tensor],
        policy: str,
    ) -> BranchInput:
        """Assemble [CLS] + target + [SEP] + context (oldest first) with
        segment ids 0 for the target span and 1 for context.

        If the packed length would exceed max_seq_len, whole context items
        are dropped oldest-first, then the target is trimmed from the left.
        """
        if policy not in _SETTINGS:
            raise ValueError(f"unknown policy {policy!r}")
        target = target_rows
        n_target = target.data.shape[0]
        budget = self.max_seq_len
        if n_target + 2 > budget:
            n_target = budget - 2
            target = ad.slice_rows(target, target.data.shape[0] - n_target, target.data.shape[0])
            context_rows = []
        else:
            kept: list[Tensor] = []
            remaining = budget - (n_target + 2)
            for item in reversed(context_rows):
                size = item.data.shape[0]
                if size <= remaining:
                    kept.append(item)
                    remaining -= size
                else:
                    break
            context_rows = list(reversed(kept))

        cls_row = ad.stack_rows([self.cls])
        sep_row = ad.stack_rows([self.sep])
        pieces = [cls_row, target, sep_row] if n_target else [cls_row, sep_row]
        pieces += context_rows
        rows = ad.concat([p for p in pieces if p.data.shape[0] > 0], axis=0)
        n_context = sum(item.data.shape[0] for item in context_rows)
        segment_ids = [0] * (n_target + 2) + [1] * n_context
        return BranchInput(
            rows=rows,
            segment_ids=segment_ids,
            attn_mask=branch_mask(segment_ids, policy),
            cls_index=0,
            target_slice=(1, 1 + n_target),
        )

    def encode(self, packed: BranchInput) -> Tensor:
        """Run the encoder over the packed sequence; return the row at the
        classification slot of the last layer."""
        if len(packed.segment_ids) != packed.rows.data.shape[0]:
            raise DimensionError("segment ids do not cover the packed rows")
        rows = ad.add(packed.rows, ad.embedding(self.segment_emb, packed.segment_ids))
        encoded = self.encoder(rows, packed.attn_mask)
        return ad.take_row(encoded, packed.cls_index)

    def encode_target(self, target_rows: Tensor, context_rows: list[Tensor], policy: str) -> Tensor:
        return self.encode(self.build_input(target_rows, context_rows, policy))


class BackboneEncoder:
    """Encodes the window of branch features ending at the target.

    Positions are learned over the window_size + 1 slots and right-aligned:
    the target always occupies the last slot, so a feature's position
    encodes its distance from the target and the free policy reduces
    exactly to encoding the target alone.
    """

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_model: int,
        n_layers: int,
        heads: int,
        window_size: int,
        rng: np.random.Generator,
        ffn_mult: int = 4,
    ):
        self.window_size = window_size
        self.pos_emb = bag.add(
            f"{prefix}.pos_emb", uniform_init(rng, (window_size + 1, d_model), d_model)
        )
        self.encoder = TransformerEncoder(bag, f"{prefix}.enc", n_layers, d_model, heads, rng, ffn_mult)

    def encode(self, features: list[Tensor], policy: str) -> Tensor:
        """features = context features in turn order plus the target last."""
        if not features:
            raise IndexError("backbone needs at least the target feature")
        if len(features) > self.window_size + 1:
            raise DimensionError(
                f"{len(features)} features exceed window {self.window_size} + target"
            )
        if policy not in _SETTINGS:
            raise ValueError(f"unknown policy {policy!r}")
        n = len(features)
        slots = range(self.window_size + 1 - n, self.window_size + 1)
        rows = ad.add(ad.stack_rows(features), ad.embedding(self.pos_emb, slots))
        encoded = self.encoder(rows, backbone_mask(n, policy))
        return ad.take_row(encoded, n - 1)

"""Multi-grained fusion of per-modality target representations.

The pairwise gate projects both operands through tanh, computes a sigmoid
gate from the pair and their Hadamard interaction, and mixes the two
projections convexly per coordinate. A small transformer with a learned
classification slot then weighs the gated vectors against each other.
Ablation variants swap either stage for concatenation or drop the gates.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .heads import ConfigError
from .layers import TransformerEncoder
from .params import ParameterBag, uniform_init


class ModalityError(ValueError):
    """A required modality representation is missing."""


# Canonical pair order; the fused sequence order is fixed.
PAIR_ORDER = (("t", "v"), ("t", "a"), ("a", "v"))
# Slot 0 is the classification slot; pairs keep their canonical slot even
# when a modality is absent, so positions stay comparable across configs.
PAIR_SLOT = {("t", "v"): 1, ("t", "a"): 2, ("a", "v"): 3}
MODALITY_SLOT = {"t": 1, "v": 2, "a": 3}


class PairGate:
    """Neuron-grained gate over one ordered pair of representations."""

    def __init__(self, bag: ParameterBag, prefix: str, d_r: int, d_h: int, rng: np.random.Generator):
        self.d_r = d_r
        self.w_a = bag.add(f"{prefix}.w_a", uniform_init(rng, (d_h, d_r), d_r))
        self.w_b = bag.add(f"{prefix}.w_b", uniform_init(rng, (d_h, d_r), d_r))
        self.w_z = bag.add(f"{prefix}.w_z", uniform_init(rng, (d_h, 3 * d_r), 3 * d_r))

    def __call__(self, r_a: Tensor, r_b: Tensor) -> Tensor:
        if r_a.data.shape != (self.d_r,) or r_b.data.shape != (self.d_r,):
            raise DimensionError(
                f"gate operands must be ({self.d_r},), got {r_a.data.shape} and {r_b.data.shape}"
            )
        h_a = ad.tanh(ad.matmul(self.w_a, r_a))
        h_b = ad.tanh(ad.matmul(self.w_b, r_b))
        interact = ad.concat([r_a, r_b, ad.mul(r_a, r_b)], axis=0)
        z = ad.sigmoid(ad.matmul(self.w_z, interact))
        one_minus_z = ad.add(ad.mul(z, -1.0), 1.0)
        return ad.add(ad.mul(z, h_a), ad.mul(one_minus_z, h_b))


def _present_pairs(modalities: tuple[str, ...]) -> list[tuple[str, str]]:
    return [pair for pair in PAIR_ORDER if pair[0] in modalities and pair[1] in modalities]


def _check_reps(reps: dict[str, Tensor], modalities: tuple[str, ...]) -> None:
    missing = [m for m in modalities if m not in reps]
    if missing:
        raise ModalityError(f"missing modality representations: {missing}")


class GatedTransformerFusion:
    """Pairwise gates followed by attention over the gated vectors."""

    name = "gate+trm"

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_r: int,
        d_h: int,
        n_layers: int,
        heads: int,
        modalities: tuple[str, ...],
        rng: np.random.Generator,
        ffn_mult: int = 4,
    ):
        self.modalities = modalities
        self.pairs = _present_pairs(modalities)
        if not self.pairs:
            raise ConfigError(f"no fusable pair among modalities {modalities}")
        self.gates = {
            pair: PairGate(bag, f"{prefix}.gate_{pair[0]}{pair[1]}", d_r, d_h, rng)
            for pair in self.pairs
        }
        self.cls = bag.add(f"{prefix}.cls", uniform_init(rng, (d_h,), d_h))
        self.pos_emb = bag.add(f"{prefix}.pos_emb", uniform_init(rng, (4, d_h), d_h))
        self.encoder = TransformerEncoder(bag, f"{prefix}.enc", n_layers, d_h, heads, rng, ffn_mult)

    def gated_pairs(self, reps: dict[str, Tensor]) -> dict[tuple[str, str], Tensor]:
        _check_reps(reps, self.modalities)
        return {pair: self.gates[pair](reps[pair[0]], reps[pair[1]]) for pair in self.pairs}

    def fuse(self, reps: dict[str, Tensor]) -> Tensor:
        gated = self.gated_pairs(reps)
        vectors = [self.cls] + [gated[pair] for pair in self.pairs]
        slots = [0] + [PAIR_SLOT[pair] for pair in self.pairs]
        rows = ad.add(ad.stack_rows(vectors), ad.embedding(self.pos_emb, slots))
        n = len(vectors)
        encoded = self.encoder(rows, np.ones((n, n)))
        return ad.take_row(encoded, 0)


class GatedConcatFusion:
    """Pairwise gates whose outputs are concatenated and mapped linearly."""

    name = "gate+concat"

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_r: int,
        d_h: int,
        modalities: tuple[str, ...],
        rng: np.random.Generator,
    ):
        self.modalities = modalities
        self.pairs = _present_pairs(modalities)
        if not self.pairs:
            raise ConfigError(f"no fusable pair among modalities {modalities}")
        self.gates = {
            pair: PairGate(bag, f"{prefix}.gate_{pair[0]}{pair[1]}", d_r, d_h, rng)
            for pair in self.pairs
        }
        width = len(self.pairs) * d_h
        self.w_out = bag.add(f"{prefix}.w_out", uniform_init(rng, (d_h, width), width))

    def fuse(self, reps: dict[str, Tensor]) -> Tensor:
        _check_reps(reps, self.modalities)
        gated = [self.gates[pair](reps[pair[0]], reps[pair[1]]) for pair in self.pairs]
        return ad.matmul(self.w_out, ad.concat(gated, axis=0))


class TransformerOnlyFusion:
    """Attention over the raw modality representations, no gates."""

    name = "trm-only"

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_r: int,
        d_h: int,
        n_layers: int,
        heads: int,
        modalities: tuple[str, ...],
        rng: np.random.Generator,
        ffn_mult: int = 4,
    ):
        if d_r != d_h:
            raise ConfigError("trm-only fusion needs fusion width equal to the model width")
        self.modalities = modalities
        self.cls = bag.add(f"{prefix}.cls", uniform_init(rng, (d_h,), d_h))
        self.pos_emb = bag.add(f"{prefix}.pos_emb", uniform_init(rng, (4, d_h), d_h))
        self.encoder = TransformerEncoder(bag, f"{prefix}.enc", n_layers, d_h, heads, rng, ffn_mult)

    def fuse(self, reps: dict[str, Tensor]) -> Tensor:
        _check_reps(reps, self.modalities)
        vectors = [self.cls] + [reps[m] for m in self.modalities]
        slots = [0] + [MODALITY_SLOT[m] for m in self.modalities]
        rows = ad.add(ad.stack_rows(vectors), ad.embedding(self.pos_emb, slots))
        n = len(vectors)
        encoded = self.encoder(rows, np.ones((n, n)))
        return ad.take_row(encoded, 0)


class ConcatFusion:
    """Plain concatenation of the modality representations plus a linear map."""

    name = "concat-only"

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_r: int,
        d_h: int,
        modalities: tuple[str, ...],
        rng: np.random.Generator,
    ):
        self.modalities = modalities
        width = len(modalities) * d_r
        self.w_out = bag.add(f"{prefix}.w_out", uniform_init(rng, (d_h, width), width))

    def fuse(self, reps: dict[str, Tensor]) -> Tensor:
        _check_reps(reps, self.modalities)
        return ad.matmul(self.w_out, ad.concat([reps[m] for m in self.modalities], axis=0))


class TextOnlyFusion:
    """Passes the textual representation straight to the head."""

    name = "text-only"

    def __init__(self, d_r: int, d_h: int, modalities: tuple[str, ...]):
        if "t" not in modalities:
            raise ConfigError("text-only needs the textual modality")
        if d_r != d_h:
            raise ConfigError("text-only needs fusion width equal to the model width")
        self.modalities = ("t",)

    def fuse(self, reps: dict[str, Tensor]) -> Tensor:
        _check_reps(reps, self.modalities)
        return reps["t"]


FUSION_MODES = ("gate+trm", "gate+concat", "trm-only", "concat-only", "text-only")


def make_fusion(
    mode: str,
    bag: ParameterBag,
    prefix: str,
    d_r: int,
    d_h: int,
    n_layers: int,
    heads: int,
    modalities: tuple[str, ...],
    rng: np.random.Generator,
    ffn_mult: int = 4,
):
    if mode == "gate+trm":
        return GatedTransformerFusion(bag, prefix, d_r, d_h, n_layers, heads, modalities, rng, ffn_mult)
    if mode == "gate+concat":
        return GatedConcatFusion(bag, prefix, d_r, d_h, modalities, rng)
    if mode == "trm-only":
        return TransformerOnlyFusion(bag, prefix, d_r, d_h, n_layers, heads, modalities, rng, ffn_mult)
    if mode == "concat-only":
        return ConcatFusion(bag, prefix, d_r, d_h, modalities, rng)
    if mode == "text-only":
        return TextOnlyFusion(d_r, d_h, modalities)
    raise ConfigError(f"unknown fusion mode {mode!r}; pick one of {FUSION_MODES}")

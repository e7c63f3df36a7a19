"""Token and modality-vector encoders projecting into the model width.

The text encoder is a small trainable embedding table with learned absolute
positions; visual and acoustic vectors pass through bias-free linear
projections so the projection stays exactly linear in its input.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .params import ParameterBag, uniform_init


class VocabError(ValueError):
    """A token id falls outside the vocabulary."""


class TextEncoder:
    """Embedding-table encoder: row i is token_emb[tokens[i]] + pos_emb[i]."""

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        vocab_size: int,
        d_model: int,
        max_seq_len: int,
        rng: np.random.Generator,
    ):
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.max_seq_len = max_seq_len
        self.token_emb = bag.add(f"{prefix}.token_emb", uniform_init(rng, (vocab_size, d_model), d_model))
        self.pos_emb = bag.add(f"{prefix}.pos_emb", uniform_init(rng, (max_seq_len, d_model), d_model))

    def encode(self, tokens: list[int], budget: int | None = None) -> Tensor:
        """Encode token ids to a (len, d_model) tensor.

        Overlength input keeps the trailing `budget` tokens (most recent
        first to go is the oldest); an empty list yields a (0, d_model)
        tensor accepted by downstream packing.
        """
        for t in tokens:
            if not 0 <= int(t) < self.vocab_size:
                raise VocabError(f"token id {t} outside vocabulary of size {self.vocab_size}")
        limit = self.max_seq_len if budget is None else min(budget, self.max_seq_len)
        kept = list(tokens)[-limit:] if limit >= 0 else []
        if not kept:
            return Tensor(np.zeros((0, self.d_model)))
        rows = ad.embedding(self.token_emb, kept)
        positions = ad.embedding(self.pos_emb, range(len(kept)))
        return ad.add(rows, positions)


class ModalProjector:
    """Bias-free linear map from a fixed-length modal vector to one model row."""

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d_in: int,
        d_model: int,
        rng: np.random.Generator,
    ):
        self.d_in = d_in
        self.weight = bag.add(f"{prefix}.proj", uniform_init(rng, (d_in, d_model), d_in))

    def encode(self, vector: np.ndarray) -> Tensor:
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.d_in,):
            raise DimensionError(f"modal vector shape {v.shape}, expected ({self.d_in},)")
        return ad.matmul(Tensor(v.reshape(1, -1)), self.weight)


def load_vocab(path: str | Path) -> list[str]:
    """One token per line; the line number is the id."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def write_vocab(path: str | Path, tokens: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in tokens:
            fh.write(token + "\n")

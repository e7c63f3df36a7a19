"""Masked multi-head attention and transformer encoder stacks."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .params import ParameterBag, uniform_init


def masked_multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: np.ndarray,
    heads: int,
    proj: "AttentionParams",
    weights_out: list[np.ndarray] | None = None,
) -> Tensor:
    """Scaled dot-product attention over (L, d) inputs with a {0,1} mask.

    mask[i][j] = 1 lets query i attend to position j; masked slots get an
    additive -1e9 penalty before the softmax and end up with zero weight.
    When weights_out is a list, the post-softmax (L, L) weight matrix of
    each head is appended to it.
    """
    if q.data.ndim != 2 or k.data.shape != q.data.shape or v.data.shape != q.data.shape:
        raise DimensionError(
            f"attention needs matching (L, d) inputs, got {q.data.shape}, {k.data.shape}, {v.data.shape}"
        )
    d = q.data.shape[1]
    if d % heads != 0:
        raise DimensionError(f"width {d} not divisible by {heads} heads")
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)

    qp = ad.add(ad.matmul(q, proj.wq), proj.bq)
    kp = ad.add(ad.matmul(k, proj.wk), proj.bk)
    vp = ad.add(ad.matmul(v, proj.wv), proj.bv)

    head_outs = []
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        qh = ad.slice_cols(qp, lo, hi)
        kh = ad.slice_cols(kp, lo, hi)
        vh = ad.slice_cols(vp, lo, hi)
        scores = ad.mul(ad.matmul(qh, ad.transpose(kh)), scale)
        weights = ad.softmax_rows(scores, mask)
        if weights_out is not None:
            weights_out.append(weights.data.copy())
        head_outs.append(ad.matmul(weights, vh))
    merged = ad.concat(head_outs, axis=1) if heads > 1 else head_outs[0]
    return ad.add(ad.matmul(merged, proj.wo), proj.bo)


class AttentionParams:
    """Query/key/value/output projections for one attention block."""

    def __init__(self, bag: ParameterBag, prefix: str, d: int, rng: np.random.Generator):
        self.wq = bag.add(f"{prefix}.wq", uniform_init(rng, (d, d), d))
        self.wk = bag.add(f"{prefix}.wk", uniform_init(rng, (d, d), d))
        self.wv = bag.add(f"{prefix}.wv", uniform_init(rng, (d, d), d))
        self.wo = bag.add(f"{prefix}.wo", uniform_init(rng, (d, d), d))
        self.bq = bag.add(f"{prefix}.bq", np.zeros(d))
        self.bk = bag.add(f"{prefix}.bk", np.zeros(d))
        self.bv = bag.add(f"{prefix}.bv", np.zeros(d))
        self.bo = bag.add(f"{prefix}.bo", np.zeros(d))


class TransformerEncoderLayer:
    """Self-attention plus position-wise feed-forward, post-norm residuals.

    The feed-forward hidden width is ffn_mult * d and uses tanh, the only
    saturating nonlinearity in the op set.
    """

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        d: int,
        heads: int,
        rng: np.random.Generator,
        ffn_mult: int = 4,
    ):
        self.heads = heads
        self.attn = AttentionParams(bag, f"{prefix}.attn", d, rng)
        hidden = ffn_mult * d
        self.w1 = bag.add(f"{prefix}.ffn.w1", uniform_init(rng, (d, hidden), d))
        self.b1 = bag.add(f"{prefix}.ffn.b1", np.zeros(hidden))
        self.w2 = bag.add(f"{prefix}.ffn.w2", uniform_init(rng, (hidden, d), hidden))
        self.b2 = bag.add(f"{prefix}.ffn.b2", np.zeros(d))
        self.ln1_gain = bag.add(f"{prefix}.ln1.gain", np.ones(d))
        self.ln1_bias = bag.add(f"{prefix}.ln1.bias", np.zeros(d))
        self.ln2_gain = bag.add(f"{prefix}.ln2.gain", np.ones(d))
        self.ln2_bias = bag.add(f"{prefix}.ln2.bias", np.zeros(d))

    def __call__(
        self,
        x: Tensor,
        mask: np.ndarray,
        weights_out: list[np.ndarray] | None = None,
    ) -> Tensor:
        attended = masked_multi_head_attention(x, x, x, mask, self.heads, self.attn, weights_out)
        x = ad.layer_norm_rows(ad.add(x, attended), self.ln1_gain, self.ln1_bias)
        hidden = ad.tanh(ad.add(ad.matmul(x, self.w1), self.b1))
        ff = ad.add(ad.matmul(hidden, self.w2), self.b2)
        return ad.layer_norm_rows(ad.add(x, ff), self.ln2_gain, self.ln2_bias)


class TransformerEncoder:
    """A stack of identical encoder layers sharing one mask."""

    def __init__(
        self,
        bag: ParameterBag,
        prefix: str,
        n_layers: int,
        d: int,
        heads: int,
        rng: np.random.Generator,
        ffn_mult: int = 4,
    ):
        self.layers = [
            TransformerEncoderLayer(bag, f"{prefix}.layer{i}", d, heads, rng, ffn_mult)
            for i in range(n_layers)
        ]

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        for layer in self.layers:
            x = layer(x, mask)
        return x

"""Shared fixtures and independent reference implementations.

The scalar_* helpers re-derive attention, layer norm, and the encoder
layer from their definitions with explicit loops so tests compare the
package against an implementation that shares no code with it.
"""

from __future__ import annotations

import numpy as np
import pytest

from convemo.conversation import Conversation, Expression


def random_conversation(rng, length, n_speakers, vocab_size=12, d_visual=4,
                        d_acoustic=4, num_classes=4, continuous=False,
                        conv_id="conv", max_text=4):
    """A valid conversation with every speaker appearing at least once."""
    speakers = list(rng.permutation(n_speakers) + 1)
    speakers += list(rng.integers(1, n_speakers + 1, size=length - n_speakers))
    expressions = []
    for turn in range(1, length + 1):
        n_tok = int(rng.integers(1, max_text + 1))
        if continuous:
            label = rng.normal(size=4)
        else:
            label = int(rng.integers(num_classes))
        expressions.append(
            Expression(
                turn=turn,
                speaker=speakers[turn - 1],
                text=list(rng.integers(0, vocab_size, size=n_tok)),
                visual=rng.normal(size=d_visual),
                acoustic=rng.normal(size=d_acoustic),
                label=label,
            )
        )
    return Conversation(conv_id, expressions, n_speakers=n_speakers)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# scalar reference implementations (no shared code with the package)
# ---------------------------------------------------------------------------


def scalar_softmax(row):
    shifted = [x - max(row) for x in row]
    exps = [np.exp(x) for x in shifted]
    total = sum(exps)
    return [e / total for e in exps]


def scalar_attention_weights(q, k, mask, heads):
    """Per-head softmax(q_h k_h^T / sqrt(d_head)) with -1e9 mask penalty."""
    L, d = q.shape
    d_head = d // heads
    weights = np.zeros((heads, L, L))
    for h in range(heads):
        qs = q[:, h * d_head : (h + 1) * d_head]
        ks = k[:, h * d_head : (h + 1) * d_head]
        for i in range(L):
            scores = []
            for j in range(L):
                s = float(np.dot(qs[i], ks[j])) / np.sqrt(d_head)
                if mask[i, j] == 0:
                    s = s - 1e9
                scores.append(s)
            weights[h, i] = scalar_softmax(scores)
    return weights


def scalar_mha(x, mask, heads, p):
    """Full multi-head attention from projection dict p (wq..wo, bq..bo)."""
    q = x @ p["wq"] + p["bq"]
    k = x @ p["wk"] + p["bk"]
    v = x @ p["wv"] + p["bv"]
    L, d = x.shape
    d_head = d // heads
    weights = scalar_attention_weights(q, k, mask, heads)
    mixed = np.zeros((L, d))
    for h in range(heads):
        vs = v[:, h * d_head : (h + 1) * d_head]
        for i in range(L):
            acc = np.zeros(d_head)
            for j in range(L):
                acc += weights[h, i, j] * vs[j]
            mixed[i, h * d_head : (h + 1) * d_head] = acc
    return mixed @ p["wo"] + p["bo"]


def scalar_layer_norm(x, gain, bias, eps=1e-12):
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        mu = x[i].mean()
        var = x[i].var()
        out[i] = gain * (x[i] - mu) / np.sqrt(var + eps) + bias
    return out


def scalar_encoder_layer(x, mask, heads, p):
    """Post-norm encoder layer: attn, residual+LN, tanh FFN, residual+LN."""
    attended = scalar_mha(x, mask, heads, p)
    h = scalar_layer_norm(x + attended, p["ln1_g"], p["ln1_b"])
    ffn = np.tanh(h @ p["ffn_w1"] + p["ffn_b1"]) @ p["ffn_w2"] + p["ffn_b2"]
    return scalar_layer_norm(h + ffn, p["ln2_g"], p["ln2_b"])


def layer_param_dict(bag, prefix):
    """Pull one encoder layer's parameters out of a bag as plain arrays."""
    return {
        "wq": bag[f"{prefix}.attn.wq"].data,
        "wk": bag[f"{prefix}.attn.wk"].data,
        "wv": bag[f"{prefix}.attn.wv"].data,
        "wo": bag[f"{prefix}.attn.wo"].data,
        "bq": bag[f"{prefix}.attn.bq"].data,
        "bk": bag[f"{prefix}.attn.bk"].data,
        "bv": bag[f"{prefix}.attn.bv"].data,
        "bo": bag[f"{prefix}.attn.bo"].data,
        "ln1_g": bag[f"{prefix}.ln1.gain"].data,
        "ln1_b": bag[f"{prefix}.ln1.bias"].data,
        "ffn_w1": bag[f"{prefix}.ffn.w1"].data,
        "ffn_b1": bag[f"{prefix}.ffn.b1"].data,
        "ffn_w2": bag[f"{prefix}.ffn.w2"].data,
        "ffn_b2": bag[f"{prefix}.ffn.b2"].data,
        "ln2_g": bag[f"{prefix}.ln2.gain"].data,
        "ln2_b": bag[f"{prefix}.ln2.bias"].data,
    }

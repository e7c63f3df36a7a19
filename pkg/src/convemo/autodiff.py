"""Reverse-mode automatic differentiation over dense float64 arrays.

Everything is eager: each op computes its numpy result immediately and,
when a Tape is active on the current thread, appends a backward closure
to it. Tape.backward replays the closures once, newest first, which is
a valid reverse topological order because ops were recorded in execution
order. Gradients accumulate additively on Tensor.grad.

Only the ops the model needs are provided; there is no broadcasting
beyond bias-style row adds and scalar constants.
"""

from __future__ import annotations

import logging
import math
import threading
from collections.abc import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Additive pre-softmax penalty used to realize {0,1} attention masks.
MASK_PENALTY = 1e9

# Mean negative log-likelihood is clamped here (corresponds to a true-class
# probability of 1e-300); hitting the clamp is flagged in the logs.
NLL_CLAMP = -math.log(1e-300)


class DimensionError(ValueError):
    """Operand shapes do not satisfy the op contract."""


class InvalidMaskError(ValueError):
    """Attention mask is not a {0,1} matrix with at least one 1 per row."""


class NumericError(ArithmeticError):
    """A non-finite or out-of-contract value appeared during computation."""


class Tensor:
    """Dense float64 array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


_TLS = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = _TLS.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of one forward pass, used once for backprop.

    Tapes are per-thread; independent model replicas may run on separate
    threads, each under its own tape.
    """

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[], None]]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tape_stack().pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted")

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, backward: Callable[[], None]) -> None:
        self._nodes.append((out, backward))

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and visit every node exactly once."""
        if loss.data.shape != ():
            raise DimensionError(
                f"backward expects a scalar loss, got shape {loss.data.shape}"
            )
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._nodes):
            if out.grad is not None:
                fn()


def _record(out: Tensor, backward: Callable[[], None]) -> None:
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, backward)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix or matrix-vector product; 1-D operands follow numpy semantics."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise DimensionError(f"matmul {ad.shape} @ {bd.shape}")
    elif ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise DimensionError(f"matmul {ad.shape} @ {bd.shape}")
    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise DimensionError(f"matmul {ad.shape} @ {bd.shape}")
    elif ad.ndim == 1 and bd.ndim == 1:
        if ad.shape[0] != bd.shape[0]:
            raise DimensionError(f"matmul {ad.shape} @ {bd.shape}")
    else:
        raise DimensionError(f"matmul needs 1-D or 2-D operands, got {ad.shape}, {bd.shape}")
    out = Tensor(ad @ bd, a.requires_grad or b.requires_grad)

    def backward() -> None:
        g = out.grad
        if ad.ndim == 2 and bd.ndim == 2:
            if a.requires_grad:
                _accumulate(a, g @ bd.T)
            if b.requires_grad:
                _accumulate(b, ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            if a.requires_grad:
                _accumulate(a, np.outer(g, bd))
            if b.requires_grad:
                _accumulate(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            if a.requires_grad:
                _accumulate(a, bd @ g)
            if b.requires_grad:
                _accumulate(b, np.outer(ad, g))
        else:
            if a.requires_grad:
                _accumulate(a, g * bd)
            if b.requires_grad:
                _accumulate(b, g * ad)

    _record(out, backward)
    return out


def add(a: Tensor, b: "Tensor | float") -> Tensor:
    """Elementwise add. Supports same-shape operands, a (d,) bias added to
    every row of an (L, d) operand, and scalar constants."""
    if not isinstance(b, Tensor):
        out = Tensor(a.data + float(b), a.requires_grad)

        def backward_const() -> None:
            if a.requires_grad:
                _accumulate(a, out.grad)

        _record(out, backward_const)
        return out

    ad, bd = a.data, b.data
    row_broadcast = ad.ndim == 2 and bd.ndim == 1 and ad.shape[1] == bd.shape[0]
    if not row_broadcast and ad.shape != bd.shape:
        raise DimensionError(f"add {ad.shape} + {bd.shape}")
    out = Tensor(ad + bd, a.requires_grad or b.requires_grad)

    def backward() -> None:
        g = out.grad
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0) if row_broadcast else g)

    _record(out, backward)
    return out


def mul(a: Tensor, b: "Tensor | float") -> Tensor:
    """Hadamard product of same-shape tensors, or scaling by a constant."""
    if not isinstance(b, Tensor):
        c = float(b)
        out = Tensor(a.data * c, a.requires_grad)

        def backward_const() -> None:
            if a.requires_grad:
                _accumulate(a, out.grad * c)

        _record(out, backward_const)
        return out

    if a.data.shape != b.data.shape:
        raise DimensionError(f"hadamard {a.data.shape} * {b.data.shape}")
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)

    def backward() -> None:
        g = out.grad
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    _record(out, backward)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {a.data.shape}")
    out = Tensor(a.data.T.copy(), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            _accumulate(a, out.grad.T)

    _record(out, backward)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of zero tensors")
    if axis not in (0, 1):
        raise DimensionError(f"concat axis must be 0 or 1, got {axis}")
    out = Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        any(t.requires_grad for t in tensors),
    )
    sizes = [t.data.shape[axis] for t in tensors]

    def backward() -> None:
        g = out.grad
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                if axis == 0:
                    _accumulate(t, g[offset : offset + size])
                else:
                    _accumulate(t, g[:, offset : offset + size])
            offset += size

    _record(out, backward)
    return out


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into an (n, d) matrix."""
    if not vectors:
        raise DimensionError("stack_rows of zero tensors")
    for v in vectors:
        if v.data.ndim != 1:
            raise DimensionError(f"stack_rows needs 1-D tensors, got {v.data.shape}")
    out = Tensor(np.stack([v.data for v in vectors]), any(v.requires_grad for v in vectors))

    def backward() -> None:
        g = out.grad
        for i, v in enumerate(vectors):
            if v.requires_grad:
                _accumulate(v, g[i])

    _record(out, backward)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"slice_rows needs a 2-D tensor, got {a.data.shape}")
    out = Tensor(a.data[start:stop].copy(), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[start:stop] = out.grad
            _accumulate(a, g)

    _record(out, backward)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"slice_cols needs a 2-D tensor, got {a.data.shape}")
    out = Tensor(a.data[:, start:stop].copy(), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[:, start:stop] = out.grad
            _accumulate(a, g)

    _record(out, backward)
    return out


def take_row(a: Tensor, index: int) -> Tensor:
    """Select row `index` of an (L, d) tensor as a (d,) vector."""
    if a.data.ndim != 2:
        raise DimensionError(f"take_row needs a 2-D tensor, got {a.data.shape}")
    if not 0 <= index < a.data.shape[0]:
        raise DimensionError(f"row {index} out of range for shape {a.data.shape}")
    out = Tensor(a.data[index].copy(), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[index] = out.grad
            _accumulate(a, g)

    _record(out, backward)
    return out


# Saturated tanh/sigmoid round to exactly +/-1 or 0/1 in float64; nudging
# by one ulp keeps the ranges genuinely open so downstream convexity
# arguments (gate weights strictly inside (0, 1)) hold without caveats.
_ONE_INSIDE = np.nextafter(1.0, 0.0)
_ZERO_INSIDE = np.nextafter(0.0, 1.0)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.clip(np.tanh(a.data), -_ONE_INSIDE, _ONE_INSIDE), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * (1.0 - out.data * out.data))

    _record(out, backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    pos = x >= 0
    s = np.empty_like(x)
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(np.clip(s, _ZERO_INSIDE, _ONE_INSIDE), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            _accumulate(a, out.grad * out.data * (1.0 - out.data))

    _record(out, backward)
    return out


def _validate_mask(mask: np.ndarray, shape: tuple[int, ...]) -> None:
    if mask.shape != shape:
        raise DimensionError(f"mask shape {mask.shape} does not match scores {shape}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise InvalidMaskError("mask entries must be 0 or 1")
    if np.any(mask.sum(axis=1) == 0):
        raise InvalidMaskError("every mask row needs at least one 1")


def softmax_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax of an (L, M) tensor.

    A {0,1} mask is applied as an additive -MASK_PENALTY shift before the
    softmax; the resulting weight at every masked slot is checked to be
    below 1e-12.
    """
    if a.data.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-D tensor, got {a.data.shape}")
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        _validate_mask(mask, x.shape)
        x = x + (mask - 1.0) * MASK_PENALTY
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    if mask is not None and np.any(s[mask == 0.0] >= 1e-12):
        raise NumericError("masked attention weight not suppressed below 1e-12")
    out = Tensor(s, a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            g = out.grad
            dot = (g * out.data).sum(axis=1, keepdims=True)
            _accumulate(a, out.data * (g - dot))

    _record(out, backward)
    return out


def layer_norm_rows(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Per-row layer normalization of an (L, d) tensor with learned gain/bias."""
    if a.data.ndim != 2:
        raise DimensionError(f"layer_norm_rows needs a 2-D tensor, got {a.data.shape}")
    d = a.data.shape[1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError("layer norm gain/bias must be (d,)")
    mu = a.data.mean(axis=1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data, a.requires_grad or gain.requires_grad or bias.requires_grad)

    def backward() -> None:
        g = out.grad
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=0))
        if a.requires_grad:
            gx = g * gain.data
            term = gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)
            _accumulate(a, inv * term)

    _record(out, backward)
    return out


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Look up rows of a (V, d) table; backward scatter-adds into the table."""
    if table.data.ndim != 2:
        raise DimensionError(f"embedding table must be 2-D, got {table.data.shape}")
    idx = np.asarray(list(ids), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise DimensionError(
            f"embedding id out of range [0, {table.data.shape[0]}): {idx.tolist()}"
        )
    out = Tensor(table.data[idx], table.requires_grad)

    def backward() -> None:
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, idx, out.grad)
            _accumulate(table, g)

    _record(out, backward)
    return out


def mean_all(a: Tensor) -> Tensor:
    """Mean over every element, producing a scalar."""
    n = a.data.size
    if n == 0:
        raise DimensionError("mean of an empty tensor")
    out = Tensor(a.data.mean(), a.requires_grad)

    def backward() -> None:
        if a.requires_grad:
            _accumulate(a, np.full_like(a.data, float(out.grad) / n))

    _record(out, backward)
    return out


def cross_entropy_logits(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of integer labels under row softmax.

    Rows whose true-class probability falls below 1e-300 take the clamped
    value NLL_CLAMP in the forward result and are flagged in the logs; the
    gradient keeps the unclamped softmax-minus-onehot form so training can
    still recover.
    """
    z = logits.data
    if z.ndim != 2:
        raise DimensionError(f"cross entropy expects (L, C) logits, got {z.shape}")
    y = np.asarray(list(labels), dtype=np.intp)
    n, c = z.shape
    if y.shape != (n,):
        raise DimensionError(f"{n} logit rows vs {y.shape} labels")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise DimensionError(f"label out of range [0, {c})")
    zmax = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    nll = lse - z[np.arange(n), y]
    clamped = nll > NLL_CLAMP
    if np.any(clamped):
        log.warning("cross entropy clamped %d rows with true-class prob < 1e-300", int(clamped.sum()))
        nll = np.where(clamped, NLL_CLAMP, nll)
    out = Tensor(nll.mean(), logits.requires_grad)

    def backward() -> None:
        if logits.requires_grad:
            p = np.exp(z - zmax)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(n), y] -= 1.0
            _accumulate(logits, p * (float(out.grad) / n))

    _record(out, backward)
    return out


def squared_error(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean over all elements of the squared difference to a constant target."""
    t = np.asarray(target, dtype=np.float64)
    if pred.data.shape != t.shape:
        raise DimensionError(f"squared error {pred.data.shape} vs {t.shape}")
    diff = pred.data - t
    out = Tensor((diff * diff).mean(), pred.requires_grad)

    def backward() -> None:
        if pred.requires_grad:
            _accumulate(pred, diff * (2.0 * float(out.grad) / diff.size))

    _record(out, backward)
    return out


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


def gradient_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
) -> float:
    """Compare tape gradients of the scalar f() against central differences.

    f must be a deterministic forward pass; it is re-run twice per parameter
    entry without a tape. Returns the max over all entries of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). The 1e-6 floor
    keeps near-zero entries out of the score: the central difference itself
    carries ~machine_eps·|f|/epsilon of rounding noise (~1e-11 for unit-scale
    losses at the default epsilon), so below the floor the ratio would
    measure that noise rather than the tape.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = f()
    if out.data.shape != ():
        raise DimensionError("gradient_check needs a scalar function")
    if not np.isfinite(out.data):
        raise NumericError("non-finite function value")
    tape.backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gf = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(f().data)
            flat[i] = orig - epsilon
            lo = float(f().data)
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericError("non-finite function value during finite differences")
            numeric = (hi - lo) / (2.0 * epsilon)
            rel = abs(gf[i] - numeric) / max(abs(gf[i]), abs(numeric), 1e-6)
            if rel > worst:
                worst = rel
    return worst

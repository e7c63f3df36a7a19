"""Training loop: AdamW with linear warmup/decay over conversation batches.

The optimizer and schedule are implemented directly on the parameter bag.
Updates are counted 1-based: the multiplier climbs linearly to 1.0 at
``warmup_steps`` and then decays linearly to 0 at the final step. Batch
loss is the mean over every utterance in the batch, assembled by scaling
each conversation's mean loss by its share of the batch's utterances.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tape
from .conversation import Conversation
from .heads import CATEGORICAL
from .metrics import EvalReport, pearson_by_dim, weighted_scores
from .model import ConversationEmotionModel, ModelConfig
from .params import save_checkpoint

VALIDATION_FRACTION = 0.2

_TRAIN_KEYS = {
    "lr": ("lr", float),
    "warmup_steps": ("warmup_steps", int),
    "weight_decay": ("weight_decay", float),
    "beta1": ("beta1", float),
    "beta2": ("beta2", float),
    "adam_eps": ("adam_eps", float),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "seed": ("seed", int),
    "max_steps": ("max_steps", int),
}


@dataclass
class TrainConfig:
    lr: float = 3e-4
    warmup_steps: int = 100
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 4
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @property
    def betas(self) -> tuple[float, float]:
        return (self.beta1, self.beta2)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        kwargs = {}
        for key, (attr, cast) in _TRAIN_KEYS.items():
            if key in mapping:
                kwargs[attr] = cast(mapping[key])
        if "betas" in mapping:
            first, second = str(mapping["betas"]).split(",")
            kwargs["beta1"], kwargs["beta2"] = float(first), float(second)
        return cls(**kwargs)


def lr_multiplier(step: int, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup then linear decay; ``step`` is the 1-based update index."""
    if step < 1:
        raise ValueError("step counts from 1")
    if warmup_steps > 0 and step <= warmup_steps:
        return step / warmup_steps
    if total_steps <= warmup_steps:
        return 1.0
    return max(0.0, (total_steps - step) / (total_steps - warmup_steps))


class AdamW:
    """Decoupled weight decay Adam over a list of (name, tensor) pairs."""

    def __init__(self, named_tensors, config: TrainConfig):
        self.named = list(named_tensors)
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(t.data) for _, t in self.named]
        self.v = [np.zeros_like(t.data) for _, t in self.named]

    def step(self, lr_now: float):
        cfg = self.config
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for i, (_, tensor) in enumerate(self.named):
            grad = tensor.grad
            if grad is None:
                grad = np.zeros_like(tensor.data)
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad * grad
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            update = m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            tensor.data -= lr_now * (update + cfg.weight_decay * tensor.data)


def split_validation(
    conversations: list[Conversation], seed: int, fraction: float = VALIDATION_FRACTION
) -> tuple[list[Conversation], list[Conversation]]:
    """Deterministic held-out split; at least one conversation stays in train."""
    if not conversations:
        raise ValueError("no conversations to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(conversations))
    n_val = int(round(fraction * len(conversations)))
    n_val = min(n_val, len(conversations) - 1)
    val_idx = set(order[:n_val].tolist())
    train = [c for i, c in enumerate(conversations) if i not in val_idx]
    val = [c for i, c in enumerate(conversations) if i in val_idx]
    return train, val


@dataclass
class TrainResult:
    model: ConversationEmotionModel
    log: list[tuple[int, float, float]] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_epoch: int = -1
    final_checkpoint: Path | None = None
    best_checkpoint: Path | None = None


def _batch_loss(model: ConversationEmotionModel, batch: list[Conversation], backward: bool):
    """Mean loss over all utterances in the batch; optionally accumulates grads."""
    total_utts = sum(len(c.expressions) for c in batch)
    total = 0.0
    for conv in batch:
        share = len(conv.expressions) / total_utts
        if backward:
            with Tape() as tape:
                loss, _ = model.conversation_loss(conv)
                scaled = ad.mul(loss, share)
            tape.backward(scaled)
            total += float(scaled.data)
        else:
            loss, _ = model.conversation_loss(conv)
            total += float(loss.data) * share
    return total


def _dump_divergence(out_dir: Path | None, step: int, batch, model) -> str:
    extremes = {}
    for name, tensor in model.parameters.items():
        peak = float(np.max(np.abs(tensor.data))) if tensor.data.size else 0.0
        grad_peak = (
            float(np.max(np.abs(tensor.grad))) if tensor.grad is not None else None
        )
        extremes[name] = {"max_abs_value": peak, "max_abs_grad": grad_peak}
    payload = {
        "step": step,
        "batch_conversations": [c.conv_id for c in batch],
        "parameter_extremes": extremes,
    }
    where = "training diverged (non-finite loss)"
    if out_dir is not None:
        path = Path(out_dir) / f"divergence_step{step}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        where += f"; diagnostics written to {path}"
    return where


def save_model(model: ConversationEmotionModel, path: str | Path):
    """Checkpoint weights plus a JSON sidecar with the architecture."""
    path = Path(path)
    save_checkpoint(path, model.parameters)
    sidecar = path.with_suffix(path.suffix + ".config.json")
    payload = {"model": model.cfg.to_mapping(), "seed": model.seed}
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ConversationEmotionModel:
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".config.json")
    payload = json.loads(sidecar.read_text(encoding="utf-8"))
    config = ModelConfig.from_mapping(payload["model"])
    model = ConversationEmotionModel(config, seed=int(payload.get("seed", 0)))
    model.load(path)
    return model


def train_model(
    model: ConversationEmotionModel,
    train_config: TrainConfig,
    conversations: list[Conversation],
    out_dir: str | Path | None = None,
    log_every: int = 1,
) -> TrainResult:
    """Run the full loop: split, batch, warmup/decay AdamW, checkpoints."""
    cfg = train_config
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    train_set, val_set = split_validation(conversations, cfg.seed)
    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    optimizer = AdamW(list(model.parameters.items()), cfg)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model=model)
    best_state = None
    step = 0

    log_file = None
    writer = None
    if out_path is not None:
        log_file = open(out_path / "training_log.csv", "w", newline="", encoding="utf-8")
        writer = csv.writer(log_file)
        writer.writerow(["step", "lr", "loss"])
    try:
        done = False
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_set))
            for start in range(0, len(train_set), cfg.batch_size):
                batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
                model.parameters.zero_grads()
                loss_value = _batch_loss(model, batch, backward=True)
                if not math.isfinite(loss_value):
                    detail = _dump_divergence(out_path, step + 1, batch, model)
                    raise NumericError(detail)
                step += 1
                lr_now = cfg.lr * lr_multiplier(step, cfg.warmup_steps, total_steps)
                optimizer.step(lr_now)
                if step % log_every == 0 or step == total_steps:
                    result.log.append((step, lr_now, loss_value))
                    if writer is not None:
                        writer.writerow([step, f"{lr_now:.10g}", f"{loss_value:.10g}"])
                if step >= total_steps:
                    done = True
                    break
            if val_set:
                val_loss = _batch_loss(model, val_set, backward=False)
            else:
                val_loss = _batch_loss(model, train_set, backward=False)
            result.val_losses.append(val_loss)
            if val_loss < result.best_val_loss:
                result.best_val_loss = val_loss
                result.best_epoch = epoch
                best_state = {
                    name: tensor.data.copy() for name, tensor in model.parameters.items()
                }
            if done:
                break
    finally:
        if log_file is not None:
            log_file.close()

    if out_path is not None:
        final = out_path / "model_final.ckpt"
        save_model(model, final)
        result.final_checkpoint = final
        if best_state is not None:
            saved = {name: t.data.copy() for name, t in model.parameters.items()}
            for name, tensor in model.parameters.items():
                tensor.data[...] = best_state[name]
            best = out_path / "model_best.ckpt"
            save_model(model, best)
            for name, tensor in model.parameters.items():
                tensor.data[...] = saved[name]
            result.best_checkpoint = best
    return result


def predictions_and_labels(model: ConversationEmotionModel, conversations):
    predictions, labels = [], []
    for conv in conversations:
        predictions.extend(model.predict_conversation(conv))
        labels.extend(expr.label for expr in conv.expressions)
    return predictions, labels


def evaluate_model(model: ConversationEmotionModel, conversations) -> EvalReport:
    """Score the model on a conversation list with the matching metric set."""
    predictions, labels = predictions_and_labels(model, conversations)
    if model.cfg.head_kind == CATEGORICAL:
        predicted = [p.predicted_class for p in predictions]
        return weighted_scores(predicted, [int(l) for l in labels])
    pred_values = np.array([p.values for p in predictions])
    true_values = np.array([np.asarray(l, dtype=float) for l in labels])
    pearson = pearson_by_dim(pred_values, true_values)
    return EvalReport(
        per_class={},
        weighted_acc=math.nan,
        weighted_f1=math.nan,
        micro_acc=math.nan,
        pearson=pearson,
    )

"""Synthetic multimodal conversations with planted emotion rules.

Three rules cover the behaviors the model family is supposed to separate:

  modal_instant  the label is a cluster id planted in the current acoustic
                 vector; context and text are uninformative, so a
                 context-free acoustic model can reach 100%.
  text_context   the label mixes the content class of the current turn with
                 the class k_dep turns back; without context the best
                 possible accuracy is enumerable and well below 100%.
  cross_modal    the label is the XOR of a binary text class and the sign
                 of the acoustic pattern; neither stream alone beats
                 chance, so any uplift must come from fusion.

Generation is fully seeded; the same arguments produce byte-identical
files. A sidecar manifest records the rule, dimensions, and enumerated
performance ceilings.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .conversation import Conversation, Expression, save_jsonl
from .encoders import write_vocab

RULE_KINDS = ("modal_instant", "text_context", "cross_modal")


@dataclass
class SyntheticRule:
    """Parameters of one planted labeling rule."""

    kind: str
    num_classes: int
    k_dep: int = 2
    noise: float = 0.1
    amp: float = 1.0
    tokens_per_class: int = 2
    num_filler: int = 8
    min_text_len: int = 1
    max_text_len: int = 3

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}; valid: {RULE_KINDS}")
        if self.kind == "cross_modal" and self.num_classes != 2:
            raise ValueError("cross_modal is a binary rule")
        if self.num_classes < 2:
            raise ValueError("rules need >= 2 classes")

    @property
    def num_content_classes(self) -> int:
        if self.kind == "modal_instant":
            return 0
        return self.num_classes

    @property
    def vocab_size(self) -> int:
        return self.num_filler + self.num_content_classes * self.tokens_per_class

    def content_token(self, content_class: int, variant: int) -> int:
        return self.num_filler + content_class * self.tokens_per_class + variant

    def vocab_tokens(self) -> list[str]:
        tokens = [f"filler-{i}" for i in range(self.num_filler)]
        for c in range(self.num_content_classes):
            tokens += [f"class{c}-tok{j}" for j in range(self.tokens_per_class)]
        return tokens


def make_rule(kind: str, **overrides) -> SyntheticRule:
    defaults = {
        "modal_instant": {"num_classes": 6},
        "text_context": {"num_classes": 2},
        "cross_modal": {"num_classes": 2},
    }[kind]
    return SyntheticRule(kind=kind, **{**defaults, **overrides})


def _acoustic_pattern(d_acoustic: int) -> np.ndarray:
    pattern = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(d_acoustic)])
    return pattern / np.sqrt(d_acoustic)


def _cluster_center(c: int, dim: int) -> np.ndarray:
    center = np.zeros(dim)
    center[c % dim] = 1.0 if (c // dim) % 2 == 0 else -1.0
    return center


def _speaker_sequence(rng: np.random.Generator, length: int, n_speakers: int) -> list[int]:
    if n_speakers > length:
        raise ValueError(f"cannot fit {n_speakers} speakers into {length} turns")
    head = list(rng.permutation(n_speakers) + 1)
    tail = list(rng.integers(1, n_speakers + 1, size=length - n_speakers))
    return head + tail


def _filler_text(rule: SyntheticRule, rng: np.random.Generator, n: int) -> list[int]:
    return list(rng.integers(0, rule.num_filler, size=n))


def generate_conversations(
    rule: SyntheticRule,
    n_conversations: int,
    length: int,
    n_speakers: int,
    seed: int,
    d_visual: int = 32,
    d_acoustic: int = 16,
) -> list[Conversation]:
    """Produce labeled conversations; labels follow the rule exactly."""
    rng = np.random.default_rng(seed)
    pattern = _acoustic_pattern(d_acoustic)
    conversations = []
    for n in range(n_conversations):
        speakers = _speaker_sequence(rng, length, n_speakers)
        expressions = []
        content: list[int] = []
        for turn in range(1, length + 1):
            text_len = int(rng.integers(rule.min_text_len, rule.max_text_len + 1))
            visual = rng.normal(0.0, rule.noise, size=d_visual)
            acoustic = rng.normal(0.0, rule.noise, size=d_acoustic)
            if rule.kind == "modal_instant":
                label = int(rng.integers(rule.num_classes))
                text = _filler_text(rule, rng, text_len)
                acoustic = acoustic + rule.amp * _cluster_center(label, d_acoustic)
            elif rule.kind == "text_context":
                c = int(rng.integers(rule.num_classes))
                content.append(c)
                variant = int(rng.integers(rule.tokens_per_class))
                text = [rule.content_token(c, variant)] + _filler_text(rule, rng, text_len - 1)
                if turn <= rule.k_dep:
                    label = c
                else:
                    label = (c + content[turn - 1 - rule.k_dep]) % rule.num_classes
            else:  # cross_modal
                a = int(rng.integers(2))
                sign = int(rng.integers(2))
                variant = int(rng.integers(rule.tokens_per_class))
                text = [rule.content_token(a, variant)] + _filler_text(rule, rng, text_len - 1)
                acoustic = acoustic + (1.0 if sign else -1.0) * rule.amp * pattern
                label = a ^ sign
            expressions.append(
                Expression(
                    turn=turn,
                    speaker=speakers[turn - 1],
                    text=text,
                    visual=visual,
                    acoustic=acoustic,
                    label=label,
                )
            )
        conversations.append(
            Conversation(conv_id=f"conv-{n:06d}", expressions=expressions, n_speakers=n_speakers)
        )
    return conversations


def context_free_text_ceiling(rule: SyntheticRule, length: int) -> float:
    """Best accuracy a model seeing only the current text can reach.

    For text_context the early turns are fully determined by the current
    content class and later turns are uniform over classes given it; the
    other rules carry no label information in the text beyond chance
    (cross_modal) or none at all (modal_instant).
    """
    c = rule.num_classes
    if rule.kind == "text_context":
        determined = min(rule.k_dep, length)
        free = max(0, length - rule.k_dep)
        return (determined + free / c) / length
    return 1.0 / c


def rule_ceilings(rule: SyntheticRule, length: int) -> dict[str, float]:
    ceilings = {"context_free_text": context_free_text_ceiling(rule, length)}
    if rule.kind == "modal_instant":
        ceilings["acoustic_only"] = 1.0
        ceilings["text_any_context"] = 1.0 / rule.num_classes
    elif rule.kind == "text_context":
        ceilings["context_dependent_text"] = 1.0
    else:
        ceilings["acoustic_only"] = 0.5
        ceilings["text_only"] = 0.5
        ceilings["fused"] = 1.0
    return ceilings


def write_dataset(
    out_path: str | Path,
    rule: SyntheticRule,
    n_conversations: int,
    length: int,
    n_speakers: int,
    context_window: int,
    seed: int,
    d_visual: int = 32,
    d_acoustic: int = 16,
) -> dict:
    """Write the JSONL dataset plus its manifest and vocabulary sidecars."""
    out_path = Path(out_path)
    conversations = generate_conversations(
        rule, n_conversations, length, n_speakers, seed, d_visual, d_acoustic
    )
    save_jsonl(out_path, conversations)
    manifest = {
        "rule": asdict(rule),
        "n_conversations": n_conversations,
        "length": length,
        "n_speakers": n_speakers,
        "context_window": context_window,
        "seed": seed,
        "d_visual": d_visual,
        "d_acoustic": d_acoustic,
        "vocab_size": rule.vocab_size,
        "num_classes": rule.num_classes,
        "informative_modality": "a" if rule.kind != "text_context" else "t",
        "ceilings": rule_ceilings(rule, length),
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_vocab(out_path.with_suffix(out_path.suffix + ".vocab"), rule.vocab_tokens())
    return manifest


def load_manifest(data_path: str | Path) -> dict | None:
    path = Path(data_path)
    manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    if manifest_path.exists():
        return json.loads(manifest_path.read_text(encoding="utf-8"))
    return None

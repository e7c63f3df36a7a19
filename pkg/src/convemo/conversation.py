"""Conversation data model, context extraction, and JSON Lines IO.

A conversation is an ordered sequence of multimodal expressions: each turn
carries a speaker id, a token-id list, fixed-length visual and acoustic
vectors, and either a categorical class label or a 4-dim continuous label.
Turns are 1-based and consecutive; speaker ids are 1-based with the
largest id equal to the speaker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONTINUOUS_LABEL_DIMS = 4


@dataclass(eq=False)
class Expression:
    """One turn's multimodal observation by one speaker."""

    turn: int
    speaker: int
    text: list[int]
    visual: np.ndarray
    acoustic: np.ndarray
    label: int | np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Expression):
            return NotImplemented
        return (
            self.turn == other.turn
            and self.speaker == other.speaker
            and self.text == other.text
            and np.array_equal(self.visual, other.visual)
            and np.array_equal(self.acoustic, other.acoustic)
            and self.is_continuous == other.is_continuous
            and np.array_equal(self.label, other.label)
        )

    def __post_init__(self):
        self.turn = int(self.turn)
        self.speaker = int(self.speaker)
        self.text = [int(t) for t in self.text]
        self.visual = np.asarray(self.visual, dtype=np.float64)
        self.acoustic = np.asarray(self.acoustic, dtype=np.float64)
        if isinstance(self.label, np.integer):
            self.label = int(self.label)
        if not isinstance(self.label, (int, np.integer)):
            self.label = np.asarray(self.label, dtype=np.float64)
            if self.label.shape != (CONTINUOUS_LABEL_DIMS,):
                raise ValueError(
                    f"continuous label must have {CONTINUOUS_LABEL_DIMS} dims, got {self.label.shape}"
                )

    @property
    def is_continuous(self) -> bool:
        return not isinstance(self.label, (int, np.integer))


@dataclass
class Conversation:
    """Expressions in turn order with a fixed speaker count."""

    conv_id: str
    expressions: list[Expression] = field(default_factory=list)
    n_speakers: int = 0

    def __post_init__(self):
        turns = [e.turn for e in self.expressions]
        if turns != list(range(1, len(turns) + 1)):
            raise ValueError(f"{self.conv_id}: turns must be exactly 1..L, got {turns}")
        if self.expressions:
            top = max(e.speaker for e in self.expressions)
            if min(e.speaker for e in self.expressions) < 1:
                raise ValueError(f"{self.conv_id}: speaker ids are 1-based")
            if self.n_speakers == 0:
                self.n_speakers = top
            elif top != self.n_speakers:
                raise ValueError(
                    f"{self.conv_id}: max speaker id {top} != declared count {self.n_speakers}"
                )
            kinds = {e.is_continuous for e in self.expressions}
            if len(kinds) != 1:
                raise ValueError(f"{self.conv_id}: mixed categorical and continuous labels")

    @property
    def length(self) -> int:
        return len(self.expressions)

    @property
    def is_continuous(self) -> bool:
        return self.expressions[0].is_continuous

    def expression(self, turn: int) -> Expression:
        if not 1 <= turn <= self.length:
            raise IndexError(f"turn {turn} out of range [1, {self.length}]")
        return self.expressions[turn - 1]


def individual_context(conv: Conversation, i: int, k: int) -> list[Expression]:
    """Preceding expressions within the window that share the target's speaker.

    Returns expressions with turn in [i-k, i) and the same speaker as turn i,
    in ascending turn order; the target itself is never included.
    """
    if not 1 <= i <= conv.length:
        raise IndexError(f"turn {i} out of range [1, {conv.length}]")
    if k < 0:
        raise ValueError(f"window must be >= 0, got {k}")
    speaker = conv.expressions[i - 1].speaker
    lo = max(1, i - k)
    return [e for e in conv.expressions[lo - 1 : i - 1] if e.speaker == speaker]


def conversational_context(conv: Conversation, i: int, k: int) -> list[Expression]:
    """Preceding expressions within the window from any speaker, ascending."""
    if not 1 <= i <= conv.length:
        raise IndexError(f"turn {i} out of range [1, {conv.length}]")
    if k < 0:
        raise ValueError(f"window must be >= 0, got {k}")
    lo = max(1, i - k)
    return list(conv.expressions[lo - 1 : i - 1])


def _label_to_json(label: int | np.ndarray):
    if isinstance(label, (int, np.integer)):
        return int(label)
    return [float(x) for x in label]


def conversation_to_json(conv: Conversation) -> dict:
    return {
        "conv_id": conv.conv_id,
        "speakers": [e.speaker for e in conv.expressions],
        "utterances": [
            {
                "text": list(map(int, e.text)),
                "visual": [float(x) for x in e.visual],
                "acoustic": [float(x) for x in e.acoustic],
                "label": _label_to_json(e.label),
            }
            for e in conv.expressions
        ],
    }


def conversation_from_json(record: dict) -> Conversation:
    speakers = record["speakers"]
    utterances = record["utterances"]
    if len(speakers) != len(utterances):
        raise ValueError(f"{record.get('conv_id')}: {len(speakers)} speakers vs {len(utterances)} utterances")
    expressions = []
    for turn, (speaker, utt) in enumerate(zip(speakers, utterances), start=1):
        label = utt["label"]
        expressions.append(
            Expression(
                turn=turn,
                speaker=int(speaker),
                text=list(map(int, utt["text"])),
                visual=utt["visual"],
                acoustic=utt["acoustic"],
                label=int(label) if isinstance(label, int) else label,
            )
        )
    return Conversation(conv_id=str(record["conv_id"]), expressions=expressions)


def save_jsonl(path: str | Path, conversations: list[Conversation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for conv in conversations:
            fh.write(json.dumps(conversation_to_json(conv)) + "\n")


def load_jsonl(path: str | Path) -> list[Conversation]:
    conversations = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                conversations.append(conversation_from_json(json.loads(line)))
    kinds = {c.is_continuous for c in conversations}
    if len(kinds) > 1:
        raise ValueError(f"{path}: dataset mixes categorical and continuous labels")
    return conversations

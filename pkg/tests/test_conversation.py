"""Conversation data model and the two context extractors."""

import json

import numpy as np
import pytest

from convemo.conversation import (
    Conversation,
    Expression,
    conversation_from_json,
    conversation_to_json,
    conversational_context,
    individual_context,
    load_jsonl,
    save_jsonl,
)

from conftest import random_conversation


def brute_force_context(conv, i, k, same_speaker):
    """Independent filter over all turns, straight from the definitions."""
    target = conv.expression(i)
    picked = []
    for e in conv.expressions:
        if e.turn >= i or e.turn < i - k:
            continue
        if same_speaker and e.speaker != target.speaker:
            continue
        picked.append(e)
    return sorted(picked, key=lambda e: e.turn)


def eight_turn_three_party():
    """Speakers (1,1,2,1,3,2,1,2): a worked example reused across cases."""
    speakers = [1, 1, 2, 1, 3, 2, 1, 2]
    expressions = [
        Expression(t, s, [t], np.zeros(2), np.zeros(2), 0)
        for t, s in enumerate(speakers, start=1)
    ]
    return Conversation("three-party", expressions, n_speakers=3)


class TestContextExtraction:
    def test_same_speaker_window_turn7(self):
        conv = eight_turn_three_party()
        got = individual_context(conv, 7, 3)
        assert [e.turn for e in got] == [4]
        assert all(e.speaker == 1 for e in got)

    def test_any_speaker_window_turn7(self):
        conv = eight_turn_three_party()
        got = conversational_context(conv, 7, 3)
        assert [(e.turn, e.speaker) for e in got] == [(4, 1), (5, 3), (6, 2)]

    def test_same_speaker_window_turn8(self):
        conv = eight_turn_three_party()
        got = individual_context(conv, 8, 3)
        assert [(e.turn, e.speaker) for e in got] == [(6, 2)]

    def test_first_turn_has_no_context(self):
        conv = eight_turn_three_party()
        assert individual_context(conv, 1, 5) == []
        assert conversational_context(conv, 1, 999) == []

    def test_window_clips_at_start(self):
        conv = eight_turn_three_party()
        got = conversational_context(conv, 3, 10)
        assert [e.turn for e in got] == [1, 2]

    def test_matches_brute_force_on_random_conversations(self, rng):
        for _ in range(150):
            length = int(rng.integers(1, 16))
            n_speakers = int(rng.integers(1, min(5, length) + 1))
            conv = random_conversation(rng, length, n_speakers)
            i = int(rng.integers(1, length + 1))
            k = int(rng.integers(0, 11))
            assert individual_context(conv, i, k) == brute_force_context(conv, i, k, True)
            assert conversational_context(conv, i, k) == brute_force_context(conv, i, k, False)

    def test_subset_and_size_invariants(self, rng):
        conv = random_conversation(rng, 12, 3)
        for i in range(1, 13):
            for k in (0, 1, 4, 20):
                ind = individual_context(conv, i, k)
                full = conversational_context(conv, i, k)
                assert len(full) == min(k, i - 1)
                assert len(ind) <= len(full)
                full_turns = [e.turn for e in full]
                assert full_turns == sorted(full_turns)
                assert all(e in full for e in ind)
                assert all(e.turn != i for e in full)

    def test_bad_arguments(self):
        conv = eight_turn_three_party()
        with pytest.raises(IndexError):
            individual_context(conv, 0, 3)
        with pytest.raises(IndexError):
            conversational_context(conv, 9, 3)
        with pytest.raises(ValueError):
            individual_context(conv, 2, -1)


class TestValidation:
    def make(self, turns, speakers, n_speakers=0):
        exprs = [Expression(t, s, [0], np.zeros(1), np.zeros(1), 0)
                 for t, s in zip(turns, speakers)]
        return Conversation("c", exprs, n_speakers=n_speakers)

    def test_turn_gaps_rejected(self):
        with pytest.raises(ValueError, match="turns"):
            self.make([1, 3], [1, 1])

    def test_duplicate_turns_rejected(self):
        with pytest.raises(ValueError, match="turns"):
            self.make([1, 1], [1, 2])

    def test_speakers_one_based(self):
        with pytest.raises(ValueError, match="1-based"):
            self.make([1, 2], [0, 1])

    def test_declared_speaker_count_must_match_max(self):
        with pytest.raises(ValueError, match="declared count"):
            self.make([1, 2], [1, 2], n_speakers=3)

    def test_mixed_label_kinds_rejected(self):
        exprs = [
            Expression(1, 1, [0], np.zeros(1), np.zeros(1), 2),
            Expression(2, 1, [0], np.zeros(1), np.zeros(1), np.zeros(4)),
        ]
        with pytest.raises(ValueError, match="mixed"):
            Conversation("c", exprs)

    def test_continuous_label_needs_four_dims(self):
        with pytest.raises(ValueError, match="4 dims"):
            Expression(1, 1, [0], np.zeros(1), np.zeros(1), np.zeros(3))


class TestSerialization:
    def test_round_trip_preserves_everything(self, rng):
        conv = random_conversation(rng, 5, 2, continuous=False)
        back = conversation_from_json(conversation_to_json(conv))
        assert back == conv

    def test_round_trip_continuous(self, rng):
        conv = random_conversation(rng, 4, 2, continuous=True)
        back = conversation_from_json(conversation_to_json(conv))
        for a, b in zip(back.expressions, conv.expressions):
            np.testing.assert_array_equal(a.label, b.label)

    def test_record_shape(self, rng):
        record = conversation_to_json(random_conversation(rng, 3, 2))
        assert set(record) == {"conv_id", "speakers", "utterances"}
        assert set(record["utterances"][0]) == {"text", "visual", "acoustic", "label"}
        json.dumps(record)  # must be plain JSON types

    def test_jsonl_file_round_trip(self, rng, tmp_path):
        convs = [random_conversation(rng, 4, 2, conv_id=f"c{i}") for i in range(3)]
        path = tmp_path / "data.jsonl"
        save_jsonl(path, convs)
        assert load_jsonl(path) == convs
        assert len(path.read_text().splitlines()) == 3

    def test_jsonl_rejects_mixed_datasets(self, rng, tmp_path):
        path = tmp_path / "data.jsonl"
        save_jsonl(path, [random_conversation(rng, 3, 2, conv_id="a")])
        extra = conversation_to_json(random_conversation(rng, 3, 2, continuous=True, conv_id="b"))
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(extra) + "\n")
        with pytest.raises(ValueError, match="label"):
            load_jsonl(path)

"""Branch/backbone encoders and the context-preference masks."""

import numpy as np
import pytest

from convemo.autodiff import DimensionError, Tensor
from convemo.conversation import Conversation, Expression
from convemo.hierarchical import (
    DEPENDENT,
    FREE,
    BackboneEncoder,
    BranchEncoder,
    MaskPolicy,
    backbone_mask,
    branch_mask,
)
from convemo.model import ConversationEmotionModel, ModelConfig
from convemo.params import ParameterBag

from conftest import layer_param_dict, scalar_encoder_layer

D = 8


def make_branch(rng, max_seq_len=10, n_layers=1):
    bag = ParameterBag()
    return bag, BranchEncoder(bag, "br", D, n_layers, 2, max_seq_len, rng)


def rows(rng, n):
    return Tensor(rng.normal(size=(n, D)))


class TestMaskPolicy:
    def test_defaults(self):
        policy = MaskPolicy()
        assert policy.text == DEPENDENT
        assert policy.visual == FREE and policy.acoustic == FREE

    def test_modality_lookup(self):
        policy = MaskPolicy(text=FREE, visual=DEPENDENT)
        assert policy.for_modality("t") == FREE
        assert policy.for_modality("v") == DEPENDENT
        assert policy.for_modality("a") == FREE

    def test_invalid_setting_rejected(self):
        with pytest.raises(ValueError, match="policy.visual"):
            MaskPolicy(visual="sometimes")


class TestMasks:
    def test_dependent_is_all_ones(self):
        np.testing.assert_array_equal(branch_mask([0, 0, 1, 1], DEPENDENT), np.ones((4, 4)))
        np.testing.assert_array_equal(backbone_mask(3, DEPENDENT), np.ones((3, 3)))

    def test_free_branch_structure(self):
        mask = branch_mask([0, 0, 0, 1, 1], FREE)
        expected = np.array(
            [
                [1, 1, 1, 0, 0],
                [1, 1, 1, 0, 0],
                [1, 1, 1, 0, 0],
                [0, 0, 0, 1, 0],
                [0, 0, 0, 0, 1],
            ],
            dtype=float,
        )
        np.testing.assert_array_equal(mask, expected)

    def test_free_backbone_is_identity(self):
        np.testing.assert_array_equal(backbone_mask(4, FREE), np.eye(4))

    def test_every_row_has_an_entry(self):
        for segs in ([0, 0], [0, 0, 1], [0, 0, 1, 1, 1]):
            for policy in (DEPENDENT, FREE):
                assert branch_mask(segs, policy).sum(axis=1).min() >= 1


class TestBranchPacking:
    def test_no_context_layout(self, rng):
        bag, branch = make_branch(rng)
        target = rows(rng, 2)
        packed = branch.build_input(target, [], FREE)
        assert packed.segment_ids == [0, 0, 0, 0]
        assert packed.cls_index == 0
        assert packed.target_slice == (1, 3)
        np.testing.assert_array_equal(packed.attn_mask, np.ones((4, 4)))
        np.testing.assert_array_equal(packed.rows.data[0], branch.cls.data)
        np.testing.assert_array_equal(packed.rows.data[1:3], target.data)
        np.testing.assert_array_equal(packed.rows.data[3], branch.sep.data)

    def test_context_layout_and_segments(self, rng):
        bag, branch = make_branch(rng)
        target = rows(rng, 2)
        ctx = [rows(rng, 1), rows(rng, 2)]
        packed = branch.build_input(target, ctx, DEPENDENT)
        assert packed.segment_ids == [0] * 4 + [1] * 3
        np.testing.assert_array_equal(packed.rows.data[4], ctx[0].data[0])
        np.testing.assert_array_equal(packed.rows.data[5:7], ctx[1].data)

    def test_empty_target_still_packs(self, rng):
        bag, branch = make_branch(rng)
        packed = branch.build_input(rows(rng, 0), [rows(rng, 2)], DEPENDENT)
        assert packed.segment_ids == [0, 0, 1, 1]
        np.testing.assert_array_equal(packed.rows.data[0], branch.cls.data)
        np.testing.assert_array_equal(packed.rows.data[1], branch.sep.data)

    def test_overflow_drops_oldest_context_first(self, rng):
        bag, branch = make_branch(rng, max_seq_len=8)
        target = rows(rng, 3)  # 5 rows with specials, 3 left for context
        oldest, middle, newest = rows(rng, 2), rows(rng, 2), rows(rng, 2)
        packed = branch.build_input(target, [oldest, middle, newest], DEPENDENT)
        # only the two newest items fit whole (2 + 2 > 3 leaves just one)
        assert packed.segment_ids.count(1) == 2
        np.testing.assert_array_equal(packed.rows.data[5:7], newest.data)

    def test_overflow_trims_target_from_left(self, rng):
        bag, branch = make_branch(rng, max_seq_len=5)
        target = rows(rng, 6)
        packed = branch.build_input(target, [rows(rng, 2)], DEPENDENT)
        assert packed.segment_ids == [0, 0, 0, 0, 0]
        np.testing.assert_array_equal(packed.rows.data[1:4], target.data[3:])


class TestBranchEncoding:
    def test_output_is_single_vector_for_any_context_length(self, rng):
        bag, branch = make_branch(rng, max_seq_len=20)
        target = rows(rng, 2)
        for n_ctx in range(4):
            ctx = [rows(rng, 2) for _ in range(n_ctx)]
            for policy in (DEPENDENT, FREE):
                assert branch.encode_target(target, ctx, policy).data.shape == (D,)

    def test_deterministic_recomputation(self, rng):
        bag, branch = make_branch(rng)
        target = rows(rng, 1)
        a = branch.encode_target(target, [], DEPENDENT).data
        b = branch.encode_target(Tensor(target.data.copy()), [], DEPENDENT).data
        assert np.array_equal(a, b)

    def test_free_policy_ignores_context_exactly(self, rng):
        """Replacing every context row must not move a single output bit."""
        bag, branch = make_branch(rng, max_seq_len=16)
        target = rows(rng, 3)
        ctx = [rows(rng, 2) for _ in range(3)]
        wild = [Tensor(c.data + rng.normal(size=c.data.shape) * 50) for c in ctx]
        base = branch.encode_target(target, ctx, FREE).data
        edited = branch.encode_target(target, wild, FREE).data
        assert np.array_equal(base, edited)
        permuted = branch.encode_target(target, ctx[::-1], FREE).data
        assert np.array_equal(base, permuted)

    def test_dependent_policy_sees_context(self, rng):
        changed = 0
        for trial in range(20):
            bag, branch = make_branch(np.random.default_rng(trial), max_seq_len=16)
            target = rows(rng, 2)
            ctx = [rows(rng, 2)]
            base = branch.encode_target(target, ctx, DEPENDENT).data
            edited_ctx = [Tensor(ctx[0].data + rng.normal(size=(2, D)))]
            edited = branch.encode_target(target, edited_ctx, DEPENDENT).data
            if np.max(np.abs(base - edited)) > 1e-8:
                changed += 1
        assert changed == 20


class TestBackbone:
    def make_backbone(self, rng, window=4, n_layers=1):
        bag = ParameterBag()
        return bag, BackboneEncoder(bag, "bb", D, n_layers, 2, window, rng)

    def test_free_equals_target_alone(self, rng):
        # Identical up to matmul rounding: BLAS picks different kernels for
        # 4-row and 1-row stacks, so bitwise equality is not guaranteed.
        bag, backbone = self.make_backbone(rng)
        ctx = [Tensor(rng.normal(size=D)) for _ in range(3)]
        f = Tensor(rng.normal(size=D))
        with_ctx = backbone.encode(ctx + [f], FREE).data
        alone = backbone.encode([f], FREE).data
        assert np.max(np.abs(with_ctx - alone)) <= 1e-12

    def test_single_feature_window(self, rng):
        bag, backbone = self.make_backbone(rng)
        f = Tensor(rng.normal(size=D))
        out = backbone.encode([f], DEPENDENT)
        assert out.data.shape == (D,)

    def test_dependent_matches_scalar_stack(self, rng):
        bag, backbone = self.make_backbone(rng, window=2, n_layers=2)
        feats = [Tensor(rng.normal(size=D)) for _ in range(3)]
        got = backbone.encode(feats, DEPENDENT).data

        x = np.stack([f.data for f in feats]) + backbone.pos_emb.data[0:3]
        mask = np.ones((3, 3))
        for i in range(2):
            x = scalar_encoder_layer(x, mask, 2, layer_param_dict(bag, f"bb.enc.layer{i}"))
        np.testing.assert_allclose(got, x[2], atol=1e-10)

    def test_window_bounds(self, rng):
        bag, backbone = self.make_backbone(rng, window=2)
        feats = [Tensor(rng.normal(size=D)) for _ in range(4)]
        with pytest.raises(DimensionError):
            backbone.encode(feats, DEPENDENT)
        with pytest.raises(IndexError):
            backbone.encode([], DEPENDENT)


def two_speaker_conversation(rng, relabel=None):
    speakers = [1, 2, 1, 2, 2]
    if relabel:
        speakers = [relabel[s] for s in speakers]
    exprs = []
    for turn, speaker in enumerate(speakers, start=1):
        exprs.append(
            Expression(turn, speaker, [turn % 5], rng.normal(size=4), rng.normal(size=4),
                       turn % 2)
        )
    return Conversation("c", exprs, n_speakers=2)


class TestModelLevelHierarchy:
    def small_config(self, **overrides):
        base = dict(
            vocab_size=6, d_model=D, d_visual=4, d_acoustic=4, max_seq_len=10,
            context_window=3, n_branch=1, n_backbone=1, heads=2,
            fusion_n_layers=1, fusion_heads=2, fusion_d_h=D, num_classes=2,
        )
        base.update(overrides)
        return ModelConfig(**base)

    def test_speaker_relabeling_preserves_representations(self, rng):
        """The hierarchy only uses who-matches-whom, not the id values."""
        state = rng.bit_generator.state
        conv = two_speaker_conversation(rng)
        rng.bit_generator.state = state
        swapped = two_speaker_conversation(rng, relabel={1: 2, 2: 1})
        model = ConversationEmotionModel(self.small_config(), seed=3)
        for modality in ("t", "a"):
            a = [r.data for r in model.representations(conv, modality)]
            b = [r.data for r in model.representations(swapped, modality)]
            for x, y in zip(a, b):
                assert np.array_equal(x, y)

    def test_free_modal_stream_ignores_context_edits(self, rng):
        conv = two_speaker_conversation(rng)
        model = ConversationEmotionModel(self.small_config(), seed=5)
        target_turn = 4
        base = model.representations(conv, "a")[target_turn - 1].data
        edited = two_speaker_conversation(np.random.default_rng(99))
        # keep the target utterance itself, change everything else
        edited.expressions[target_turn - 1] = conv.expressions[target_turn - 1]
        got = model.representations(edited, "a")[target_turn - 1].data
        assert np.max(np.abs(base - got)) <= 1e-9

    def test_dependent_text_stream_sees_context_edits(self, rng):
        state = rng.bit_generator.state
        conv = two_speaker_conversation(rng)
        rng.bit_generator.state = state
        edited = two_speaker_conversation(rng)
        # turn 2 is the same-speaker context of turn 4; rewrite its words
        old = edited.expressions[1]
        edited.expressions[1] = Expression(
            old.turn, old.speaker, [3, 1, 4], old.visual, old.acoustic, old.label
        )
        model = ConversationEmotionModel(self.small_config(), seed=5)
        base = model.representations(conv, "t")[3].data
        got = model.representations(edited, "t")[3].data
        assert np.max(np.abs(base - got)) > 1e-8

"""Variant grids and their summaries."""

import csv
import json

import numpy as np
import pytest

from convemo.ablation import (
    GRIDS,
    AblationVariant,
    apply_variant,
    fusion_grid,
    policy_grid,
    run_variant,
    summarize,
    write_summary,
)
from convemo.model import ModelConfig
from convemo.training import TrainConfig

from conftest import random_conversation


def test_fusion_grid_covers_all_modes():
    names = [v.name for v in fusion_grid()]
    assert names == ["gate+trm", "gate+concat", "trm-only", "concat-only", "text-only"]
    for v in fusion_grid():
        assert v.fusion_mode == v.name and v.policy is None


def test_policy_grid_crosses_text_and_modal():
    names = [v.name for v in policy_grid()]
    assert names == [
        "text=dependent,modal=dependent",
        "text=dependent,modal=free",
        "text=free,modal=dependent",
        "text=free,modal=free",
    ]
    last = policy_grid()[-1]
    assert last.policy == {"text": "free", "visual": "free", "acoustic": "free"}


def test_grids_registry():
    assert set(GRIDS) == {"fusion", "policy"}


def test_apply_variant_changes_one_axis():
    base = ModelConfig(d_model=8, fusion_d_h=8, heads=2, fusion_heads=2)
    fused = apply_variant(base, AblationVariant("trm-only", fusion_mode="trm-only"))
    assert fused.fusion_mode == "trm-only"
    assert fused.policy == base.policy

    repol = apply_variant(base, AblationVariant("p", policy={"text": "free"}))
    assert repol.fusion_mode == base.fusion_mode
    assert repol.policy.text == "free"
    assert repol.policy.acoustic == base.policy.acoustic
    # the base config is never mutated
    assert base.policy.text == "dependent"


def test_summarize_population_stats():
    rows = [
        {"variant": "a", "seed": 0, "weighted_f1": 0.2, "weighted_acc": 0.3, "micro_acc": 0.3},
        {"variant": "a", "seed": 1, "weighted_f1": 0.4, "weighted_acc": 0.5, "micro_acc": 0.5},
        {"variant": "b", "seed": 0, "weighted_f1": 0.9, "weighted_acc": 0.9, "micro_acc": 0.9},
    ]
    summary = summarize(rows)
    assert [e["variant"] for e in summary] == ["a", "b"]
    a = summary[0]
    assert a["n_seeds"] == 2
    assert a["weighted_f1_mean"] == pytest.approx(0.3)
    assert a["weighted_f1_std"] == pytest.approx(0.1)  # population, not sample
    assert summary[1]["weighted_f1_std"] == 0.0


def test_write_summary_files(tmp_path):
    rows = [
        {"variant": "a", "seed": 0, "weighted_f1": 0.25, "weighted_acc": 0.5, "micro_acc": 0.5},
        {"variant": "a", "seed": 1, "weighted_f1": 0.75, "weighted_acc": 0.5, "micro_acc": 0.5},
    ]
    summary = write_summary(tmp_path, rows)
    with open(tmp_path / "ablation_rows.csv", newline="") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["variant", "seed", "weighted_f1", "weighted_acc", "micro_acc"]
    assert len(table) == 3 and table[1][0] == "a"

    with open(tmp_path / "ablation_summary.csv", newline="") as fh:
        stats = list(csv.reader(fh))
    assert stats[1][0] == "a" and float(stats[1][2]) == pytest.approx(0.5)

    on_disk = json.loads((tmp_path / "ablation_summary.json").read_text())
    assert on_disk == summary


def test_run_variant_is_seed_deterministic():
    rng = np.random.default_rng(0)
    convs = [
        random_conversation(rng, length=3, n_speakers=2, conv_id=f"c{i}") for i in range(4)
    ]
    cfg = ModelConfig(
        vocab_size=12, d_model=8, d_visual=4, d_acoustic=4, max_seq_len=10,
        context_window=2, n_branch=1, n_backbone=1, heads=2,
        fusion_n_layers=1, fusion_heads=2, fusion_d_h=8, num_classes=4,
    )
    tcfg = TrainConfig(lr=1e-3, epochs=1, batch_size=2, warmup_steps=1, seed=0)
    variant = AblationVariant("gate+concat", fusion_mode="gate+concat")
    rows_a = run_variant(cfg, tcfg, variant, convs[:3], convs[3:], seeds=[5])
    rows_b = run_variant(cfg, tcfg, variant, convs[:3], convs[3:], seeds=[5])
    assert rows_a == rows_b
    assert rows_a[0]["variant"] == "gate+concat" and rows_a[0]["seed"] == 5

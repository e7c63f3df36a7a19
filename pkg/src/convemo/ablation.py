"""Variant grids: retrain the model with one design axis changed at a time.

Two stock grids are provided — fusion modes and context-mask policies —
and each variant can be run over several seeds. Rows carry one
(variant, seed) result; summaries aggregate mean and population std of
the scores per variant.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .conversation import Conversation
from .fusion import FUSION_MODES
from .hierarchical import DEPENDENT, FREE
from .model import ConversationEmotionModel, ModelConfig
from .training import TrainConfig, evaluate_model, train_model

SCORE_FIELDS = ("weighted_f1", "weighted_acc", "micro_acc")


@dataclass
class AblationVariant:
    name: str
    fusion_mode: str | None = None
    policy: dict[str, str] | None = None


def apply_variant(base: ModelConfig, variant: AblationVariant) -> ModelConfig:
    cfg = base
    if variant.fusion_mode is not None:
        cfg = replace(cfg, fusion_mode=variant.fusion_mode)
    if variant.policy is not None:
        cfg = cfg.with_policy(**variant.policy)
    return cfg


def fusion_grid() -> list[AblationVariant]:
    return [AblationVariant(name=mode, fusion_mode=mode) for mode in FUSION_MODES]


def policy_grid() -> list[AblationVariant]:
    """Text mask policy crossed with the shared visual/acoustic policy."""
    variants = []
    for text_policy in (DEPENDENT, FREE):
        for modal_policy in (DEPENDENT, FREE):
            variants.append(
                AblationVariant(
                    name=f"text={text_policy},modal={modal_policy}",
                    policy={
                        "text": text_policy,
                        "visual": modal_policy,
                        "acoustic": modal_policy,
                    },
                )
            )
    return variants


GRIDS = {"fusion": fusion_grid, "policy": policy_grid}


def run_variant(
    base_cfg: ModelConfig,
    train_cfg: TrainConfig,
    variant: AblationVariant,
    train_convs: list[Conversation],
    eval_convs: list[Conversation],
    seeds: list[int],
) -> list[dict]:
    cfg = apply_variant(base_cfg, variant)
    rows = []
    for seed in seeds:
        model = ConversationEmotionModel(cfg, seed=seed)
        seeded = replace(train_cfg, seed=seed)
        train_model(model, seeded, train_convs)
        report = evaluate_model(model, eval_convs)
        rows.append(
            {
                "variant": variant.name,
                "seed": seed,
                "weighted_f1": report.weighted_f1,
                "weighted_acc": report.weighted_acc,
                "micro_acc": report.micro_acc,
            }
        )
    return rows


def run_grid(
    variants: list[AblationVariant],
    base_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_convs: list[Conversation],
    eval_convs: list[Conversation],
    seeds: list[int],
) -> list[dict]:
    rows = []
    for variant in variants:
        rows.extend(run_variant(base_cfg, train_cfg, variant, train_convs, eval_convs, seeds))
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and population std of each score, grouped by variant."""
    order = []
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        if row["variant"] not in grouped:
            grouped[row["variant"]] = []
            order.append(row["variant"])
        grouped[row["variant"]].append(row)
    summary = []
    for name in order:
        group = grouped[name]
        entry = {"variant": name, "n_seeds": len(group)}
        for field in SCORE_FIELDS:
            values = np.array([r[field] for r in group], dtype=float)
            entry[f"{field}_mean"] = float(values.mean())
            entry[f"{field}_std"] = float(values.std())
        summary.append(entry)
    return summary


def write_rows_csv(path: str | Path, rows: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", *SCORE_FIELDS])
        for row in rows:
            writer.writerow(
                [row["variant"], row["seed"], *(f"{row[f]:.6f}" for f in SCORE_FIELDS)]
            )


def write_summary(out_dir: str | Path, rows: list[dict]) -> list[dict]:
    out_dir = Path(out_dir)
    summary = summarize(rows)
    write_rows_csv(out_dir / "ablation_rows.csv", rows)
    with open(out_dir / "ablation_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["variant", "n_seeds"]
        for field in SCORE_FIELDS:
            header += [f"{field}_mean", f"{field}_std"]
        writer.writerow(header)
        for entry in summary:
            row = [entry["variant"], entry["n_seeds"]]
            for field in SCORE_FIELDS:
                row += [f"{entry[f'{field}_mean']:.6f}", f"{entry[f'{field}_std']:.6f}"]
            writer.writerow(row)
    (out_dir / "ablation_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary

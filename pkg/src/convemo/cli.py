"""Command-line harness: gen-data, train, eval, ablate, inspect-mask."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ablation import GRIDS, run_grid, write_summary
from .conversation import load_jsonl
from .config import load_config_file
from .heads import CATEGORICAL, CONTINUOUS
from .hierarchical import DEPENDENT, FREE, backbone_mask, branch_mask
from .model import ConversationEmotionModel, ModelConfig
from .plots import plot_ablation_summary, plot_eval_report, plot_training_curve
from .synthetic import RULE_KINDS, load_manifest, make_rule, write_dataset
from .training import TrainConfig, evaluate_model, load_model, train_model


def _model_config_for_data(mapping: dict, conversations, manifest: dict | None) -> ModelConfig:
    """Fill structural keys the config file left out from the data itself."""
    resolved = dict(mapping)
    if "vocab_size" not in resolved:
        if manifest is not None:
            resolved["vocab_size"] = manifest["vocab_size"]
        else:
            top = max(
                (max(e.text) for c in conversations for e in c.expressions if e.text),
                default=0,
            )
            resolved["vocab_size"] = top + 1
    first = conversations[0].expressions[0]
    resolved.setdefault("d_visual", len(first.visual))
    resolved.setdefault("d_acoustic", len(first.acoustic))
    if "K" not in resolved and "context_window" not in resolved and manifest is not None:
        resolved["context_window"] = manifest["context_window"]
    if conversations[0].is_continuous:
        resolved.setdefault("head.kind", CONTINUOUS)
    elif "num_classes" not in resolved and "head.num_classes" not in resolved:
        if manifest is not None:
            resolved["num_classes"] = manifest["num_classes"]
        else:
            top = max(int(e.label) for c in conversations for e in c.expressions)
            resolved["num_classes"] = top + 1
    return ModelConfig.from_mapping(resolved)


def _cmd_gen_data(args) -> int:
    overrides = {}
    if args.classes is not None:
        overrides["num_classes"] = args.classes
    if args.k_dep is not None:
        overrides["k_dep"] = args.k_dep
    if args.noise is not None:
        overrides["noise"] = args.noise
    if args.amp is not None:
        overrides["amp"] = args.amp
    rule = make_rule(args.rule, **overrides)
    manifest = write_dataset(
        args.out,
        rule,
        n_conversations=args.n,
        length=args.L,
        n_speakers=args.N,
        context_window=args.K,
        seed=args.seed,
        d_visual=args.d_visual,
        d_acoustic=args.d_acoustic,
    )
    print(f"wrote {args.n} conversations ({args.n * args.L} utterances) to {args.out}")
    ceilings = ", ".join(f"{k}={v:.3f}" for k, v in sorted(manifest["ceilings"].items()))
    print(f"rule={args.rule} classes={manifest['num_classes']} ceilings: {ceilings}")
    return 0


def _cmd_train(args) -> int:
    mapping = load_config_file(args.config) if args.config else {}
    conversations = load_jsonl(args.data)
    manifest = load_manifest(args.data)
    model_cfg = _model_config_for_data(mapping, conversations, manifest)
    train_cfg = TrainConfig.from_mapping(mapping)
    model = ConversationEmotionModel(model_cfg, seed=train_cfg.seed)
    print(f"training on {len(conversations)} conversations "
          f"({model.parameters.num_values()} parameters)")
    result = train_model(model, train_cfg, conversations, out_dir=args.out)
    if result.log:
        first_loss, last_loss = result.log[0][2], result.log[-1][2]
        print(f"steps={result.log[-1][0]} loss {first_loss:.4f} -> {last_loss:.4f}")
        plot_training_curve(result.log, Path(args.out) / "training_curve.png")
    if result.val_losses:
        print(f"best val loss {result.best_val_loss:.4f} at epoch {result.best_epoch}")
    print(f"final checkpoint: {result.final_checkpoint}")
    if result.best_checkpoint is not None:
        print(f"best checkpoint:  {result.best_checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.ckpt)
    conversations = load_jsonl(args.data)
    report = evaluate_model(model, conversations)
    print(report.format_table())
    if args.json:
        json_path = Path(args.json)
        json_path.write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"report written to {json_path}")
        figure = Path(args.figure) if args.figure else json_path.with_suffix(".png")
        plot_eval_report(report, figure)
        print(f"figure written to {figure}")
    elif args.figure:
        plot_eval_report(report, Path(args.figure))
        print(f"figure written to {args.figure}")
    return 0


def _cmd_ablate(args) -> int:
    mapping = load_config_file(args.config) if args.config else {}
    conversations = load_jsonl(args.data)
    manifest = load_manifest(args.data)
    if args.eval_data:
        train_convs = conversations
        eval_convs = load_jsonl(args.eval_data)
    else:
        from .training import split_validation

        train_convs, eval_convs = split_validation(conversations, args.seed)
    base_cfg = _model_config_for_data(mapping, conversations, manifest)
    train_cfg = TrainConfig.from_mapping(mapping)
    seeds = [args.seed + i for i in range(args.runs)]
    variants = GRIDS[args.grid]()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_grid(variants, base_cfg, train_cfg, train_convs, eval_convs, seeds)
    summary = write_summary(out_dir, rows)
    plot_ablation_summary(summary, out_dir / "ablation_weighted_f1.png")
    width = max(len(e["variant"]) for e in summary)
    print(f"{'variant':<{width}}  weighted_f1 (mean +/- std over {args.runs} run(s))")
    for entry in summary:
        print(f"{entry['variant']:<{width}}  "
              f"{entry['weighted_f1_mean']:.4f} +/- {entry['weighted_f1_std']:.4f}")
    print(f"tables and figure written to {out_dir}")
    return 0


def _mask_segments_from_data(args) -> list[int]:
    from .conversation import individual_context

    conversations = load_jsonl(args.data)
    if args.conv:
        match = [c for c in conversations if c.conv_id == args.conv]
        if not match:
            raise SystemExit(f"conversation {args.conv!r} not found in {args.data}")
        conv = match[0]
    else:
        conv = conversations[0]
    target = conv.expression(args.turn)
    context = individual_context(conv, args.turn, args.K)
    segments = [0] * (2 + len(target.text))
    for expr in context:
        segments += [1] * len(expr.text)
    return segments


def _cmd_inspect_mask(args) -> int:
    if args.level == "backbone":
        n = args.window_rows
        mask = backbone_mask(n, args.policy)
        print(f"backbone mask, policy={args.policy}, {n} window rows "
              "(last row is the target):")
    else:
        if args.data:
            segments = _mask_segments_from_data(args)
        else:
            segments = [0] * (2 + args.target_tokens)
            if args.context_tokens:
                for part in args.context_tokens.split(","):
                    segments += [1] * int(part)
        import numpy as np

        mask = branch_mask(np.array(segments), args.policy)
        print(f"branch mask, policy={args.policy} "
              "(segment 0 = [CLS]+target+[SEP], segment 1 = context):")
        print("segments: " + " ".join(str(s) for s in segments))
    for row in mask.astype(int):
        print(" ".join(str(v) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convemo",
        description="Conversation emotion modeling: synthetic data, training, "
        "evaluation, and ablation grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic dataset with a planted rule")
    gen.add_argument("--rule", required=True, choices=RULE_KINDS)
    gen.add_argument("--n", type=int, required=True, help="number of conversations")
    gen.add_argument("--L", type=int, required=True, help="turns per conversation")
    gen.add_argument("--N", type=int, required=True, help="speakers per conversation")
    gen.add_argument("--K", type=int, default=8, help="context window recorded in the manifest")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--classes", type=int, default=None)
    gen.add_argument("--k-dep", type=int, default=None, help="text_context dependency lag")
    gen.add_argument("--noise", type=float, default=None)
    gen.add_argument("--amp", type=float, default=None)
    gen.add_argument("--d-visual", type=int, default=32)
    gen.add_argument("--d-acoustic", type=int, default=16)
    gen.set_defaults(func=_cmd_gen_data)

    train = sub.add_parser("train", help="train a model and write checkpoints + logs")
    train.add_argument("--config", default=None, help="flat key=value config file")
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True)
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--json", default=None, help="also write the report as JSON here")
    ev.add_argument("--figure", default=None, help="write the report figure here")
    ev.set_defaults(func=_cmd_eval)

    ab = sub.add_parser("ablate", help="train and score a variant grid")
    ab.add_argument("--grid", required=True, choices=sorted(GRIDS))
    ab.add_argument("--data", required=True)
    ab.add_argument("--out", required=True)
    ab.add_argument("--config", default=None)
    ab.add_argument("--eval-data", default=None, help="held-out data (default: 0.2 split)")
    ab.add_argument("--runs", type=int, default=1, help="seeds per variant")
    ab.add_argument("--seed", type=int, default=0)
    ab.set_defaults(func=_cmd_ablate)

    insp = sub.add_parser("inspect-mask", help="print an attention mask as a 0/1 grid")
    insp.add_argument("--policy", required=True, choices=(DEPENDENT, FREE))
    insp.add_argument("--turn", type=int, default=1)
    insp.add_argument("--level", choices=("branch", "backbone"), default="branch")
    insp.add_argument("--data", default=None, help="take token counts from this dataset")
    insp.add_argument("--conv", default=None, help="conversation id within --data")
    insp.add_argument("--K", type=int, default=8)
    insp.add_argument("--target-tokens", type=int, default=3)
    insp.add_argument("--context-tokens", default="2,2",
                      help="comma list of context token counts (without --data)")
    insp.add_argument("--window-rows", type=int, default=4,
                      help="rows in the backbone window (with --level backbone)")
    insp.set_defaults(func=_cmd_inspect_mask)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: synth, train, eval, bench, plot."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .model import ModelConfig

log = logging.getLogger("vadkit")

MODEL_CONFIG_NAME = "model_config.json"


def _model_config(config_path: str | None, data_root: str) -> ModelConfig:
    """Explicit file, else the dataset's own ``model_config.json``, else the full-size default."""
    if config_path:
        return ModelConfig.from_json(Path(config_path).read_text())
    candidate = Path(data_root) / MODEL_CONFIG_NAME
    if candidate.exists():
        return ModelConfig.from_json(candidate.read_text())
    return ModelConfig()


def cmd_synth(args) -> int:
    from .synth import SyntheticSceneConfig, synth_generate, write_dataset

    cfg = SyntheticSceneConfig.load(args.config) if args.config else SyntheticSceneConfig()
    cfg.validate()
    train_m, test_m = write_dataset(synth_generate(cfg), args.out)
    model_cfg = ModelConfig().scaled_to(cfg.height, cfg.width)
    (Path(args.out) / MODEL_CONFIG_NAME).write_text(model_cfg.to_json() + "\n")
    abnormal = sum(int((m.labels == 0).sum()) for m in test_m)
    total = sum(len(m) for m in test_m)
    print(
        f"wrote {len(train_m)} train clips and {len(test_m)} test clips to {args.out} "
        f"({cfg.height}x{cfg.width}, {abnormal}/{total} test frames abnormal)"
    )
    return 0


def cmd_train(args) -> int:
    from .train import RunConfig, train, write_run

    run = RunConfig(
        data_root=args.data,
        model=_model_config(args.config, args.data),
        policy=args.policy,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        patch_size=args.patch_size,
    )
    result = train(run, progress=not args.quiet)
    write_run(result, run, args.out)
    print(f"checkpoint {args.out} (final epoch loss {result.epoch_losses[-1]:.5f})")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import run_evaluation
    from .model import load_model

    model, meta = load_model(args.ckpt)
    record = run_evaluation(model, meta, args.data, args.out)
    auc = "n/a" if record["auc"] is None else f"{record['auc']:.4f}"
    gap = "n/a" if record["score_gap"] is None else f"{record['score_gap']:.4f}"
    print(f"auc {auc} score_gap {gap} over {record['frames_scored']} frames in {record['clips']} clips")
    return 0


def cmd_bench(args) -> int:
    from .bench import machine_metadata, run_bench
    from .data import discover_clips, load_clip
    from .model import load_model

    model, meta = load_model(args.ckpt)
    manifests = discover_clips(args.data, "test")
    if not manifests:
        raise ValueError(f"no test clips under {args.data}")
    frames = load_clip(manifests[0])
    report = run_bench(model, frames, args.warmup, args.iters)
    out = report.to_dict()
    out.update(machine=machine_metadata(), seed=meta.get("seed"), config_digest=meta.get("config_digest"))
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_plot(args) -> int:
    from .plot import plot_scores

    written = plot_scores(args.scores, args.out)
    print(f"wrote {len(written)} plot(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    from .patches import TransformPolicy

    p = argparse.ArgumentParser(prog="vadkit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate the synthetic corpus")
    s.add_argument("--config", help="JSON scene config (defaults apply when omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a predictor")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help=f"model config JSON (default: <data>/{MODEL_CONFIG_NAME} if present)")
    t.add_argument("--policy", default="tmt-or-srt", choices=[v.value for v in TransformPolicy])
    t.add_argument("--patch-size", type=int, default=None, help="patch side in pixels (default: scaled to frame height)")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch-size", type=int, default=4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score the test split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="directory for metrics.json and scores.csv")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="per-frame inference throughput")
    b.add_argument("--ckpt", required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--warmup", type=int, default=5)
    b.add_argument("--iters", type=int, default=50)
    b.add_argument("--out", help="also write the report here")
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="SVG score curves from a scores CSV")
    pl.add_argument("--scores", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, ArithmeticError, KeyError) as exc:
        print(f"vadkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

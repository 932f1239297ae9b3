"""Command-line surface: extraction, dataset building, two-phase training,
evaluation, sweeps, and toy-scale generation.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import resolve_config
from .errors import DividError, UsageError
from .manifest import (DatasetManifest, ScanRoot, build_manifest,
                       read_manifest, write_manifest)
from .predictors import get_predictor, predictor_names
from .schedule import SamplerConfig, config_digest, default_schedule

FUSION_NAMES = {"dire": "dire_only", "rgb": "rgb_only", "dire+rgb": "dire_plus_rgb"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file (flags take precedence)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--workers", type=int, default=1,
                   help="extraction/evaluation parallelism")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divid",
        description="Diffusion-generated video detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-dire",
                       help="compute reconstruction-error maps for every clip")
    p.add_argument("--manifest", required=True, help="input manifest (JSON Lines)")
    p.add_argument("--output", help="updated manifest path (default: in place)")
    p.add_argument("--diffusion-steps", type=int, help="schedule length T")
    p.add_argument("--ddim-steps", type=int, help="number of sampler steps")
    p.add_argument("--eta", type=float, help="stochasticity (must be 0 for DIRE)")
    p.add_argument("--predictor", default="zero",
                   help=f"registered predictor: {predictor_names()}")
    p.add_argument("--checkpoint", help="predictor checkpoint locator")
    _add_common(p)

    p = sub.add_parser("build-manifest", help="scan clip directories into a manifest")
    p.add_argument("--output", required=True, help="manifest path to write")
    p.add_argument("--root", action="append", required=True, metavar="SRC:LABEL:SPLIT:PATH",
                   help="tagged scan root; repeatable")
    _add_common(p)

    p = sub.add_parser("train", help="two-phase detector training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--phase", choices=["cnn", "lstm"], required=True)
    p.add_argument("--fusion", choices=sorted(FUSION_NAMES), default="dire")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seq-len", type=int, default=4)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--resolution", type=int, default=256, help="input side length")
    p.add_argument("--backbone-checkpoint", help="phase-cnn checkpoint (lstm phase)")
    p.add_argument("--output", required=True, help="checkpoint directory")
    _add_common(p)

    p = sub.add_parser("eval", help="per-frame metrics on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "test_in", "test_out"],
                   default="test_in")
    p.add_argument("--checkpoint", required=True, help="detector checkpoint directory")
    p.add_argument("--head", choices=["sequence", "frame"], default="sequence")
    p.add_argument("--output", help="JSON report path")
    _add_common(p)

    p = sub.add_parser("sweep", help="diffusion-step / ddim-step grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--diffusion-steps", required=True,
                   help="comma-separated schedule lengths")
    p.add_argument("--ddim-steps", required=True,
                   help="comma-separated sampler step counts")
    p.add_argument("--predictor", default="zero")
    p.add_argument("--checkpoint", help="predictor checkpoint locator")
    p.add_argument("--split", default="test_in")
    p.add_argument("--retrain", action="store_true",
                   help="retrain the detector per cell (default: reuse)")
    p.add_argument("--detector-checkpoint", help="detector for no-retrain sweeps")
    p.add_argument("--fusion", choices=sorted(FUSION_NAMES), default="dire")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seq-len", type=int, default=4)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--output", required=True, help="CSV output path")
    _add_common(p)

    p = sub.add_parser("toy", help="toy-scale substrate")
    toy_sub = p.add_subparsers(dest="toy_command", required=True)

    q = toy_sub.add_parser("train-predictor", help="train the toy noise predictor")
    q.add_argument("--output", required=True, help="predictor checkpoint directory")
    q.add_argument("--diffusion-steps", type=int, default=100)
    q.add_argument("--steps", type=int, default=600, help="optimizer steps")
    _add_common(q)

    q = toy_sub.add_parser("generate", help="write synthetic clip datasets")
    q.add_argument("--output", required=True, help="dataset root directory")
    q.add_argument("--manifest", required=True, help="manifest path to write")
    q.add_argument("--kind", choices=["clips", "separable", "temporal"],
                   default="clips")
    q.add_argument("--n-clips", type=int, default=16)
    q.add_argument("--clip-length", type=int, default=8)
    q.add_argument("--split", default="train")
    q.add_argument("--checkpoint", help="toy predictor checkpoint (kind=clips)")
    q.add_argument("--diffusion-steps", type=int, default=100)
    q.add_argument("--ddim-steps", type=int, default=10)
    _add_common(q)

    return parser


def _sampler_setup(run):
    schedule = default_schedule(run["total_steps"])
    config = SamplerConfig(ddim_steps=run["ddim_steps"], eta=run["eta"])
    return schedule, config


def cmd_extract_dire(args) -> int:
    from .sweep import extract_manifest_dire

    run = resolve_config({"total_steps": args.diffusion_steps,
                          "ddim_steps": args.ddim_steps, "eta": args.eta,
                          "seed": args.seed}, args.config)
    if run["eta"] != 0.0:
        raise UsageError("DIRE extraction requires --eta 0")
    schedule, config = _sampler_setup(run)
    manifest = read_manifest(args.manifest)
    predictor = get_predictor(args.predictor, args.checkpoint)
    out_manifest_path = args.output or args.manifest
    dire_dir = Path(out_manifest_path).parent / "dire"
    updated = extract_manifest_dire(manifest, predictor, schedule, config,
                                    dire_dir, workers=args.workers)
    updated = DatasetManifest(updated.entries, updated.schema_version, run.digest)
    write_manifest(updated, out_manifest_path)
    print(f"extracted DIRE for {len(updated.entries)} clips "
          f"(T={schedule.total_steps}, ddim={config.ddim_steps}) -> {out_manifest_path}")
    return 0


def cmd_build_manifest(args) -> int:
    roots = []
    for spec in args.root:
        parts = spec.split(":", 3)
        if len(parts) != 4:
            raise UsageError(f"--root must be SRC:LABEL:SPLIT:PATH, got {spec!r}")
        roots.append(ScanRoot(path=parts[3], source=parts[0],
                              label=parts[1], split=parts[2]))
    run = resolve_config({"seed": args.seed}, args.config)
    manifest = build_manifest(roots, config_digest=run.digest)
    write_manifest(manifest, args.output)
    for (source, split), counts in sorted(manifest.counts().items()):
        print(f"{source}/{split}: {counts['real']} real / {counts['fake']} fake")
    print(f"wrote {len(manifest.entries)} clips -> {args.output}")
    return 0


def cmd_train(args) -> int:
    from .detector.train import TrainConfig, train_cnn_phase, train_lstm_phase

    run = resolve_config({"seed": args.seed}, args.config)
    manifest = read_manifest(args.manifest)
    config = TrainConfig(
        phase=args.phase,
        fusion_mode=FUSION_NAMES[args.fusion],
        input_resolution=(args.resolution, args.resolution),
        batch_size=args.batch_size,
        seq_len=args.seq_len,
        epochs=args.epochs,
        lr=args.lr,
        seed=run["seed"],
        log_path=str(Path(args.output).parent / "metrics.jsonl"),
    )
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    if args.phase == "cnn":
        ckpt = train_cnn_phase(manifest, config, args.output)
    else:
        if not args.backbone_checkpoint:
            raise UsageError("--phase lstm requires --backbone-checkpoint")
        _, ckpt = train_lstm_phase(manifest, args.backbone_checkpoint,
                                   config, args.output)
    print(f"phase-{args.phase} checkpoint -> {ckpt}")
    return 0


def cmd_eval(args) -> int:
    from .detector.train import load_detector
    from .metrics import evaluate_split, render_report

    run = resolve_config({"seed": args.seed}, args.config)
    manifest = read_manifest(args.manifest)
    model = load_detector(args.checkpoint)
    report = evaluate_split(model, manifest, args.split, head=args.head,
                            config_digest=run.digest)
    print(render_report(report))
    if args.output:
        Path(args.output).write_text(report.to_json())
        print(f"report JSON -> {args.output}")
    return 0


def cmd_sweep(args) -> int:
    from .detector.train import TrainConfig, load_detector
    from .sweep import step_sweep, write_sweep_csv

    manifest = read_manifest(args.manifest)
    predictor = get_predictor(args.predictor, args.checkpoint)
    diffusion = [int(s) for s in args.diffusion_steps.split(",") if s]
    ddim = [int(s) for s in args.ddim_steps.split(",") if s]
    model = None
    train_config = None
    if args.retrain:
        train_config = TrainConfig(
            fusion_mode=FUSION_NAMES[args.fusion],
            input_resolution=(args.resolution, args.resolution),
            batch_size=args.batch_size, seq_len=args.seq_len,
            epochs=args.epochs, seed=args.seed or 0,
        )
    else:
        if not args.detector_checkpoint:
            raise UsageError("no-retrain sweep requires --detector-checkpoint")
        model = load_detector(args.detector_checkpoint)
    out_dir = Path(args.output).with_suffix("")
    grid = step_sweep(manifest, predictor, diffusion, ddim, out_dir,
                      eval_split=args.split, retrain=args.retrain,
                      train_config=train_config, model=model,
                      workers=args.workers)
    write_sweep_csv(grid, args.output)
    failures = sum(1 for c in grid.cells if c.error)
    print(f"{len(grid.cells)} cells ({failures} failed) -> {args.output}")
    return 0


def cmd_toy(args) -> int:
    from .schedule import default_schedule
    from .toy import (ToyDistribution, ToyPredictor, ToyTrainBudget,
                      make_separable_dataset, make_temporal_dataset,
                      make_toy_clips, train_toy_predictor)

    if args.toy_command == "train-predictor":
        schedule = default_schedule(args.diffusion_steps)
        budget = ToyTrainBudget(steps=args.steps, seed=args.seed or 0)
        predictor = train_toy_predictor(ToyDistribution(seed=args.seed or 0),
                                        schedule, budget)
        predictor.save(args.output)
        print(f"toy predictor (held-out loss {predictor.val_loss:.4f}, "
              f"from {predictor.initial_val_loss:.4f}) -> {args.output}")
        return 0

    seed = args.seed or 0
    if args.kind == "separable":
        manifest = make_separable_dataset(args.output, n_clips=args.n_clips,
                                          clip_length=args.clip_length, seed=seed)
    elif args.kind == "temporal":
        manifest = make_temporal_dataset(args.output, n_clips=args.n_clips,
                                         clip_length=args.clip_length, seed=seed)
    else:
        if not args.checkpoint:
            raise UsageError("toy generate --kind clips requires --checkpoint")
        predictor = ToyPredictor.load(args.checkpoint)
        schedule = default_schedule(args.diffusion_steps)
        config = SamplerConfig(ddim_steps=args.ddim_steps, eta=0.0)
        records = make_toy_clips(ToyDistribution(seed=seed), predictor,
                                 args.n_clips, args.output, schedule, config,
                                 clip_length=args.clip_length,
                                 split=args.split, seed=seed)
        manifest = DatasetManifest(records, config_digest=config_digest(
            {"kind": "clips", "n_clips": args.n_clips, "seed": seed}))
    write_manifest(manifest, args.manifest)
    print(f"{len(manifest.entries)} toy clips -> {args.manifest}")
    return 0


_COMMANDS = {
    "extract-dire": cmd_extract_dire,
    "build-manifest": cmd_build_manifest,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "toy": cmd_toy,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DividError as e:
        kind = {2: "usage error", 3: "data error", 4: "numeric failure"}.get(
            e.exit_code, "error")
        print(f"divid: {kind}: {e}", file=sys.stderr)
        return e.exit_code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()

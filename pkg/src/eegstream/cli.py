"""Command-line interface: synth / train / finetune / eval / inspect."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .adapt import AdaptPolicy
from .align import batch_state
from .harness import (
    align_per_group,
    load_dataset,
    mean_curve,
    read_trial_file,
    read_trial_header,
    replay,
    save_dataset,
    split_cross_subject,
    write_curve_csv,
)
from .net import BlockSpec, NetworkSpec, load_weights, save_weights
from .signals import SynthConfig, generate
from .train import TrainConfig, fine_tune, train

DATA_DIR_ENV = "EEGSTREAM_DATA_DIR"


def _data_source(value: str | None) -> str:
    if value:
        return value
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return env
    raise ValueError(f"no data location given (use --data or set {DATA_DIR_ENV})")


def _parse_blocks(blocks: str, kernel: int, pool: int) -> tuple[BlockSpec, ...]:
    return tuple(BlockSpec(int(c), kernel, pool) for c in blocks.split(","))


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--bn-momentum", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        bn_momentum=args.bn_momentum,
        seed=args.seed,
        fine_tune_lr_scale=getattr(args, "lr_scale", 0.1),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegstream",
        description="Streaming adaptive EEG trial classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dataset of trial files")
    synth.add_argument("--out", required=True)
    synth.add_argument("--subjects", type=int, default=10)
    synth.add_argument("--sessions", type=int, default=2)
    synth.add_argument("--trials", type=int, default=60)
    synth.add_argument("--classes", type=int, default=2)
    synth.add_argument("--channels", type=int, default=8)
    synth.add_argument("--samples", type=int, default=256)
    synth.add_argument("--fs", type=float, default=128.0)
    synth.add_argument("--mixing", type=float, default=0.4)
    synth.add_argument("--gain-drift", type=float, default=0.15)
    synth.add_argument("--noise", type=float, default=0.5)
    synth.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train a backbone on trial files")
    tr.add_argument("--data", help=f"directory of .eegt files (default ${DATA_DIR_ENV})")
    tr.add_argument("--out", required=True, help="output weight file")
    tr.add_argument("--holdout", type=int, default=None, help="subject to exclude")
    tr.add_argument("--blocks", default="16,32,64", help="conv channels per block")
    tr.add_argument("--kernel", type=int, default=7)
    tr.add_argument("--pool", type=int, default=2)
    tr.add_argument("--bn-eps", type=float, default=1e-5)
    _add_train_flags(tr)

    ft = sub.add_parser("finetune", help="fine-tune weights on calibration sessions")
    ft.add_argument("--weights", required=True)
    ft.add_argument("--data", help="calibration session files or directory")
    ft.add_argument("--out", required=True)
    ft.add_argument("--lr-scale", type=float, default=0.1, dest="lr_scale")
    _add_train_flags(ft)

    ev = sub.add_parser("eval", help="replay sessions under a policy")
    ev.add_argument("--weights", required=True)
    ev.add_argument("--data", nargs="+", help="session files (or a directory)")
    ev.add_argument("--mode", choices=("online", "adaptive", "offline"), default="adaptive")
    ev.add_argument("--buffer", action="store_true", help="use a warm-up buffer")
    ev.add_argument("--buffer-size", type=int, default=40)
    ev.add_argument("--warmup", type=int, default=10)
    ev.add_argument("--buffer-source", default=None,
                    help="directory or files supplying buffer trials")
    ev.add_argument("--soft-kmeans", action="store_true")
    ev.add_argument("--shuffle", action="store_true")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--eps-align", type=float, default=None)
    ev.add_argument("--report", default=None, help="write a JSON report here")
    ev.add_argument("--curve", default=None, help="write the mean cumulative-accuracy CSV here")

    ins = sub.add_parser("inspect", help="print a trial-file header")
    ins.add_argument("file")
    return parser


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        num_subjects=args.subjects,
        sessions_per_subject=args.sessions,
        trials_per_session=args.trials,
        num_classes=args.classes,
        channels=args.channels,
        samples=args.samples,
        fs=args.fs,
        subject_mixing_scale=args.mixing,
        subject_gain_drift=args.gain_drift,
        noise_std=args.noise,
        seed=args.seed,
    )
    paths = save_dataset(args.out, generate(cfg), preprocessing={"synthetic_seed": args.seed})
    print(f"wrote {len(paths)} trial files to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(_data_source(args.data))
    if args.holdout is not None:
        dataset, _ = split_cross_subject(dataset, args.holdout)
    aligned = align_per_group(dataset)
    channels = aligned.trials[0].channels
    spec = NetworkSpec(
        in_channels=channels,
        num_classes=aligned.num_classes,
        blocks=_parse_blocks(args.blocks, args.kernel, args.pool),
        bn_eps=args.bn_eps,
    )
    losses: list[float] = []
    weights = train(spec, args.seed, aligned, _train_config(args), loss_log=losses)
    save_weights(args.out, spec, weights)
    print(
        f"trained on {len(aligned)} trials from {len(aligned.subjects())} subjects; "
        f"final batch loss {losses[-1]:.4f}; weights -> {args.out}"
    )
    return 0


def _cmd_finetune(args) -> int:
    spec, weights = load_weights(args.weights)
    source = _data_source(args.data)
    calibration = load_dataset(source if Path(source).is_dir() else [source])
    aligned = align_per_group(calibration)
    tuned = fine_tune(spec, weights, aligned, _train_config(args))
    # the calibration sessions also provide the frozen whitener that strict
    # online evaluation applies to incoming raw trials
    whitener = batch_state(calibration.trials).whitener()
    tuned = tuned.with_calib_whitener(whitener)
    save_weights(args.out, spec, tuned)
    print(f"fine-tuned on {len(aligned)} calibration trials; weights -> {args.out}")
    return 0


def _session_files(args) -> list[Path]:
    entries = args.data or [_data_source(None)]
    files: list[Path] = []
    for entry in entries:
        path = Path(entry)
        if path.is_dir():
            files.extend(sorted(path.glob("*.eegt")))
        else:
            files.append(path)
    if not files:
        raise ValueError("no session files to evaluate")
    return files


def _cmd_eval(args) -> int:
    spec, weights = load_weights(args.weights)
    policy = AdaptPolicy(
        mode=args.mode,
        use_buffer=args.buffer,
        buffer_size=args.buffer_size,
        warmup_trials=args.warmup,
        use_soft_kmeans=args.soft_kmeans,
        eps_align=args.eps_align,
    )
    buffer_pool = None
    if args.buffer:
        if not args.buffer_source:
            raise ValueError("--buffer requires --buffer-source")
        buffer_pool = load_dataset(
            args.buffer_source
            if Path(args.buffer_source).is_dir()
            else [args.buffer_source]
        ).trials

    reports = []
    for path in _session_files(args):
        _, session = read_trial_file(path)
        reports.append(
            replay(
                spec,
                weights,
                session,
                policy,
                shuffle=args.shuffle,
                seed=args.seed,
                buffer_pool=buffer_pool,
            )
        )

    aggregate = mean_curve(reports)
    summary = {
        "mean_final_accuracy": float(np.mean([r.final_accuracy for r in reports])),
        "std_final_accuracy": float(np.std([r.final_accuracy for r in reports])),
        "sessions": [r.to_dict() for r in reports],
        "mean_curve": [float(v) for v in aggregate],
    }
    if args.report:
        Path(args.report).write_text(json.dumps(summary, indent=2, sort_keys=True))
    if args.curve:
        write_curve_csv(args.curve, aggregate)
    for r in reports:
        print(
            f"subject {r.subject_id} session {r.session_id} [{r.mode}]: "
            f"final accuracy {r.final_accuracy:.4f}"
        )
    print(f"mean final accuracy: {summary['mean_final_accuracy']:.4f}")
    return 0


def _cmd_inspect(args) -> int:
    header = read_trial_header(args.file)
    print(json.dumps(header, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures exit 1; argparse exits 2 itself
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

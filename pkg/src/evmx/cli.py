"""Command-line interface: ingest, frames, synth, train/eval for both models.

Every command is deterministic given --seed: all randomness flows through
seeded generators, and log/report lines carry no timestamps, so identical
invocations write identical bytes.  Exit codes: 0 success, 1 validation error
(bad input data or flags), 2 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import torch

from . import __version__
from .errors import EmptyStream, EvmxError, InvalidSpec
from .events import (
    DAVIS346,
    EVK4,
    SensorGeometry,
    load_evm,
    parse_csv,
    save_evm,
)
from .representation import CropSpec, build_sequence, crop_resize, save_evf
from .dataset import (
    SyntheticSpec,
    TAXONOMY,
    load_inputs,
    load_manifest,
    load_pairs,
    split_loocv,
    write_synthetic_dataset,
)
from .metrics import evaluate_pairs, render_jsonl, render_text
from .snn import (
    SpikingNetwork,
    TrainConfig,
    build_network_spec,
    evaluate,
    load_snn,
    save_snn,
    train,
)
from .cvae import (
    CVAE,
    CVAEConfig,
    CVAETrainConfig,
    evaluate_cvae,
    load_cvae,
    save_cvae,
    train_cvae,
)

_GEOMETRIES = {"davis346": DAVIS346, "evk4": EVK4}


def _parse_geometry(text: str) -> SensorGeometry:
    if text in _GEOMETRIES:
        return _GEOMETRIES[text]
    try:
        w, h = text.lower().split("x")
        return SensorGeometry(int(w), int(h))
    except (ValueError, EvmxError):
        raise InvalidSpec(
            f"geometry must be WxH or one of {sorted(_GEOMETRIES)}, got {text!r}"
        ) from None


def _parse_bbox(text: str) -> CropSpec:
    parts = text.split(",")
    if len(parts) != 4:
        raise InvalidSpec(f"bbox needs x,y,w,h, got {text!r}")
    try:
        return CropSpec(*(int(p) for p in parts))
    except ValueError:
        raise InvalidSpec(f"bbox fields must be integers, got {text!r}") from None


def _write_log(path, lines) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")


def _add_path(e: EvmxError, path: str) -> EvmxError:
    # prefix the offending file, keeping the exception type for exit-code mapping
    e.args = (f"{path}: {e}",)
    return e


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    geometry = _parse_geometry(args.geometry)
    total = 0
    seen = set()
    outputs = []
    for in_path in args.inputs:
        stem = os.path.splitext(os.path.basename(in_path))[0]
        if stem in seen:
            raise InvalidSpec(f"duplicate output name {stem}.evm from {in_path}")
        seen.add(stem)
        try:
            if in_path.endswith(".csv"):
                with open(in_path, "r", encoding="utf-8") as f:
                    stream = parse_csv(f.read(), geometry, sort=args.sort)
            else:
                stream = load_evm(in_path, sort=args.sort)
        except EvmxError as e:
            raise _add_path(e, in_path) from None
        out_path = os.path.join(args.out_dir, stem + ".evm")
        save_evm(out_path, stream)
        print(f"{out_path}: {len(stream)} events")
        outputs.append(out_path)
        total += len(stream)
    print(f"ingested files={len(outputs)} events={total}")
    return 0


def cmd_frames(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    bbox = _parse_bbox(args.bbox) if args.bbox else None
    written = 0
    total_events = 0
    for in_path in args.inputs:
        stem = os.path.splitext(os.path.basename(in_path))[0]
        try:
            stream = load_evm(in_path)
            seq = build_sequence(stream, args.slice_us)
        except EmptyStream as e:
            print(f"{in_path}: error EmptyStream: {e}")
            continue
        except EvmxError as e:
            raise _add_path(e, in_path) from None
        counts_out = int(seq.data.sum())
        if bbox is not None:
            seq = crop_resize(seq, bbox, (args.crop, args.crop))
        out_path = os.path.join(args.out_dir, stem + ".evf")
        save_evf(out_path, seq)
        conserved = "yes" if counts_out == len(stream) else "no"
        print(f"{out_path}: frames={len(seq)} events_in={len(stream)} "
              f"counts_out={counts_out} conserved={conserved}")
        written += 1
        total_events += len(stream)
    print(f"frames files={written} events={total_events}")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes,
        clips_per_class=args.clips_per_class,
        n_subjects=args.subjects,
        geometry=_parse_geometry(args.geometry),
        duration_us=args.duration_us,
        slice_us=args.slice_us,
        event_rate=args.event_rate,
        noise_rate=args.noise_rate,
        seed=args.seed,
    )
    manifest_path, pairs_path = write_synthetic_dataset(args.out, spec)
    n_events = 0
    for rec in load_manifest(manifest_path):
        n_events += len(load_evm(rec.clip_path))
    with open(pairs_path, "r", encoding="utf-8") as f:
        n_pairs = sum(1 for line in f if line.strip())
    print(f"wrote {manifest_path}")
    print(f"wrote {pairs_path}")
    print(f"clips={spec.n_clips} pairs={n_pairs} events={n_events}")
    return 0


def _class_mapping(records, head: str) -> list[int]:
    """Action-unit numbers backing each network output, in taxonomy order."""
    if head == "taxonomy":
        return [lbl.au_number for lbl in TAXONOMY]
    present = sorted({r.label.class_index for r in records})
    return [TAXONOMY[i].au_number for i in present]


def _relabel(clips, records, class_aus: list[int]) -> None:
    lookup = {au: i for i, au in enumerate(class_aus)}
    for i, (clip, rec) in enumerate(zip(clips, records)):
        au = rec.label.au_number
        if au not in lookup:
            raise InvalidSpec(f"clip {i}: AU {au} not among the model's classes {class_aus}")
        object.__setattr__(clip, "label", lookup[au])


def _load_clips(manifest_path, args, class_aus=None):
    records = load_manifest(manifest_path)
    clips = load_inputs(
        records,
        slice_us=args.slice_us,
        out_size=(args.crop, args.crop),
        encoding=args.encoding,
    )
    return records, clips


def cmd_train_snn(args) -> int:
    records, clips = _load_clips(args.manifest, args)
    class_aus = _class_mapping(records, args.head)
    _relabel(clips, records, class_aus)
    n_classes = len(class_aus)

    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        dropout_rate=args.dropout,
        seed=args.seed,
        max_t=args.max_t,
        early_stop_acc=args.early_stop_acc,
    )
    meta = {
        "class_aus": class_aus,
        "slice_us": args.slice_us,
        "crop": args.crop,
        "encoding": args.encoding,
    }

    def make_net() -> SpikingNetwork:
        spec = build_network_spec(
            n_classes=n_classes,
            input_hw=(args.crop, args.crop),
            dropout_rate=args.dropout,
            seed=args.seed,
        )
        return SpikingNetwork(spec)

    log_lines: list[str] = []

    def log(line: str) -> None:
        log_lines.append(line)
        print(line)

    if args.loocv:
        plan = split_loocv(records)
        accs, top3s = [], []
        for i, fold in enumerate(plan.folds):
            train_clips = [clips[j] for j in fold.train_indices]
            test_clips = [clips[j] for j in fold.test_indices]
            log(f"fold={i} subject={fold.test_subject} "
                f"train={len(train_clips)} test={len(test_clips)}")
            net = make_net()
            result = train(net, train_clips, config, val_clips=test_clips, log_fn=log)
            ev = evaluate(net, test_clips, batch_size=config.batch_size)
            log(f"fold={i} accuracy={ev.accuracy:.6f} top3={ev.top3_accuracy:.6f}")
            accs.append(ev.accuracy)
            top3s.append(ev.top3_accuracy)
            if args.out:
                save_snn(f"{args.out}.fold{i}", net, result.optimizer, meta)
        log(f"mean accuracy={np.mean(accs):.6f} top3={np.mean(top3s):.6f} "
            f"folds={len(plan.folds)}")
    else:
        val_clips = None
        if args.val_manifest:
            val_records, val_clips = _load_clips(args.val_manifest, args)
            _relabel(val_clips, val_records, class_aus)
        net = make_net()
        log(f"clips={len(clips)} classes={n_classes}")
        result = train(net, clips, config, val_clips=val_clips, log_fn=log)
        if not args.out:
            raise InvalidSpec("--out is required unless --loocv is given")
        save_snn(args.out, net, result.optimizer, meta)
        print(f"saved {args.out}")  # stdout only: the log stays path-free
    _write_log(args.log, log_lines)
    return 0


def cmd_eval_snn(args) -> int:
    net, _, meta = load_snn(args.model)
    slice_us = args.slice_us if args.slice_us else meta.get("slice_us", 33_000)
    crop = args.crop if args.crop else meta.get("crop", net.spec.input_height)
    encoding = args.encoding if args.encoding else meta.get("encoding", "raw")
    records = load_manifest(args.manifest)
    clips = load_inputs(records, slice_us=slice_us, out_size=(crop, crop),
                        encoding=encoding)
    class_aus = meta.get("class_aus", [lbl.au_number for lbl in TAXONOMY])
    _relabel(clips, records, class_aus)
    ev = evaluate(net, clips, batch_size=args.batch)
    lines = [
        f"n={ev.n_items}",
        f"accuracy={ev.accuracy:.6f}",
        f"top3_accuracy={ev.top3_accuracy:.6f}",
    ]
    for line in lines:
        print(line)
    if args.confusion_out:
        with open(args.confusion_out, "w", encoding="utf-8") as f:
            for row in ev.confusion:
                f.write(",".join(str(int(v)) for v in row) + "\n")
    _write_log(args.log, lines)
    return 0


def cmd_train_cvae(args) -> int:
    conditions, targets = load_pairs(args.pairs)
    side = conditions.shape[-1]
    if conditions.shape[-2] != side or targets.shape[-1] != side:
        raise InvalidSpec(f"paired frames must be square, got {conditions.shape[-2:]}")
    model = CVAE(CVAEConfig(latent_dim=args.latent, input_side=side,
                            kl_weight=args.kl_weight, seed=args.seed))
    config = CVAETrainConfig(learning_rate=args.lr, epochs=args.epochs,
                             batch_size=args.batch, seed=args.seed)
    log_lines: list[str] = []

    def log(line: str) -> None:
        log_lines.append(line)
        print(line)

    log(f"pairs={len(conditions)} side={side}")
    result = train_cvae(model, conditions, targets, config, log_fn=log)
    save_cvae(args.out, model, result.optimizer)
    print(f"saved {args.out}")  # stdout only: the log stays path-free
    _write_log(args.log, log_lines)
    return 0


def cmd_eval_cvae(args) -> int:
    conditions, targets = load_pairs(args.pairs)
    if args.self_check:
        report = evaluate_pairs(list(targets), list(targets))
    else:
        if not args.model:
            raise InvalidSpec("--model is required unless --self-check is given")
        model, _, _ = load_cvae(args.model)
        report = evaluate_cvae(model, conditions, targets, mode=args.mode)
    text = render_text(report)
    print(text)
    if args.jsonl:
        with open(args.jsonl, "w", encoding="utf-8") as f:
            f.write(render_jsonl(report) + "\n")
    _write_log(args.log, text.splitlines())
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(
        prog="evmx",
        description="Event-camera micro-expression toolkit: codecs, spiking "
                    "classifier, conditional reconstruction.",
        formatter_class=fmt,
    )
    p.add_argument("--version", action="version", version=f"evmx {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", formatter_class=fmt,
                        help="convert CSV event logs to EVM1 (or revalidate EVM1)")
    sp.add_argument("inputs", nargs="+", help="input .csv or .evm files")
    sp.add_argument("--out-dir", required=True, help="output directory for .evm files")
    sp.add_argument("--geometry", default="davis346",
                    help="sensor geometry WxH or preset (davis346, evk4); used for CSV")
    sp.add_argument("--sort", action="store_true",
                    help="repair out-of-order timestamps by stable sort")
    sp.set_defaults(fn=cmd_ingest)

    sp = sub.add_parser("frames", formatter_class=fmt,
                        help="build EVF1 two-channel count frames from EVM1 clips")
    sp.add_argument("inputs", nargs="+", help="input .evm files")
    sp.add_argument("--out-dir", required=True, help="output directory for .evf files")
    sp.add_argument("--slice-us", type=int, default=33_000, help="slice duration in microseconds")
    sp.add_argument("--bbox", default="", help="crop box x,y,w,h before resizing")
    sp.add_argument("--crop", type=int, default=64, help="output side after crop/resize")
    sp.set_defaults(fn=cmd_frames)

    sp = sub.add_parser("synth", formatter_class=fmt,
                        help="generate a seeded synthetic event dataset with paired frames")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--classes", type=int, default=4, help="number of motion classes (2..21)")
    sp.add_argument("--clips-per-class", type=int, default=25)
    sp.add_argument("--subjects", type=int, default=7)
    sp.add_argument("--geometry", default="64x64", help="sensor geometry WxH or preset")
    sp.add_argument("--duration-us", type=int, default=330_000, help="clip duration")
    sp.add_argument("--slice-us", type=int, default=33_000, help="paired-frame grid step")
    sp.add_argument("--event-rate", type=float, default=1.0,
                    help="events per pixel transition (rounded)")
    sp.add_argument("--noise-rate", type=float, default=0.0,
                    help="background noise, events per pixel per second")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_synth)

    def add_clip_flags(sp):
        sp.add_argument("--slice-us", type=int, default=33_000,
                        help="slice duration in microseconds")
        sp.add_argument("--crop", type=int, default=64, help="input side after crop/resize")
        sp.add_argument("--encoding", choices=("raw", "binary", "unit-max"), default="raw",
                        help="count encoding for network inputs")

    sp = sub.add_parser("train-snn", formatter_class=fmt,
                        help="train the spiking action-unit classifier")
    sp.add_argument("--manifest", required=True, help="clip manifest")
    sp.add_argument("--out", default="", help="checkpoint path (required without --loocv)")
    sp.add_argument("--val-manifest", default="", help="held-out manifest for per-epoch accuracy")
    sp.add_argument("--loocv", action="store_true",
                    help="leave-one-subject-out: train/eval one fold per subject")
    add_clip_flags(sp)
    sp.add_argument("--lr", type=float, default=1e-3, help="peak learning rate")
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--batch", type=int, default=8)
    sp.add_argument("--dropout", type=float, default=0.2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-t", type=int, default=None, help="cap on slices per clip")
    sp.add_argument("--early-stop-acc", type=float, default=None,
                    help="stop when held-out accuracy reaches this")
    sp.add_argument("--head", choices=("taxonomy", "present"), default="taxonomy",
                    help="output classes: all 21 action units, or only those in the manifest")
    sp.add_argument("--log", default="", help="also write log lines to this file")
    sp.set_defaults(fn=cmd_train_snn)

    sp = sub.add_parser("eval-snn", formatter_class=fmt,
                        help="evaluate a trained classifier on a manifest")
    sp.add_argument("--model", required=True, help="checkpoint from train-snn")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--slice-us", type=int, default=0,
                    help="override the slice duration stored in the checkpoint")
    sp.add_argument("--crop", type=int, default=0,
                    help="override the input side stored in the checkpoint")
    sp.add_argument("--encoding", choices=("", "raw", "binary", "unit-max"), default="",
                    help="override the encoding stored in the checkpoint")
    sp.add_argument("--batch", type=int, default=32)
    sp.add_argument("--confusion-out", default="", help="write the confusion matrix CSV here")
    sp.add_argument("--log", default="", help="also write report lines to this file")
    sp.set_defaults(fn=cmd_eval_snn)

    sp = sub.add_parser("train-cvae", formatter_class=fmt,
                        help="train the conditional reconstruction model on paired frames")
    sp.add_argument("--pairs", required=True, help="condition,target pair manifest")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--batch", type=int, default=16)
    sp.add_argument("--latent", type=int, default=32, help="latent dimensionality")
    sp.add_argument("--kl-weight", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--log", default="", help="also write log lines to this file")
    sp.set_defaults(fn=cmd_train_cvae)

    sp = sub.add_parser("eval-cvae", formatter_class=fmt,
                        help="score reconstructions with the six-metric report")
    sp.add_argument("--model", default="", help="checkpoint from train-cvae")
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--mode", choices=("mean", "sample"), default="mean")
    sp.add_argument("--self-check", action="store_true",
                    help="score targets against themselves instead of model output")
    sp.add_argument("--jsonl", default="", help="write the per-item report here")
    sp.add_argument("--log", default="", help="also write report lines to this file")
    sp.set_defaults(fn=cmd_eval_cvae)

    for name, cmd in sub.choices.items():
        cmd.add_argument("--threads", type=int,
                         default=int(os.environ.get("EVMX_THREADS", "1")),
                         help="torch CPU threads (env EVMX_THREADS)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.fn(args)
    except (EvmxError, OSError) as e:
        # OSError: unreadable/missing user-supplied paths, same contract as
        # domain errors
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

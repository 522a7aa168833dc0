"""Command line entry point: ``dancegen <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 state/compatibility error,
4 numeric failure.  ``DANCEGEN_WORKERS`` sets how many processes
``features`` fans out over (default 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, io
from .beats import evaluate_track
from .dsp import add_white_noise, feature_pipeline
from .exceptions import DanceGenError, InvalidInputError, ShapeError, StateError
from .model import ModelConfig
from .motion import normalize_motion
from .synth import PATTERNS, SynthSpec, gen_dataset

logger = logging.getLogger("dancegen")

WORKERS_ENV = "DANCEGEN_WORKERS"
EXIT_OK, EXIT_INPUT, EXIT_STATE, EXIT_NUMERIC = 0, 2, 3, 4

# flag name -> (section, field) for values a config file may also supply
_CONFIG_FLAGS = {
    "seed": ("training", "seed"), "epochs": ("training", "epochs"),
    "batch": ("training", "batch_size"), "seq_len": ("training", "seq_len"),
    "lr": ("training", "learning_rate"), "grad_noise": ("training", "grad_noise"),
    "lstm_width": ("model", "lstm_width"), "enc_out": ("model", "enc_out"),
    "feedback": ("model", "feedback"),
}


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidInputError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def _snr_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--snr expects comma-separated numbers, got {text!r}") from None


def _load_motion_normalized(path) -> np.ndarray:
    """Normalized frames: files with a scaler sidecar already are, others get max-abs scaling."""
    frames, scaler = io.read_motion(path)
    if scaler is None:
        frames, _ = normalize_motion(frames, motion_dim=None)
    return frames


# -- features ---------------------------------------------------------------

def _variant_name(snr) -> str:
    return "clean" if snr is None else f"snr{snr:g}"


def _features_one(job) -> list[str]:
    index, audio, out_dir, snrs, seed = job
    clip = io.read_wav(audio)
    written = []
    for k, snr in enumerate([None] + list(snrs)):
        variant = clip if snr is None else add_white_noise(clip, snr, np.random.default_rng([seed, index, k]))
        blocks, stats = feature_pipeline(variant)
        path = Path(out_dir) / f"{Path(audio).stem}.{_variant_name(snr)}.feat"
        io.write_features(path, blocks, stats, {"source": Path(audio).name, "snr_db": snr})
        written.append(str(path))
    return written


def cmd_features(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, a, str(out), args.snr, args.seed) for i, a in enumerate(args.audio)]
    n = min(_workers(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(n) as pool:
            results = list(pool.map(_features_one, jobs))
    else:
        results = [_features_one(j) for j in jobs]
    for paths in results:
        for p in paths:
            print(p)
    return EXIT_OK


# -- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.tracks < 1:
        raise InvalidInputError("--tracks must be >= 1")
    bpms = args.bpm or [90.0]
    specs = [SynthSpec(bpm=bpms[i % len(bpms)], duration=args.duration, step_pattern=args.pattern,
                       noise_level=args.noise, seed=args.seed + i) for i in range(args.tracks)]
    manifest = gen_dataset(specs, args.out_dir, snr_db=args.snr)
    print(manifest)
    return EXIT_OK


# -- train ------------------------------------------------------------------

def effective_config(args) -> tuple[ModelConfig, "TrainingConfig"]:
    """Merge defaults, then the ``--config`` JSON file, then explicit flags."""
    from .training import TrainingConfig

    merged = {"model": {}, "training": {}}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot read config {args.config}: {exc}") from exc
        for section in merged:
            merged[section].update(data.get(section, {}))
        unknown = set(data) - set(merged)
        if unknown:
            raise InvalidInputError(f"unknown config sections: {sorted(unknown)}")
    for flag, (section, key) in _CONFIG_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            merged[section][key] = value
    if args.no_contrastive:
        merged["training"]["use_contrastive"] = False
    allowed = {"model": {f.name for f in fields(ModelConfig)},
               "training": {f.name for f in fields(TrainingConfig)}}
    for section, keys in merged.items():
        bad = set(keys) - allowed[section]
        if bad:
            raise InvalidInputError(f"unknown {section} config keys: {sorted(bad)}")
    return ModelConfig(**merged["model"]), TrainingConfig(**merged["training"])


def _load_tracks(manifest: dict, seed: int):
    from .training import Track

    tracks, scales = [], []
    snrs = manifest.get("snr_db", [])
    for i, entry in enumerate(manifest["tracks"]):
        clip = io.read_wav(entry["audio"])
        frames, scaler = io.read_motion(entry["motion"])
        if scaler is None:
            frames, scaler = normalize_motion(frames, motion_dim=None)
        scales.append(scaler)
        for k, snr in enumerate([None] + list(snrs)):
            variant = clip if snr is None else add_white_noise(clip, snr, np.random.default_rng([seed, i, k]))
            blocks, _ = feature_pipeline(variant)
            if abs(blocks.shape[0] - frames.shape[0]) > 1:
                logger.warning("%s: %d feature blocks vs %d motion frames; truncating to the shorter",
                               entry["name"], blocks.shape[0], frames.shape[0])
            tracks.append(Track(blocks, frames, name=f"{entry['name']}.{_variant_name(snr)}"))
    return tracks, np.max(np.stack(scales), axis=0)


def cmd_train(args) -> int:
    from .model import DanceNet
    from .training import Trainer, load_checkpoint, save_checkpoint

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = io.read_manifest(args.manifest)
    model_cfg, train_cfg = effective_config(args)
    if args.resume:
        try:
            trainer = load_checkpoint(args.resume, model_cfg)
        except ShapeError as exc:
            raise StateError(str(exc)) from exc
        # weights, optimizer moments and RNG come from the checkpoint; the
        # effective training config (e.g. a raised --epochs) takes over
        trainer.cfg = trainer.opt.cfg = train_cfg
        remaining = max(0, train_cfg.epochs - trainer.epoch)
    else:
        trainer = Trainer(DanceNet(model_cfg, seed=train_cfg.seed, dtype=np.dtype(args.dtype)), train_cfg)
        remaining = train_cfg.epochs
    tracks, scale = _load_tracks(manifest, train_cfg.seed)
    if tracks[0].motion.shape[1] != model_cfg.motion_dim:
        raise StateError(f"motion files have {tracks[0].motion.shape[1]} components, "
                         f"model expects {model_cfg.motion_dim}")
    trainer.extra = {"motion_scale": [float(s) for s in scale], "manifest": str(Path(args.manifest))}
    effective = {"model": model_cfg.to_dict(), "training": train_cfg.to_dict(), "dtype": args.dtype,
                 "manifest": str(args.manifest), "snr_db": manifest.get("snr_db", []),
                 "version": __version__}
    io.write_json(out / "config.json", effective)
    print(json.dumps(effective, sort_keys=True))
    log_file = out / "train_log.jsonl"
    for _ in range(remaining):
        report = trainer.train_epoch(tracks)
        with open(log_file, "a") as fh:
            fh.write(report.to_json() + "\n")
        print(report.to_json(), flush=True)
        save_checkpoint(out / f"epoch_{report.epoch:03d}.ckpt", trainer)
    return EXIT_OK


# -- generate ---------------------------------------------------------------

def _blocks_for(path) -> np.ndarray:
    p = Path(path)
    if p.suffix.lower() == ".wav":
        blocks, _ = feature_pipeline(io.read_wav(p))
        return blocks
    blocks, _, _ = io.read_features(p)
    return blocks


def cmd_generate(args) -> int:
    from .training import load_checkpoint

    trainer = load_checkpoint(args.checkpoint)
    net = trainer.net
    cfg = net.config
    blocks = _blocks_for(args.input)
    if blocks.shape[1:] != (cfg.n_bins, cfg.n_frames):
        raise StateError(f"checkpoint expects {cfg.n_bins}x{cfg.n_frames} blocks, "
                         f"input has {blocks.shape[1]}x{blocks.shape[2]}")
    gen = net.generate(blocks)
    motion = np.clip(gen.motion.astype(np.float64), -1.0, 1.0)
    scale = trainer.extra.get("motion_scale")
    if scale is not None and len(scale) != cfg.motion_dim:
        raise StateError("stored motion scale does not match the model's motion dimension")
    io.write_motion(args.output, motion, scaler=scale)
    report = dict(gen.latency_report, checkpoint=str(args.checkpoint), input=str(args.input))
    io.write_json(Path(str(args.output) + ".latency.json"), report)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


# -- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    if not Path(args.beats).exists():
        raise InvalidInputError(f"beat annotation {args.beats} not found")
    beats = io.read_beats(args.beats)
    motion = _load_motion_normalized(args.motion)
    reference = _load_motion_normalized(args.reference) if args.reference else None
    metrics = evaluate_track(motion, beats, reference)
    if args.output:
        io.write_json(args.output, metrics)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


# -- gradcheck --------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .selfcheck import run_all

    reports = run_all(tolerance=args.tolerance, seed=args.seed)
    for r in reports:
        print(r.line())
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(reports)} gradient checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dancegen", description="Music-to-dance sequence model tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("features", help="extract normalized power-spectrum blocks from WAV files")
    f.add_argument("audio", nargs="+", help="16 kHz mono WAV file(s)")
    f.add_argument("-o", "--out-dir", required=True)
    f.add_argument("--snr", type=_snr_list, default=[], help="extra noisy variants, e.g. 0,10")
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_features)

    s = sub.add_parser("synth", help="write a synthetic music/dance dataset and manifest")
    s.add_argument("-o", "--out-dir", required=True)
    s.add_argument("--tracks", type=int, default=2)
    s.add_argument("--bpm", type=float, nargs="+", help="tempo per track (cycled)")
    s.add_argument("--duration", type=float, default=180.0)
    s.add_argument("--pattern", choices=PATTERNS, default="lateral_bounce")
    s.add_argument("--noise", type=float, default=0.01, help="motion jitter SD (normalized units)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--snr", type=_snr_list, default=[], help="SNR variants recorded in the manifest")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train from a manifest, one checkpoint per epoch")
    t.add_argument("manifest")
    t.add_argument("-o", "--out-dir", required=True)
    t.add_argument("--config", help="JSON file with 'model' and 'training' sections")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--seq-len", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--grad-noise", type=float)
    t.add_argument("--lstm-width", type=int)
    t.add_argument("--enc-out", type=int)
    t.add_argument("--feedback", choices=("auto", "teacher", "none"))
    t.add_argument("--no-contrastive", action="store_true", help="MSE only (the S2S baseline)")
    t.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    t.add_argument("--resume", help="continue from this checkpoint")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="generate motion for a WAV or feature file")
    g.add_argument("checkpoint")
    g.add_argument("input", help="WAV or .feat file")
    g.add_argument("-o", "--output", required=True, help="motion CSV to write")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eval", help="motion-beat F-score and optional cross entropy")
    e.add_argument("motion")
    e.add_argument("beats")
    e.add_argument("--reference", help="reference motion for cross entropy")
    e.add_argument("-o", "--output", help="write metrics JSON here")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of every layer and the full graph")
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DanceGenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

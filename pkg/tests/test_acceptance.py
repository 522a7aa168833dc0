"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line.  Criteria
6 to 9 share the models trained once by the ``trained`` fixture (about
half an hour on one CPU core).
"""
import math
import statistics
import time

import numpy as np
import pytest

from oracles import literal_weak_labels, optimal_matching

from dancegen.beats import evaluate_track, extract_motion_beats, match_beats
from dancegen.dsp import SAMPLE_RATE, AudioClip, feature_pipeline, mix_noise, raw_power_blocks
from dancegen.model import DanceNet, ModelConfig, contrastive_loss, mse_loss
from dancegen.motion import normalize_motion, weak_labels
from dancegen.selfcheck import run_all
from dancegen.synth import SynthSpec, gen_track
from dancegen.training import Track, Trainer, TrainingConfig, save_checkpoint

SEEDS = (0, 1, 2)
DESK_MODEL = dict(lstm_width=128, enc_out=32)
DESK_TRAINING = dict(batch_size=4, seq_len=150, epochs=10)
BOUNCE_TRACKS = (SynthSpec(bpm=85, duration=180, seed=0), SynthSpec(bpm=95, duration=180, seed=1))


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return report


# -- 1 -----------------------------------------------------------------------

def test_1_gradient_correctness(verdict):
    t0 = time.perf_counter()
    reports = run_all(tolerance=1e-4)
    elapsed = time.perf_counter() - t0
    worst = max(r.max_error for r in reports)
    ok = all(r.passed for r in reports) and worst <= 1e-4 and elapsed < 60
    verdict(1, ok, f"{len(reports)} checks, max rel error {worst:.2e}, {elapsed:.1f} s")


# -- 2 -----------------------------------------------------------------------

def test_2_loss_unit_values(verdict):
    a, b = np.zeros(3), np.array([0.5, 0.0, 0.0])   # squared distance 0.25
    cases = [
        (contrastive_loss(a, b, 0), 0.5 * (1 - 0.25) ** 2),   # 0.28125
        (contrastive_loss(a, b, 1), 0.5 * 0.25 ** 2),
        (contrastive_loss(a, np.array([1.5, 0, 0]), 0), 0.0),
        (mse_loss(np.full((2, 71), 0.5), np.zeros((2, 71))), 0.25),
        (mse_loss(np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]])), 2.5),
    ]
    err = max(abs(got - want) for got, want in cases)
    verdict(2, err <= 1e-9 and abs(cases[0][0] - 0.28125) <= 1e-9, f"max deviation {err:.1e}")


# -- 3 -----------------------------------------------------------------------

def test_3_beat_matcher_equals_optimum(verdict):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        pred = np.sort(rng.uniform(0, 1.5, rng.integers(0, 11)))
        ref = np.sort(rng.uniform(0, 1.5, rng.integers(0, 11)))
        r = match_beats(pred, ref)
        if (r.true_positives, r.false_positives, r.false_negatives) != optimal_matching(pred, ref, 0.07):
            mismatches += 1
    verdict(3, mismatches == 0, f"{mismatches} / 1000 instances differ from the exhaustive optimum")


# -- 4 -----------------------------------------------------------------------

def test_4_weak_labels_equal_literal(verdict):
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(3, 40))
        frames = rng.normal(0, rng.uniform(0.1, 2), (n, 71))
        if list(weak_labels(frames)) != literal_weak_labels(frames, sd=statistics.pstdev):
            mismatches += 1
    verdict(4, mismatches == 0, f"{mismatches} / 1000 sequences differ from the literal implementation")


# -- 5 -----------------------------------------------------------------------

def test_5_synthetic_dancer_baseline(verdict):
    scores = []
    for spec in (SynthSpec(bpm=85, duration=60, noise_level=0.0, seed=0),
                 SynthSpec(bpm=95, duration=60, noise_level=0.0, seed=1),
                 SynthSpec(bpm=120, duration=60, noise_level=0.0, step_pattern="mixed", seed=2),
                 SynthSpec(bpm=70, duration=60, noise_level=0.0, step_pattern="front_back", seed=3)):
        _, motion, beats = gen_track(spec)
        scores.append(match_beats(extract_motion_beats(motion), beats, tolerance=0.07).f_score)
    verdict(5, min(scores) >= 0.95, "F-scores " + ", ".join(f"{s:.3f}" for s in scores))


# -- shared training for 6 to 9 ---------------------------------------------

def _bounce_data():
    tracks, beats = [], []
    for i, spec in enumerate(BOUNCE_TRACKS):
        clip, motion, b = gen_track(spec)
        blocks, _ = feature_pipeline(clip)
        frames, _ = normalize_motion(motion)
        tracks.append(Track(blocks, frames, name=f"bounce{i}"))
        beats.append(b)
    return tracks, beats


def _train(tracks, seed, use_contrastive, stop_after=None, first_ckpt=None):
    net = DanceNet(ModelConfig(**DESK_MODEL), seed=seed, dtype=np.float32)
    cfg = TrainingConfig(**DESK_TRAINING, seed=seed, use_contrastive=use_contrastive)
    trainer = Trainer(net, cfg)
    for e in range(cfg.epochs if stop_after is None else stop_after):
        trainer.train_epoch(tracks)
        if e == 0 and first_ckpt is not None:
            save_checkpoint(first_ckpt, trainer)
    return trainer


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tracks, beats = _bounce_data()
    first_ckpt = tmp_path_factory.mktemp("accept") / "s2smc_seed0_epoch1.ckpt"
    t0 = time.perf_counter()
    models, results = {}, {}
    for seed in SEEDS:
        for variant, uc in (("S2S", False), ("S2SMC", True)):
            trainer = _train(tracks, seed, uc, first_ckpt=first_ckpt if (seed, uc) == (0, True) else None)
            models[variant, seed] = trainer
    train_time = time.perf_counter() - t0
    latencies = []
    for key, trainer in models.items():
        reports = []
        for tr, b in zip(tracks, beats):
            gen = trainer.net.generate(tr.blocks)
            latencies.append(gen.latency_report["mean_ms"])
            reports.append(evaluate_track(gen.motion.astype(np.float64), b, reference=tr.motion))
        tp = sum(r["true_positives"] for r in reports)
        fp = sum(r["false_positives"] for r in reports)
        fn = sum(r["false_negatives"] for r in reports)
        f = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        results[key] = (f, float(np.mean([r["cross_entropy"] for r in reports])))
    return dict(tracks=tracks, beats=beats, models=models, results=results, train_time=train_time,
                latencies=latencies, first_ckpt=first_ckpt)


@pytest.mark.slow
def test_6_s2smc_not_worse_than_s2s(trained, verdict):
    res = trained["results"]
    f = {v: statistics.median(res[v, s][0] for s in SEEDS) for v in ("S2S", "S2SMC")}
    ce = {v: statistics.median(res[v, s][1] for s in SEEDS) for v in ("S2S", "S2SMC")}
    minutes = trained["train_time"] / 60
    per_seed = "; ".join(f"seed {s}: S2S F {res['S2S', s][0]:.3f} CE {res['S2S', s][1]:.3f}, "
                         f"S2SMC F {res['S2SMC', s][0]:.3f} CE {res['S2SMC', s][1]:.3f}" for s in SEEDS)
    ok = f["S2SMC"] >= f["S2S"] and ce["S2SMC"] <= ce["S2S"]
    verdict(6, ok, f"median F S2SMC {f['S2SMC']:.3f} vs S2S {f['S2S']:.3f}, median CE S2SMC "
                   f"{ce['S2SMC']:.3f} vs S2S {ce['S2S']:.3f}; training {minutes:.1f} min ({per_seed})")


@pytest.mark.slow
def test_7_free_run_stays_bounded(trained, verdict):
    worst, finite = 0.0, True
    blocks = trained["tracks"][0].blocks[:1000]
    for key, trainer in trained["models"].items():
        m = trainer.net.generate(blocks, record_latency=False).motion
        finite &= bool(np.all(np.isfinite(m)))
        worst = max(worst, float(np.max(np.abs(m))))
    verdict(7, finite and worst <= 1.5, f"1000 steps x {len(trained['models'])} models, max |component| "
                                        f"{worst:.3f}, finite {finite}")


@pytest.mark.slow
def test_8_determinism(trained, tmp_path, verdict):
    tracks = trained["tracks"]
    rerun = _train(tracks, 0, True, stop_after=1)
    path = save_checkpoint(tmp_path / "rerun.ckpt", rerun)
    same_ckpt = path.read_bytes() == trained["first_ckpt"].read_bytes()
    net = trained["models"]["S2SMC", 0].net
    a = net.generate(tracks[1].blocks[:300], record_latency=False).motion
    b = net.generate(tracks[1].blocks[:300], record_latency=False).motion
    same_gen = np.array_equal(a, b)
    verdict(8, same_ckpt and same_gen, f"checkpoint bytes identical {same_ckpt}, generation identical {same_gen}")


@pytest.mark.slow
def test_9_latency(trained, verdict):
    mean_ms = float(np.mean(trained["latencies"]))
    verdict(9, mean_ms <= 50, f"mean per-frame latency {mean_ms:.2f} ms at width "
                              f"{DESK_MODEL['lstm_width']} (float32)")


# -- 10 ----------------------------------------------------------------------

def test_10_dsp_correctness(verdict):
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    raw = raw_power_blocks(AudioClip(np.sin(2 * np.pi * 1000 * t)))
    peak_ok = bool(np.all(np.argmax(raw, axis=1) == 10))
    rng = np.random.default_rng(5)
    worst = 0.0
    for snr in (-5.0, 0.0, 5.0, 10.0, 23.7):
        clip = AudioClip(rng.standard_normal(16000) * rng.uniform(0.1, 2))
        noise = AudioClip(rng.uniform(-1, 1, 16000))
        mixed = mix_noise(clip, noise, snr)
        added = mixed.samples - clip.samples
        measured = 10 * math.log10(clip.power / float(np.mean(added ** 2)))
        worst = max(worst, abs(measured - snr))
    verdict(10, peak_ok and worst <= 1e-6, f"1 kHz argmax bin 10 in all {raw.shape[0] * raw.shape[2]} "
                                           f"frames: {peak_ok}; worst SNR error {worst:.1e} dB")

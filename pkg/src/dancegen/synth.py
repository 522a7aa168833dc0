"""Synthetic music/dance pairs with exact beat ground truth.

The music is a sustained chord plus a decaying 2 kHz click on every
beat, louder on even beats.  The dance repeats every two beats (rest pose
on even beats, full displacement on odd ones), so the accent makes the
pose audible: with identical clicks the best audio-only prediction is the
mean pose.  The dance moves every joint along a fixed displacement
direction scaled by ``(cos(pi * phi) - 1) / 2`` where ``phi`` is the beat
phase (beat index plus fraction), so each joint comes to rest exactly on
each beat and is fastest half-way between beats.  Patterns switch only on
beats where the displacement is zero, which keeps the motion continuous.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, AudioClip
from .exceptions import InvalidInputError
from .motion import JOINTS, quaternion_from_euler

FPS = 30
PATTERNS = ("lateral_bounce", "front_back", "mixed")
SWITCH_EVERY = 8
CLICK_FREQ = 2000.0
CLICK_LENGTH = 0.3
CLICK_DECAY = 0.08
CLICK_ACCENT = (0.6, 0.4)  # amplitude on even and odd beats


@dataclass(frozen=True)
class SynthSpec:
    bpm: float = 90.0
    duration: float = 180.0
    step_pattern: str = "lateral_bounce"
    noise_level: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 60 <= self.bpm <= 200:
            raise InvalidInputError(f"bpm must lie in [60, 200], got {self.bpm}")
        if self.duration < 10:
            raise InvalidInputError(f"duration must be >= 10 s, got {self.duration}")
        if self.step_pattern not in PATTERNS:
            raise InvalidInputError(f"step_pattern must be one of {PATTERNS}")
        if self.noise_level < 0:
            raise InvalidInputError("noise_level must be >= 0")


def beat_times(bpm: float, duration: float) -> np.ndarray:
    period = 60.0 / bpm
    n = int(np.floor(duration / period - 1e-9)) + 1
    return np.arange(n) * period


def gen_music(spec: SynthSpec, sample_rate: int = SAMPLE_RATE) -> tuple[AudioClip, np.ndarray]:
    """Chord bed plus an accented click at every beat; returns the clip and the beat times."""
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * sample_rate))
    t = np.arange(n) / sample_rate
    root = rng.choice([196.0, 220.0, 246.94, 261.63])
    phases = rng.uniform(0, 2 * np.pi, 3)
    audio = np.zeros(n)
    for ratio, ph in zip((1.0, 1.26, 1.5), phases):
        audio += 0.05 * np.sin(2 * np.pi * root * ratio * t + ph)
    audio += 0.002 * rng.standard_normal(n)
    beats = beat_times(spec.bpm, spec.duration)
    m = int(round(CLICK_LENGTH * sample_rate))
    tc = np.arange(m) / sample_rate
    click = np.sin(2 * np.pi * CLICK_FREQ * tc) * np.exp(-tc / CLICK_DECAY)
    for i, b in enumerate(beats):
        s = int(round(b * sample_rate))
        e = min(n, s + m)
        audio[s:e] += CLICK_ACCENT[i % 2] * click[:e - s]
    return AudioClip(audio, sample_rate), beats


# displacement directions per pattern: (joint, euler offset in degrees) for
# rotations and (joint, xyz offset in metres) for the root translation
_REST_POSE = {
    "pelvis": (0, 0, 0), "head": (5, 0, 0), "neck": (-5, 0, 0),
    "spine1": (3, 0, 0), "spine2": (2, 0, 0),
    "left_clavicle": (0, 0, 10), "left_shoulder": (0, 0, 70), "left_forearm": (0, 20, 10),
    "right_clavicle": (0, 0, -10), "right_shoulder": (0, 0, -70), "right_forearm": (0, -20, -10),
    "left_thigh": (0, 0, 5), "left_knee": (10, 0, 0), "left_foot": (-10, 0, 0),
    "right_thigh": (0, 0, -5), "right_knee": (10, 0, 0), "right_foot": (-10, 0, 0),
}
_ROOT_REST = np.array([0.0, 0.9, 2.0])

_PATTERN_MOVES = {
    "lateral_bounce": {
        "root": (0.25, -0.06, 0.0),
        "pelvis": (0, 0, 20), "spine1": (0, 0, -12), "head": (0, 0, 10),
        "left_shoulder": (0, 0, 40), "right_shoulder": (0, 0, -40),
        "left_forearm": (0, 30, 0), "right_forearm": (0, -30, 0),
        "left_knee": (50, 0, 0), "right_knee": (50, 0, 0),
        "left_thigh": (-30, 0, 0), "right_thigh": (-30, 0, 0),
    },
    "front_back": {
        "root": (0.0, -0.03, 0.25),
        "pelvis": (-25, 0, 0), "spine1": (-20, 0, 0), "spine2": (-15, 0, 0), "neck": (-12, 0, 0),
        "left_shoulder": (35, 0, 0), "right_shoulder": (35, 0, 0),
        "left_thigh": (-40, 0, 0), "right_thigh": (-40, 0, 0),
        "left_knee": (45, 0, 0), "right_knee": (45, 0, 0),
    },
}


def beat_phase(times: np.ndarray, beats: np.ndarray) -> np.ndarray:
    """Beat index plus fractional progress to the next beat; extrapolated past the ends."""
    beats = np.asarray(beats, dtype=np.float64)
    idx = np.arange(beats.shape[0], dtype=np.float64)
    period_first = beats[1] - beats[0]
    period_last = beats[-1] - beats[-2]
    phi = np.interp(times, beats, idx)
    phi = np.where(times < beats[0], (times - beats[0]) / period_first, phi)
    return np.where(times > beats[-1], idx[-1] + (times - beats[-1]) / period_last, phi)


def _pose(pattern: str, amount: float) -> np.ndarray:
    moves = _PATTERN_MOVES[pattern]
    frame = np.empty(71)
    frame[0:3] = _ROOT_REST + amount * np.asarray(moves.get("root", (0, 0, 0)), dtype=float)
    for name, rest in _REST_POSE.items():
        e = JOINTS[name]
        angles = np.asarray(rest, float) + amount * np.asarray(moves.get(name, (0, 0, 0)), float)
        frame[e.start:e.stop] = quaternion_from_euler(angles, "xyz")
    return frame


def gen_dance(beats, spec: SynthSpec, n_frames: int | None = None, fps: float = FPS) -> np.ndarray:
    """Raw (unnormalized) 71-d motion at ``fps`` that comes to rest on every beat."""
    beats = np.asarray(beats, dtype=np.float64)
    if beats.shape[0] < 2:
        raise InvalidInputError("dance generation needs at least 2 beats")
    if n_frames is None:
        n_frames = int(round(spec.duration * fps))
    times = np.arange(n_frames) / fps
    phi = beat_phase(times, beats)
    amount = (1.0 - np.cos(np.pi * phi)) / 2.0
    if spec.step_pattern == "mixed":
        segment = np.floor(phi / SWITCH_EVERY).astype(int)
        names = np.where(segment % 2 == 0, "lateral_bounce", "front_back")
    else:
        names = np.full(n_frames, spec.step_pattern)
    frames = np.stack([_pose(p, a) for p, a in zip(names, amount)])
    if spec.noise_level > 0:
        rng = np.random.default_rng([spec.seed, 1])
        scale = np.max(np.abs(frames), axis=0) / 0.9
        frames = frames + spec.noise_level * scale * rng.standard_normal(frames.shape)
    return frames


def gen_track(spec: SynthSpec, sample_rate: int = SAMPLE_RATE, fps: float = FPS):
    clip, beats = gen_music(spec, sample_rate)
    motion = gen_dance(beats, spec, int(round(spec.duration * fps)), fps)
    return clip, motion, beats


def gen_dataset(specs: list[SynthSpec], out_dir, snr_db=(), prefix: str = "track") -> Path:
    """Write WAV, motion CSV and beat files per spec plus ``manifest.json``; returns the manifest path."""
    from . import io

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    entries = []
    for i, spec in enumerate(specs):
        name = f"{prefix}_{i:02d}"
        clip, motion, beats = gen_track(spec)
        audio_p, motion_p, beats_p = out / f"{name}.wav", out / f"{name}.motion.csv", out / f"{name}.beats.txt"
        try:
            io.write_wav(audio_p, clip)
            io.write_motion(motion_p, motion)
            io.write_beats(beats_p, beats)
        except OSError as exc:
            raise OSError(f"failed writing files for {name} in {out}: {exc}") from exc
        entries.append({"name": name, "audio": audio_p.name, "motion": motion_p.name,
                        "beats": beats_p.name, "spec": asdict(spec)})
    manifest = {"tracks": entries, "snr_db": list(snr_db), "fps": FPS, "sample_rate": SAMPLE_RATE}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path

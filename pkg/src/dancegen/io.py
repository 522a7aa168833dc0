"""File formats: WAV audio, spectral feature files, motion CSV (+ scaler
sidecar), beat annotations, manifests and metric reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ._validation import MOTION_DIM, check_beats, check_motion
from .dsp import SAMPLE_RATE, AudioClip, BinStats
from .exceptions import InvalidInputError
from .motion import COLUMN_NAMES
from .nn.container import read_arrays, write_arrays

FEATURE_KIND = "dancegen-features"


def read_wav(path, expected_rate: int | None = SAMPLE_RATE) -> AudioClip:
    """Read a mono PCM16 or float32 WAV; any other rate than ``expected_rate`` is an error."""
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read WAV {path}: {exc}") from exc
    if data.ndim != 1:
        raise InvalidInputError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise InvalidInputError(f"{path}: unsupported sample format {data.dtype}")
    if expected_rate is not None and rate != expected_rate:
        raise InvalidInputError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip, pcm16: bool = False) -> Path:
    if pcm16:
        data = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = clip.samples.astype(np.float32)
    wavfile.write(str(path), clip.sample_rate, data)
    return Path(path)


def write_features(path, blocks: np.ndarray, stats: BinStats, meta: dict | None = None) -> Path:
    info = {"kind": FEATURE_KIND, "n_blocks": int(blocks.shape[0]),
            "n_bins": int(blocks.shape[1]), "n_frames": int(blocks.shape[2])}
    info.update(meta or {})
    return write_arrays(path, {"blocks": blocks, "bin_min": stats.minimum, "bin_max": stats.maximum}, info)


def read_features(path) -> tuple[np.ndarray, BinStats, dict]:
    arrays, meta = read_arrays(path)
    if meta.get("kind") != FEATURE_KIND:
        raise InvalidInputError(f"{path} is not a feature file")
    return arrays["blocks"], BinStats(arrays["bin_min"], arrays["bin_max"]), meta


def _columns(dim: int) -> list[str]:
    return list(COLUMN_NAMES) if dim == MOTION_DIM else [f"c{i}" for i in range(dim)]


def scaler_path(motion_path) -> Path:
    p = Path(motion_path)
    return p.with_name(p.name + ".scaler.json")


def write_motion(path, frames, scaler=None) -> Path:
    """CSV with a header row of joint component names; ``scaler`` goes to a JSON sidecar.

    A sidecar marks the values as normalized; ``scaler[c]`` multiplies
    component ``c`` back to raw units.
    """
    frames = check_motion(frames, dim=None)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_columns(frames.shape[1]))
        for row in frames:
            w.writerow([repr(float(v)) for v in row])
    side = scaler_path(path)
    if scaler is not None:
        side.write_text(json.dumps({"scaler": [float(s) for s in np.asarray(scaler).ravel()]}) + "\n")
    elif side.exists():
        side.unlink()
    return path


def read_motion(path) -> tuple[np.ndarray, np.ndarray | None]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidInputError(f"cannot read motion file {path}: {exc}") from exc
    if not rows:
        raise InvalidInputError(f"{path}: empty motion file")
    header, body = rows[0], rows[1:]
    try:
        frames = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), -1)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric motion value") from exc
    if frames.shape[1] != len(header):
        raise InvalidInputError(f"{path}: {frames.shape[1]} columns but {len(header)} header names")
    frames = check_motion(frames, dim=None, name=str(path))
    side = scaler_path(path)
    scaler = None
    if side.exists():
        scaler = np.asarray(json.loads(side.read_text())["scaler"], dtype=np.float64)
        if scaler.shape[0] != frames.shape[1]:
            raise InvalidInputError(f"{side}: scaler length {scaler.shape[0]} != {frames.shape[1]}")
    return frames, scaler


def write_beats(path, times) -> Path:
    times = check_beats(times)
    Path(path).write_text("".join(f"{t:.6f}\n" for t in times))
    return Path(path)


def read_beats(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read beat file {path}: {exc}") from exc
    try:
        times = [float(line.split()[0]) for line in text.splitlines() if line.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed beat time") from exc
    return check_beats(np.asarray(times, dtype=np.float64), str(path))


def read_manifest(path) -> dict:
    """Load a training manifest and resolve file paths relative to it."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read manifest {path}: {exc}") from exc
    tracks = manifest.get("tracks")
    if not isinstance(tracks, list) or not tracks:
        raise InvalidInputError(f"{path}: manifest lists no tracks")
    base = path.parent
    for i, t in enumerate(tracks):
        for key in ("audio", "motion"):
            if key not in t:
                raise InvalidInputError(f"{path}: track {i} lacks '{key}'")
            t[key] = str(base / t[key])
        if t.get("beats"):
            t["beats"] = str(base / t["beats"])
        t.setdefault("name", Path(t["audio"]).stem)
    manifest.setdefault("snr_db", [])
    return manifest


def write_json(path, obj) -> Path:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return Path(path)

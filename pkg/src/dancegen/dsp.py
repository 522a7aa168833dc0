"""Audio front end: noise augmentation, per-motion-frame slicing and
normalized STFT power blocks.

Every motion frame (30 fps) is paired with a 534-sample slice of 16 kHz
audio.  The slice is cut into 160-sample Hann-windowed frames with an
80-sample hop, giving a block of 81 frequency bins x 5 frames.  Power is
rescaled per frequency bin to [-0.9, 0.9] using statistics gathered over
the whole track.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_sample_rate, check_samples
from .exceptions import InvalidInputError, OutOfRangeError

SAMPLE_RATE = 16000
FPS = 30
SLICE_LENGTH = 534
FRAME_LENGTH = 160
HOP_LENGTH = 80
WINDOW = "hann"
N_BINS = FRAME_LENGTH // 2 + 1
N_FRAMES = (SLICE_LENGTH - FRAME_LENGTH) // HOP_LENGTH + 1
NORM_LIMIT = 0.9


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", check_samples(self.samples))
        object.__setattr__(self, "sample_rate", check_sample_rate(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def power(self) -> float:
        return float(np.mean(self.samples ** 2)) if len(self) else 0.0


@dataclass(frozen=True)
class BinStats:
    """Per-frequency-bin minimum and maximum of raw power over a track."""

    minimum: np.ndarray
    maximum: np.ndarray

    @classmethod
    def from_raw(cls, raw_blocks: np.ndarray) -> "BinStats":
        raw = np.asarray(raw_blocks, dtype=np.float64)
        if raw.ndim == 2:
            raw = raw[None]
        return cls(raw.min(axis=(0, 2)), raw.max(axis=(0, 2)))


def mix_noise(clip: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    """Add ``noise`` to ``clip`` scaled so that the clip/noise power ratio is ``snr_db``."""
    if len(noise) != len(clip):
        raise InvalidInputError(
            f"noise length {len(noise)} != clip length {len(clip)}; trim the noise first")
    p_clip = clip.power
    p_noise = noise.power
    if p_clip <= 0:
        raise InvalidInputError("cannot set an SNR against a silent clip")
    if p_noise <= 0:
        raise InvalidInputError("noise has zero power")
    alpha = math.sqrt(p_clip / (p_noise * 10.0 ** (snr_db / 10.0)))
    return AudioClip(clip.samples + alpha * noise.samples, clip.sample_rate)


def add_white_noise(clip: AudioClip, snr_db: float, rng=None) -> AudioClip:
    """Contaminate ``clip`` with freshly drawn white Gaussian noise at ``snr_db``."""
    rng = np.random.default_rng(rng)
    noise = AudioClip(rng.standard_normal(len(clip)), clip.sample_rate)
    return mix_noise(clip, noise, snr_db)


def slice_start(t: int, sample_rate: int = SAMPLE_RATE, fps: float = FPS) -> int:
    """First sample of motion frame ``t``, rounded half-up to the nearest sample."""
    exact = Fraction(int(t)) * Fraction(sample_rate) / Fraction(fps).limit_denominator(10 ** 6)
    return math.floor(exact + Fraction(1, 2))


def slice_for_motion_frame(clip: AudioClip, t: int, fps: float = FPS,
                           length: int = SLICE_LENGTH) -> np.ndarray:
    if t < 0:
        raise OutOfRangeError(f"motion frame index must be >= 0, got {t}")
    start = slice_start(t, clip.sample_rate, fps)
    if start + length > len(clip):
        raise OutOfRangeError(
            f"slice [{start}, {start + length}) for frame {t} overruns clip of {len(clip)} samples")
    return clip.samples[start:start + length]


def n_motion_frames(n_samples: int, sample_rate: int = SAMPLE_RATE, fps: float = FPS,
                    length: int = SLICE_LENGTH) -> int:
    """Number of motion frames whose slice, starting at ``t / fps``, fits in the clip."""
    if n_samples < length:
        return 0
    span = Fraction(n_samples - length) * Fraction(fps).limit_denominator(10 ** 6) / sample_rate
    return math.floor(span) + 1


def _hann(frame_length: int) -> np.ndarray:
    return get_window(WINDOW, frame_length, fftbins=True)


def stft_power(window: np.ndarray, frame_length: int = FRAME_LENGTH,
               hop: int = HOP_LENGTH, slice_length: int = SLICE_LENGTH) -> np.ndarray:
    """One-sided STFT power of a single slice, shaped (bins, frames)."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != slice_length:
        raise InvalidInputError(f"expected a 1-D slice of {slice_length} samples, got shape {x.shape}")
    return _stft_power_batch(x[None], frame_length, hop)[0]


def _stft_power_batch(slices: np.ndarray, frame_length: int = FRAME_LENGTH,
                      hop: int = HOP_LENGTH) -> np.ndarray:
    # slices: (n, slice_length) -> (n, bins, frames)
    n_frames = (slices.shape[1] - frame_length) // hop + 1
    idx = np.arange(frame_length)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = slices[:, idx] * _hann(frame_length)
    spec = np.fft.rfft(frames, n=frame_length, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    return np.swapaxes(power, 1, 2)


def normalize_power(raw: np.ndarray, stats: BinStats) -> np.ndarray:
    """Map each bin linearly so the track minimum goes to -0.9 and maximum to +0.9.

    Works on a single (bins, frames) block or a (n, bins, frames) stack.
    Bins whose track minimum equals their maximum map to 0.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo = stats.minimum[:, None]
    span = (stats.maximum - stats.minimum)[:, None]
    safe = np.where(span > 0, span, 1.0)
    out = -NORM_LIMIT + 2.0 * NORM_LIMIT * (raw - lo) / safe
    out = np.where(span > 0, out, 0.0)
    # guard against rounding pushing values a hair outside the range
    return np.clip(out, -NORM_LIMIT, NORM_LIMIT)


def raw_power_blocks(clip: AudioClip, fps: float = FPS) -> np.ndarray:
    n = n_motion_frames(len(clip), clip.sample_rate, fps)
    if n < 1:
        raise InvalidInputError(
            f"clip of {len(clip)} samples is shorter than one {SLICE_LENGTH}-sample slice")
    starts = np.array([slice_start(t, clip.sample_rate, fps) for t in range(n)])
    slices = clip.samples[starts[:, None] + np.arange(SLICE_LENGTH)[None, :]]
    return _stft_power_batch(slices)


def feature_pipeline(clip: AudioClip, fps: float = FPS) -> tuple[np.ndarray, BinStats]:
    """Normalized spectral blocks (n, 81, 5) for every complete motion frame, plus the stats used."""
    raw = raw_power_blocks(clip, fps)
    stats = BinStats.from_raw(raw)
    return normalize_power(raw, stats), stats


class SpectrogramExtractor(TransformerMixin, BaseEstimator):
    """Turn 16 kHz mono audio into per-motion-frame normalized power blocks.

    The normalization statistics are computed per track inside
    :meth:`transform`; ``fit`` only validates the configuration.  The stats
    of the most recent track are kept in ``stats_``.

    Parameters
    ----------
    sample_rate : int
        Expected sample rate; audio at any other rate is rejected.
    fps : float
        Motion frame rate the blocks are aligned to.
    snr_db : float or None
        When set, white noise at this SNR is mixed in before extraction.
    random_state : int, Generator or None
        Seed for the augmentation noise.
    """

    def __init__(self, sample_rate=SAMPLE_RATE, fps=FPS, snr_db=None, random_state=None):
        self.sample_rate = sample_rate
        self.fps = fps
        self.snr_db = snr_db
        self.random_state = random_state

    def fit(self, X=None, y=None):
        check_sample_rate(self.sample_rate)
        if self.fps <= 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        self.n_bins_ = N_BINS
        self.n_frames_ = N_FRAMES
        return self

    def _one(self, samples, rng):
        if isinstance(samples, AudioClip):
            clip = samples
            if clip.sample_rate != self.sample_rate:
                raise InvalidInputError(
                    f"audio at {clip.sample_rate} Hz, expected {self.sample_rate} Hz (no resampling)")
        else:
            clip = AudioClip(samples, self.sample_rate)
        if self.snr_db is not None:
            clip = add_white_noise(clip, self.snr_db, rng)
        blocks, self.stats_ = feature_pipeline(clip, self.fps)
        return blocks

    def transform(self, X):
        if not hasattr(self, "n_bins_"):
            self.fit()
        rng = np.random.default_rng(self.random_state)
        if isinstance(X, AudioClip) or (isinstance(X, np.ndarray) and X.ndim == 1):
            return self._one(X, rng)
        return [self._one(x, rng) for x in X]

"""Weakly-supervised recurrent dance-step generation from audio power spectra."""

__version__ = "0.1.0"

from .beats import (MatchReport, cross_entropy, evaluate_track, extract_motion_beats,
                    match_beats, motion_speed, self_entropy)
from .dsp import AudioClip, BinStats, SpectrogramExtractor, feature_pipeline, mix_noise, stft_power
from .estimator import DanceGenerator
from .exceptions import (CheckpointError, DanceGenError, InvalidInputError, NumericError,
                         OutOfRangeError, ShapeError, StateError)
from .model import Batch, DanceNet, ModelConfig, combined_loss, contrastive_loss, mse_loss
from .motion import MotionScaler, MotionSequence, denormalize_motion, normalize_motion, weak_labels
from .synth import SynthSpec, gen_dance, gen_dataset, gen_music, gen_track
from .training import Trainer, TrainingConfig, load_checkpoint, save_checkpoint

__all__ = [
    "AudioClip", "Batch", "BinStats", "CheckpointError", "DanceGenError", "DanceGenerator",
    "DanceNet", "InvalidInputError", "MatchReport", "ModelConfig", "MotionScaler",
    "MotionSequence", "NumericError", "OutOfRangeError", "ShapeError", "SpectrogramExtractor",
    "StateError", "SynthSpec", "Trainer", "TrainingConfig", "combined_loss", "contrastive_loss",
    "cross_entropy", "denormalize_motion", "evaluate_track", "extract_motion_beats",
    "feature_pipeline", "gen_dance", "gen_dataset", "gen_music", "gen_track", "load_checkpoint",
    "match_beats", "mix_noise", "motion_speed", "mse_loss", "normalize_motion",
    "save_checkpoint", "self_entropy", "stft_power", "weak_labels",
]

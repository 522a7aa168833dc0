"""Input validation helpers used by the estimators and the functional API."""
from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError, ShapeError

MOTION_DIM = 71


def check_finite(a: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return a


def check_samples(samples, name: str = "samples") -> np.ndarray:
    """Return a finite 1-D float64 copy-free view of an audio buffer."""
    a = np.asarray(samples, dtype=np.float64)
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {a.shape}")
    return check_finite(a, name)


def check_sample_rate(sample_rate) -> int:
    if not np.isfinite(sample_rate) or sample_rate <= 0:
        raise InvalidInputError(f"sample_rate must be positive, got {sample_rate}")
    return int(sample_rate)


def check_motion(frames, dim: int | None = MOTION_DIM, min_frames: int = 1,
                 name: str = "motion") -> np.ndarray:
    """Validate a (n_frames, dim) motion array.

    ``dim=None`` accepts any component count, which the reduced-size test
    models rely on.
    """
    a = np.asarray(frames, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (frames, components), got shape {a.shape}")
    if dim is not None and a.shape[1] != dim:
        raise ShapeError(f"{name} must have {dim} components per frame, got {a.shape[1]}")
    if a.shape[0] < min_frames:
        raise InvalidInputError(f"{name} needs at least {min_frames} frames, got {a.shape[0]}")
    return check_finite(a, name)


def check_beats(times, name: str = "beats") -> np.ndarray:
    """Beat times must be 1-D, non-negative and sorted ascending."""
    a = np.asarray(times, dtype=np.float64).reshape(-1) if np.ndim(times) else np.asarray([times], float)
    check_finite(a, name)
    if np.any(a < 0):
        raise InvalidInputError(f"{name} contains negative times")
    if np.any(np.diff(a) < 0):
        raise InvalidInputError(f"{name} must be sorted ascending")
    return a


def check_blocks(blocks, n_bins: int | None = None, n_frames: int | None = None,
                 name: str = "features") -> np.ndarray:
    """Validate a (n_blocks, W, H) stack of spectral blocks."""
    a = np.asarray(blocks, dtype=np.float64)
    if a.ndim != 3:
        raise ShapeError(f"{name} must be 3-D (blocks, bins, frames), got shape {a.shape}")
    if n_bins is not None and a.shape[1] != n_bins:
        raise ShapeError(f"{name} must have {n_bins} frequency bins, got {a.shape[1]}")
    if n_frames is not None and a.shape[2] != n_frames:
        raise ShapeError(f"{name} must have {n_frames} STFT frames, got {a.shape[2]}")
    if a.shape[0] < 1:
        raise InvalidInputError(f"{name} is empty")
    return check_finite(a, name)


def as_sequence_list(X, check) -> tuple[list[np.ndarray], bool]:
    """Accept a single array or a list of arrays; report which one it was."""
    if isinstance(X, np.ndarray) and X.dtype != object:
        return [check(X)], True
    return [check(x) for x in X], False

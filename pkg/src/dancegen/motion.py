"""71-dimensional dance motion: skeleton layout, quaternions, max-abs
normalization and weak beat labels derived from per-frame spread."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import MOTION_DIM, check_motion
from .exceptions import InvalidInputError, ShapeError

FPS = 30
NORM_LIMIT = 0.9


class JointEntry(NamedTuple):
    name: str
    kind: str  # "translation3" or "rotation4"
    start: int
    stop: int

    @property
    def columns(self) -> list[str]:
        axes = "xyz" if self.kind == "translation3" else ("qx", "qy", "qz", "qw")
        prefix = "t" if self.kind == "translation3" else ""
        return [f"{self.name}_{prefix}{a}" for a in axes]


_ROTATION_JOINTS = (
    "pelvis", "head", "neck", "spine1", "spine2",
    "left_clavicle", "left_shoulder", "left_forearm",
    "right_clavicle", "right_shoulder", "right_forearm",
    "left_thigh", "left_knee", "left_foot",
    "right_thigh", "right_knee", "right_foot",
)


def _build_layout() -> tuple[JointEntry, ...]:
    entries = [JointEntry("root", "translation3", 0, 3)]
    for i, name in enumerate(_ROTATION_JOINTS):
        start = 3 + 4 * i
        entries.append(JointEntry(name, "rotation4", start, start + 4))
    return tuple(entries)


SKELETON_LAYOUT = _build_layout()
COLUMN_NAMES = tuple(c for e in SKELETON_LAYOUT for c in e.columns)
JOINTS = {e.name: e for e in SKELETON_LAYOUT}
assert SKELETON_LAYOUT[-1].stop == MOTION_DIM == len(COLUMN_NAMES)


@dataclass
class MotionSequence:
    frames: np.ndarray
    fps: float = FPS
    scaler: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.frames = check_motion(self.frames, dim=None)
        if self.scaler is not None:
            self.scaler = np.asarray(self.scaler, dtype=np.float64)

    def __len__(self):
        return self.frames.shape[0]


# --- quaternions ----------------------------------------------------------

def quaternion_multiply(a, b) -> np.ndarray:
    """Hamilton product of (x, y, z, w) quaternions; ``a * b`` applies ``b`` first."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


_AXES = {"x": 0, "y": 1, "z": 2}


def quaternion_from_euler(angles_deg, order: str = "xyz") -> np.ndarray:
    """Unit quaternion (x, y, z, w) for Euler angles in degrees.

    Rotations are about the fixed (static) axes and applied in the order
    given, so ``order="xyz"`` means rotate about x first and z last; the
    equivalent matrix is ``Rz @ Ry @ Rx``.  ``angles_deg[i]`` is the angle
    for axis ``order[i]``.
    """
    order = order.lower()
    if sorted(order) != ["x", "y", "z"]:
        raise InvalidInputError(f"order must be a permutation of 'xyz', got {order!r}")
    angles = np.radians(np.asarray(angles_deg, dtype=np.float64))
    if angles.shape != (3,) or not np.all(np.isfinite(angles)):
        raise InvalidInputError("expected three finite angles")
    q = np.array([0.0, 0.0, 0.0, 1.0])
    for axis, angle in zip(order, angles):
        e = np.zeros(4)
        e[_AXES[axis]] = np.sin(angle / 2)
        e[3] = np.cos(angle / 2)
        q = quaternion_multiply(e, q)
    return q / np.linalg.norm(q)


def quaternion_to_matrix(q) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


# --- normalization --------------------------------------------------------

def _max_abs_scale(frames: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(frames), axis=0)
    return np.where(peak > 0, peak / NORM_LIMIT, 1.0)


class MotionScaler(TransformerMixin, BaseEstimator):
    """Per-component max-abs scaling of a motion track into [-0.9, 0.9].

    ``scale_[c]`` is the divisor for component ``c``; components that are
    identically zero get a divisor of 1.
    """

    def __init__(self, motion_dim=MOTION_DIM):
        self.motion_dim = motion_dim

    def fit(self, X, y=None):
        X = check_motion(X, self.motion_dim)
        self.scale_ = _max_abs_scale(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_motion(X, self.n_features_in_)
        return X / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_motion(X, self.n_features_in_)
        return X * self.scale_


def normalize_motion(frames, motion_dim: int | None = MOTION_DIM) -> tuple[np.ndarray, np.ndarray]:
    frames = check_motion(frames, motion_dim)
    scale = _max_abs_scale(frames)
    return frames / scale, scale


def denormalize_motion(frames, scale, motion_dim: int | None = MOTION_DIM) -> np.ndarray:
    scale = np.asarray(scale, dtype=np.float64).reshape(-1)
    if motion_dim is not None and scale.shape[0] != motion_dim:
        raise InvalidInputError(f"scaler needs {motion_dim} entries, got {scale.shape[0]}")
    if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
        raise InvalidInputError("scaler entries must be finite and positive")
    frames = check_motion(frames, scale.shape[0])
    return frames * scale


# --- weak labels ----------------------------------------------------------

def frame_sd(frame) -> float | np.ndarray:
    """Population standard deviation across the components of a frame (or each row)."""
    a = np.asarray(frame, dtype=np.float64)
    return np.std(a, axis=-1)


def _sign(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1, -1)


def weak_labels(frames) -> np.ndarray:
    """Binary labels, one per frame index 2..n-1.

    ``labels[k]`` belongs to frame ``k + 2``: it is 1 when the change in
    per-frame spread keeps its direction across frames ``k``, ``k+1``,
    ``k+2`` and 0 when the direction reverses.  A zero change counts as
    rising.
    """
    frames = check_motion(frames, dim=None)
    if frames.shape[0] < 3:
        raise InvalidInputError(f"weak labels need at least 3 frames, got {frames.shape[0]}")
    dv = frame_sd(frames)
    s = _sign(np.diff(dv))
    return (s[1:] == s[:-1]).astype(np.int8)


def check_scaler(scale, motion_dim: int = MOTION_DIM) -> np.ndarray:
    scale = np.asarray(scale, dtype=np.float64).reshape(-1)
    if scale.shape[0] != motion_dim:
        raise ShapeError(f"scaler needs {motion_dim} entries, got {scale.shape[0]}")
    return scale

"""Gaussian scene representation, cameras, and the cloud checkpoint format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"SPLC"
CHECKPOINT_VERSION = 1
CLASS_IDS_MAGIC = b"TIDS"

_FLOATS_PER_RECORD = 14  # 3 mean + 3 log-scale + 4 quaternion + 1 opacity + 3 color


class CheckpointError(ValueError):
    """Raised for malformed cloud checkpoint files."""


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


@dataclass
class GaussianCloud:
    """Optimizable scene: anisotropic 3-D Gaussians with opacity and flat color.

    Scales are stored as logs (positivity), opacity/color as logits (range).
    ``class_ids`` carries an integer label per Gaussian for id-map renders;
    it is not part of the checkpoint format.
    """

    means: np.ndarray          # (N, 3)
    log_scales: np.ndarray     # (N, 3)
    quats: np.ndarray          # (N, 4) wxyz, kept unit-norm between updates
    opacity_logits: np.ndarray  # (N,)
    color_logits: np.ndarray   # (N, 3)
    class_ids: np.ndarray = field(default=None)  # (N,) int32

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = self.means.shape[0]
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.quats = np.ascontiguousarray(self.quats, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.color_logits = np.ascontiguousarray(self.color_logits, dtype=np.float64).reshape(n, 3)
        if self.class_ids is None:
            self.class_ids = np.zeros(n, dtype=np.int32)
        else:
            self.class_ids = np.ascontiguousarray(self.class_ids, dtype=np.int32).reshape(n)
        for name in ("means", "log_scales", "quats", "opacity_logits", "color_logits"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def colors(self) -> np.ndarray:
        return sigmoid(self.color_logits)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def normalize_quats(self) -> None:
        norms = np.linalg.norm(self.quats, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("zero-norm quaternion")
        self.quats /= norms

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.means.copy(),
            self.log_scales.copy(),
            self.quats.copy(),
            self.opacity_logits.copy(),
            self.color_logits.copy(),
            self.class_ids.copy(),
        )

    def gaussian(self, i: int) -> "Gaussian":
        return Gaussian(
            mean=self.means[i].copy(),
            log_scale=self.log_scales[i].copy(),
            quat=self.quats[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            color_logit=self.color_logits[i].copy(),
        )

    def subset(self, indices) -> "GaussianCloud":
        idx = np.asarray(indices)
        return GaussianCloud(
            self.means[idx],
            self.log_scales[idx],
            self.quats[idx],
            self.opacity_logits[idx],
            self.color_logits[idx],
            self.class_ids[idx],
        )

    @staticmethod
    def concatenate(clouds) -> "GaussianCloud":
        return GaussianCloud(
            np.concatenate([c.means for c in clouds]),
            np.concatenate([c.log_scales for c in clouds]),
            np.concatenate([c.quats for c in clouds]),
            np.concatenate([c.opacity_logits for c in clouds]),
            np.concatenate([c.color_logits for c in clouds]),
            np.concatenate([c.class_ids for c in clouds]),
        )


@dataclass(frozen=True)
class Gaussian:
    """A single Gaussian, used by the one-primitive projection API."""

    mean: np.ndarray
    log_scale: np.ndarray
    quat: np.ndarray
    opacity_logit: float = 0.0
    color_logit: np.ndarray = None

    def as_cloud(self) -> GaussianCloud:
        color = self.color_logit if self.color_logit is not None else np.zeros(3)
        return GaussianCloud(
            self.mean[None, :],
            self.log_scale[None, :],
            self.quat[None, :],
            np.array([self.opacity_logit]),
            np.asarray(color, dtype=np.float64)[None, :],
        )


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: world-to-camera rigid transform plus intrinsics.

    Camera frame: x right, y down, z forward; pixel (row i, col j) samples
    at image coordinates (x=j, y=i).
    """

    rotation: np.ndarray    # (3, 3) world -> camera
    translation: np.ndarray  # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError("camera rotation is not orthonormal")

    @staticmethod
    def look_at(eye, target, up, fov_y_deg: float, width: int, height: int, near: float = 0.01) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        up = np.asarray(up, dtype=np.float64)
        z = target - eye
        z = z / np.linalg.norm(z)
        x = np.cross(z, up)
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        rot = np.stack([x, y, z])
        trans = -rot @ eye
        fy = 0.5 * height / np.tan(0.5 * np.deg2rad(fov_y_deg))
        fx = fy
        return Camera(rot, trans, fx, fy, (width - 1) / 2.0, (height - 1) / 2.0, width, height, near)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


def save_cloud(cloud: GaussianCloud, path) -> None:
    """Write the versioned little-endian checkpoint (14 float32 per Gaussian)."""
    records = np.empty((cloud.n, _FLOATS_PER_RECORD), dtype="<f4")
    records[:, 0:3] = cloud.means
    records[:, 3:6] = cloud.log_scales
    records[:, 6:10] = cloud.quats
    records[:, 10] = cloud.opacity_logits
    records[:, 11:14] = cloud.color_logits
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, cloud.n))
        fh.write(records.tobytes())


def load_cloud(path) -> GaussianCloud:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a cloud checkpoint: {path}")
    version, count = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    expected = 12 + count * _FLOATS_PER_RECORD * 4
    if len(blob) != expected:
        raise CheckpointError(f"checkpoint payload truncated: {len(blob)} != {expected}")
    records = np.frombuffer(blob, dtype="<f4", offset=12).reshape(count, _FLOATS_PER_RECORD)
    records = records.astype(np.float64)
    return GaussianCloud(
        records[:, 0:3],
        records[:, 3:6],
        records[:, 6:10],
        records[:, 10],
        records[:, 11:14],
    )


def save_class_ids(ids: np.ndarray, path) -> None:
    ids = np.ascontiguousarray(ids, dtype="<u2")
    with open(path, "wb") as fh:
        fh.write(CLASS_IDS_MAGIC)
        fh.write(struct.pack("<II", 1, ids.shape[0]))
        fh.write(ids.tobytes())


def load_class_ids(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CLASS_IDS_MAGIC:
        raise CheckpointError(f"not a class-id sidecar: {path}")
    version, count = struct.unpack("<II", blob[4:12])
    if version != 1 or len(blob) != 12 + 2 * count:
        raise CheckpointError(f"malformed class-id sidecar: {path}")
    return np.frombuffer(blob, dtype="<u2", offset=12).astype(np.int32)

"""Patch-feature providers: a synthetic oracle and a file-backed reader.

The oracle stands in for a frozen vision backbone: every semantic class in
the synthetic scene gets a fixed random embedding (drawn once per scene), so
static surfaces produce consistent features across frames and viewpoints.
Feature files use the little-endian "TFEA" container.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TFEA_MAGIC = b"TFEA"
TFEA_VERSION = 1
_MAX_VALUE_COUNT = 1 << 28  # 1 GiB of float32 payload

DEFAULT_PATCH_SIZE = 14
DEFAULT_FEATURE_DIM = 32
DEFAULT_FEATURE_SIGMA = 0.05


class FeatureFileError(ValueError):
    """Base class for malformed feature files."""


class FeatureFileMissing(FeatureFileError):
    pass


class FeatureFileBadMagic(FeatureFileError):
    pass


class FeatureFileDimensionOverflow(FeatureFileError):
    pass


class FeatureFileTruncated(FeatureFileError):
    pass


def feature_grid(width: int, height: int, patch_size: int):
    """Patch-grid dimensions covering an image: ceil(dims / patch_size)."""
    return math.ceil(width / patch_size), math.ceil(height / patch_size)


@dataclass(frozen=True)
class FeatureMap:
    """Patch-grid feature vectors for one image."""

    values: np.ndarray  # (grid_h, grid_w, dim) float32
    patch_size: int

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 3:
            raise ValueError(f"expected (grid_h, grid_w, dim) values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values contain non-finite entries")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        object.__setattr__(self, "values", values)

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


def write_features(fmap: FeatureMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(TFEA_MAGIC)
        fh.write(struct.pack("<IIIII", TFEA_VERSION, fmap.grid_w, fmap.grid_h, fmap.dim, fmap.patch_size))
        fh.write(fmap.values.astype("<f4").tobytes())


def file_features(path) -> FeatureMap:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise FeatureFileMissing(f"feature file not found: {path}") from None
    if len(blob) < 4 or blob[:4] != TFEA_MAGIC:
        raise FeatureFileBadMagic(f"bad magic in {path}")
    if len(blob) < 24:
        raise FeatureFileTruncated(f"header truncated in {path}")
    version, grid_w, grid_h, dim, patch_size = struct.unpack("<IIIII", blob[4:24])
    if version != TFEA_VERSION:
        raise FeatureFileBadMagic(f"unsupported TFEA version {version} in {path}")
    if min(grid_w, grid_h, dim, patch_size) < 1 or grid_w * grid_h * dim > _MAX_VALUE_COUNT:
        raise FeatureFileDimensionOverflow(
            f"implausible dimensions {grid_w}x{grid_h}x{dim} (patch {patch_size}) in {path}"
        )
    expected = 24 + 4 * grid_w * grid_h * dim
    if len(blob) != expected:
        raise FeatureFileTruncated(f"payload is {len(blob)} bytes, expected {expected} in {path}")
    values = np.frombuffer(blob, dtype="<f4", offset=24).reshape(grid_h, grid_w, dim)
    return FeatureMap(values.copy(), patch_size)


def majority_per_patch(id_map: np.ndarray, patch_size: int) -> np.ndarray:
    """Most frequent id per patch cell; ties break toward the smaller id."""
    h, w = id_map.shape
    grid_w, grid_h = feature_grid(w, h, patch_size)
    min_id = int(id_map.min()) if id_map.size else 0
    max_id = int(id_map.max()) if id_map.size else 0
    n_bins = max_id - min_id + 2  # one spare bin for padding
    if n_bins > 4096:
        return _majority_per_patch_slow(id_map, patch_size, grid_w, grid_h)
    pad_bin = n_bins - 1
    padded = np.full((grid_h * patch_size, grid_w * patch_size), pad_bin, dtype=np.int64)
    padded[:h, :w] = id_map.astype(np.int64) - min_id
    blocks = (
        padded.reshape(grid_h, patch_size, grid_w, patch_size)
        .transpose(0, 2, 1, 3)
        .reshape(grid_h * grid_w, patch_size * patch_size)
    )
    offsets = np.arange(grid_h * grid_w, dtype=np.int64)[:, None] * n_bins
    counts = np.bincount((blocks + offsets).ravel(), minlength=grid_h * grid_w * n_bins)
    counts = counts.reshape(grid_h * grid_w, n_bins)
    counts[:, pad_bin] = 0
    return (np.argmax(counts, axis=1) + min_id).reshape(grid_h, grid_w)


def _majority_per_patch_slow(id_map, patch_size, grid_w, grid_h):
    out = np.empty((grid_h, grid_w), dtype=np.int64)
    for gy in range(grid_h):
        for gx in range(grid_w):
            block = id_map[gy * patch_size:(gy + 1) * patch_size, gx * patch_size:(gx + 1) * patch_size]
            ids, counts = np.unique(block, return_counts=True)
            out[gy, gx] = ids[np.argmax(counts)]
    return out


class OracleFeatureProvider:
    """Deterministic feature oracle over synthetic scene metadata.

    Reference-image features come from each patch's majority instance id
    mapped to that frame's semantic class; rendered-image features come from
    the class ids composited alongside the render. Both get seeded Gaussian
    jitter of width ``sigma``.
    """

    VOID_CLASS = -1

    def __init__(self, n_classes: int, dim: int = DEFAULT_FEATURE_DIM,
                 sigma: float = DEFAULT_FEATURE_SIGMA, patch_size: int = DEFAULT_PATCH_SIZE,
                 seed: int = 0):
        self.n_classes = n_classes
        self.dim = dim
        self.sigma = sigma
        self.patch_size = patch_size
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFEA7]))
        # one extra row at the end serves pixels no class claims (alpha ~ 0)
        self._embeddings = rng.normal(0.0, 1.0, (n_classes + 1, dim)) / np.sqrt(dim)
        self._ref_cache = {}

    def class_embedding(self, class_id: int) -> np.ndarray:
        if class_id == self.VOID_CLASS:
            return self._embeddings[-1]
        if not 0 <= class_id < self.n_classes:
            raise ValueError(f"class id {class_id} outside [0, {self.n_classes})")
        return self._embeddings[class_id]

    def _assemble(self, class_grid: np.ndarray, jitter_rng) -> FeatureMap:
        lookup = np.where(class_grid == self.VOID_CLASS, self.n_classes, class_grid)
        values = self._embeddings[lookup].astype(np.float64)
        if self.sigma > 0.0:
            values = values + jitter_rng.normal(0.0, self.sigma, values.shape)
        return FeatureMap(values.astype(np.float32), self.patch_size)

    def features_for_ids(self, class_map: np.ndarray, stream: tuple) -> FeatureMap:
        """Features for an arbitrary per-pixel class-id map (jitter keyed by ``stream``)."""
        grid = majority_per_patch(class_map, self.patch_size)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, *stream]))
        return self._assemble(grid, rng)

    def reference_features(self, frame) -> FeatureMap:
        """Features of a captured frame (instance map + per-frame class table).

        Deterministic per (seed, frame), so repeated calls come from a cache.
        """
        if frame.index in self._ref_cache:
            return self._ref_cache[frame.index]
        if frame.instance_map is None:
            raise ValueError(f"frame {frame.index} carries no instance map")
        image = frame.image
        if frame.instance_map.shape != (image.height, image.width):
            raise ValueError("instance map does not match the image dimensions")
        inst_grid = majority_per_patch(frame.instance_map, self.patch_size)
        class_grid = np.where(
            inst_grid == self.VOID_CLASS, self.VOID_CLASS, frame.class_of_instance[inst_grid]
        )
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1, frame.index]))
        fmap = self._assemble(class_grid, rng)
        self._ref_cache[frame.index] = fmap
        return fmap

    def render_features(self, frame, render_out, iteration: int) -> FeatureMap:
        """Features of the current render, from its composited class-id map."""
        if render_out.id_map is None:
            raise ValueError("render was produced without with_ids=True")
        grid = majority_per_patch(render_out.id_map, self.patch_size)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 2, frame.index, iteration]))
        return self._assemble(grid, rng)


class FileFeatureProvider:
    """Reads per-frame reference features exported to TFEA files.

    Cannot featurize live renders, so pipelines using it must run with the
    consistency term disabled.
    """

    def __init__(self, directory, patch_size: int = DEFAULT_PATCH_SIZE):
        self.directory = Path(directory)
        self.patch_size = patch_size
        self._cache = {}

    def reference_features(self, frame) -> FeatureMap:
        if frame.index not in self._cache:
            self._cache[frame.index] = file_features(self.directory / f"{frame.index:05d}.tfea")
        return self._cache[frame.index]

    def render_features(self, frame, render_out, iteration: int):
        return None

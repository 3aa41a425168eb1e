"""Model registry: patch-feature extractors and point-promptable segmenters.

Two kinds of backend per role: heavyweight pretrained models (loaded lazily,
need downloaded weights) and a dependency-free deterministic fallback that
runs anywhere, so exports and their round-trip tests work offline.
"""
from __future__ import annotations

import numpy as np

from .formats import feature_grid

PATCH_SIZE = 14


class ModelLoadError(RuntimeError):
    pass


class RandomProjectionFeaturizer:
    """Deterministic patch featurizer: pooled patch statistics pushed through
    a fixed seeded random projection. No weights to download; the same frame
    bytes always produce the same features."""

    model_id = "random-projection-v1"
    dim = 64

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB1D6E]))
        # stats per patch: per-channel mean/std + x/y gradient energy
        self._proj = rng.normal(0.0, 1.0, (8, dim)) / np.sqrt(8)
        self.model_id = f"random-projection-v1-d{dim}-s{seed}"

    def extract(self, image: np.ndarray) -> np.ndarray:
        h, w, _ = image.shape
        grid_w, grid_h = feature_grid(w, h, PATCH_SIZE)
        feats = np.zeros((grid_h, grid_w, self.dim), dtype=np.float32)
        for gy in range(grid_h):
            for gx in range(grid_w):
                patch = image[gy * PATCH_SIZE:(gy + 1) * PATCH_SIZE,
                              gx * PATCH_SIZE:(gx + 1) * PATCH_SIZE]
                gx_e = np.abs(np.diff(patch, axis=1)).mean() if patch.shape[1] > 1 else 0.0
                gy_e = np.abs(np.diff(patch, axis=0)).mean() if patch.shape[0] > 1 else 0.0
                stats = np.array([
                    patch[..., 0].mean(), patch[..., 1].mean(), patch[..., 2].mean(),
                    patch[..., 0].std(), patch[..., 1].std(), patch[..., 2].std(),
                    gx_e, gy_e,
                ])
                feats[gy, gx] = (stats @ self._proj).astype(np.float32)
        return feats


class DinoV2Featurizer:
    """DINOv2 patch features via torch.hub (weights must be available)."""

    def __init__(self, variant: str = "dinov2_vits14"):
        try:
            import torch

            self._torch = torch
            self._model = torch.hub.load("facebookresearch/dinov2", variant)
            self._model.eval()
        except Exception as exc:  # noqa: BLE001 - any load failure is terminal here
            raise ModelLoadError(
                f"could not load {variant}; pretrained weights unavailable ({exc})"
            ) from exc
        self.model_id = f"{variant}@torch.hub"
        self.dim = self._model.embed_dim

    def extract(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        h, w, _ = image.shape
        grid_w, grid_h = feature_grid(w, h, PATCH_SIZE)
        pad_h, pad_w = grid_h * PATCH_SIZE, grid_w * PATCH_SIZE
        padded = np.zeros((pad_h, pad_w, 3), dtype=np.float32)
        padded[:h, :w] = image
        mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
        std = np.array([0.229, 0.224, 0.225], dtype=np.float32)
        tensor = torch.from_numpy(((padded - mean) / std).transpose(2, 0, 1))[None]
        with torch.no_grad():
            tokens = self._model.forward_features(tensor)["x_norm_patchtokens"]
        feats = tokens[0].reshape(grid_h, grid_w, self.dim).cpu().numpy()
        return feats.astype(np.float32)


class RegionGrowSegmenter:
    """Point-promptable segmenter: color-similarity region growing from the
    prompts. Deterministic, dependency-free."""

    model_id = "region-grow-v1"

    def __init__(self, tolerance: float = 0.12):
        self.tolerance = tolerance
        self.model_id = f"region-grow-v1-t{tolerance}"

    def segment(self, image: np.ndarray, points: np.ndarray) -> np.ndarray:
        h, w, _ = image.shape
        mask = np.zeros((h, w), dtype=bool)
        seeds = [(int(r), int(c)) for r, c in points if 0 <= int(r) < h and 0 <= int(c) < w]
        if not seeds:
            return mask
        ref = np.mean([image[r, c] for r, c in seeds], axis=0)
        ok = np.abs(image - ref).mean(axis=2) <= self.tolerance
        stack = [s for s in seeds if ok[s]]
        for s in stack:
            mask[s] = True
        while stack:
            r, c = stack.pop()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and ok[rr, cc] and not mask[rr, cc]:
                        mask[rr, cc] = True
                        stack.append((rr, cc))
        return mask


class SamSegmenter:
    """Segment-anything point prompting via the `segment_anything` package."""

    def __init__(self, checkpoint: str, model_type: str = "vit_b"):
        try:
            from segment_anything import SamPredictor, sam_model_registry

            sam = sam_model_registry[model_type](checkpoint=checkpoint)
            self._predictor = SamPredictor(sam)
        except Exception as exc:  # noqa: BLE001
            raise ModelLoadError(f"could not load SAM {model_type} ({exc})") from exc
        self.model_id = f"sam-{model_type}@{checkpoint}"

    def segment(self, image: np.ndarray, points: np.ndarray) -> np.ndarray:
        self._predictor.set_image((image * 255).astype(np.uint8))
        coords = np.array([[c, r] for r, c in points], dtype=np.float64)
        masks, scores, _ = self._predictor.predict(
            point_coords=coords, point_labels=np.ones(len(coords)), multimask_output=False
        )
        return masks[0].astype(bool)


def load_featurizer(name: str, **kw):
    if name == "random-projection":
        return RandomProjectionFeaturizer(**kw)
    if name == "dinov2":
        return DinoV2Featurizer(**kw)
    raise ModelLoadError(f"unknown featurizer {name!r}")


def load_segmenter(name: str, **kw):
    if name == "region-grow":
        return RegionGrowSegmenter(**kw)
    if name == "sam":
        return SamSegmenter(**kw)
    raise ModelLoadError(f"unknown segmenter {name!r}")

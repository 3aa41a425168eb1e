"""Transient mask predictor: a per-feature logistic classifier trained
against the reconstruction with an RGB residual term, a sparsity prior,
and a consistency penalty on rendered-image masks (which stay detached).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adam import Adam
from .features import FeatureMap
from .imaging import BinaryMask, ImageBuffer, ProbabilityMask, bilinear_adjoint, resample_bilinear_array

TMP_MAGIC = b"TTMP"
TMP_VERSION = 1

# scan order of the 3x3 neighborhood used by the patch-grid max dilation
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]


class Skipped:
    """Sentinel: the schedule suppressed this training step."""

    def __repr__(self):
        return "SKIPPED"


SKIPPED = Skipped()


@dataclass
class TmpModel:
    weights: np.ndarray  # (dim,)
    bias: float = 0.0
    use_bias: bool = True

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("non-finite TMP parameters")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, dim: int, use_bias: bool = True) -> "TmpModel":
        return cls(np.zeros(dim), 0.0, use_bias)

    def copy(self) -> "TmpModel":
        return TmpModel(self.weights.copy(), self.bias, self.use_bias)


@dataclass(frozen=True)
class TmpSchedule:
    """Stability schedule and loss weights for TMP training."""

    start_iteration: int = 500
    pause_after_reset: int = 250
    learning_rate: float = 1e-3
    lambda_prior: float = 0.1
    use_consistency: bool = True
    dilate_patches: bool = True

    def __post_init__(self):
        if self.start_iteration < 0 or self.pause_after_reset < 0 or self.learning_rate < 0:
            raise ValueError("schedule values must be non-negative")
        if not 0.0 < self.lambda_prior < 1.0:
            raise ValueError("lambda_prior must lie in (0, 1)")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _max_dilate(p: np.ndarray):
    """8-neighborhood max filter; returns values and flat argmax indices."""
    gh, gw = p.shape
    padded = np.full((gh + 2, gw + 2), -np.inf)
    padded[1:-1, 1:-1] = p
    stack = np.stack([padded[1 + dy:1 + dy + gh, 1 + dx:1 + dx + gw] for dy, dx in _OFFSETS])
    arg = np.argmax(stack, axis=0)  # first occurrence wins ties (scan order)
    values = np.take_along_axis(stack, arg[None], axis=0)[0]
    rows = np.clip(np.arange(gh)[:, None] + np.array([o[0] for o in _OFFSETS])[arg], 0, gh - 1)
    cols = np.clip(np.arange(gw)[None, :] + np.array([o[1] for o in _OFFSETS])[arg], 0, gw - 1)
    return values, rows, cols


def predict_forward(model: TmpModel, feat: FeatureMap, out_w: int, out_h: int,
                    dilate_patches: bool = True):
    """Per-patch sigmoid -> patch max-dilation -> bilinear upsample; keeps the
    backward cache."""
    if feat.dim != model.dim:
        raise ValueError(f"feature dim {feat.dim} != model dim {model.dim}")
    f = feat.values.astype(np.float64)
    z = f @ model.weights
    if model.use_bias:
        z = z + model.bias
    p = _sigmoid(z)
    if dilate_patches:
        pd, rows, cols = _max_dilate(p)
    else:
        pd, rows, cols = p, None, None
    up = resample_bilinear_array(pd, out_w, out_h)
    cache = {
        "features": f, "p": p, "rows": rows, "cols": cols,
        "grid_shape": p.shape, "dilate": dilate_patches,
    }
    return ProbabilityMask(np.clip(up, 0.0, 1.0)), cache


def predict_backward(cache, grad_up: np.ndarray):
    """Gradient of a pixel-mask loss wrt the model weights and bias."""
    gh, gw = cache["grid_shape"]
    g_pd = bilinear_adjoint(grad_up, gw, gh)
    if cache["dilate"]:
        g_p = np.zeros((gh, gw))
        np.add.at(g_p, (cache["rows"], cache["cols"]), g_pd)
    else:
        g_p = g_pd
    p = cache["p"]
    g_z = g_p * p * (1.0 - p)
    g_w = np.einsum("hwd,hw->d", cache["features"], g_z)
    g_b = float(g_z.sum())
    return g_w, g_b


def predict_mask(model: TmpModel, feat: FeatureMap, out_w: int, out_h: int,
                 dilate_patches: bool = True) -> ProbabilityMask:
    mask, _ = predict_forward(model, feat, out_w, out_h, dilate_patches)
    return mask


def residual_map(image: ImageBuffer, rendered: ImageBuffer) -> np.ndarray:
    """Channel-mean absolute difference, (H, W)."""
    if (image.height, image.width) != (rendered.height, rendered.width):
        raise ValueError("image dimensions differ")
    return np.mean(np.abs(image.data - rendered.data), axis=2)


def transient_loss(p: ProbabilityMask, p_hat_detached: Optional[ProbabilityMask],
                   image: ImageBuffer, rendered: ImageBuffer, lambda_prior: float,
                   use_consistency: bool = True):
    """Residual + sparsity + consistency objective; every term is a per-pixel
    mean so ``lambda_prior`` is resolution-independent.

    Returns (loss, gradient wrt ``p``, term dict). The rendered-image mask is
    a constant here: no gradient flows through it.
    """
    pv = p.values
    r = residual_map(image, rendered)
    if pv.shape != r.shape:
        raise ValueError("mask dimensions do not match the images")
    n = pv.size
    l_rgb = float(np.mean((1.0 - pv) * r))
    l_reg = float(np.mean(pv))
    grad = (-r + lambda_prior) / n
    l_consist = 0.0
    if use_consistency:
        if p_hat_detached is None:
            raise ValueError("consistency term requested without a rendered-image mask")
        ph = p_hat_detached.values
        if ph.shape != pv.shape:
            raise ValueError("rendered-image mask dimensions differ")
        l_consist = float(np.mean(pv * ph))
        grad = grad + ph / n
    loss = l_rgb + lambda_prior * l_reg + l_consist
    parts = {"rgb": l_rgb, "reg": l_reg, "consist": l_consist}
    return loss, grad, parts


def binarize(p: ProbabilityMask, threshold: float = 0.5) -> BinaryMask:
    """Strictly-greater thresholding."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return BinaryMask(p.values > threshold)


def tmp_step(model: TmpModel, frame, render_out, provider, schedule: TmpSchedule,
             iteration: int, last_reset_iteration: Optional[int], optimizer: Adam):
    """One Adam step on the TMP against the current render, or SKIPPED.

    Gradient reaches the weights only through the reference-image mask; the
    rendered-image mask is recomputed but detached.
    """
    if iteration < schedule.start_iteration:
        return SKIPPED
    if last_reset_iteration is not None and iteration - last_reset_iteration < schedule.pause_after_reset:
        return SKIPPED
    feats = provider.reference_features(frame)
    image = frame.image
    p, cache = predict_forward(model, feats, image.width, image.height, schedule.dilate_patches)
    p_hat = None
    if schedule.use_consistency:
        rfeats = provider.render_features(frame, render_out, iteration)
        if rfeats is None:
            raise ValueError(
                "feature provider cannot featurize renders; disable the consistency term"
            )
        p_hat = predict_mask(model, rfeats, image.width, image.height, schedule.dilate_patches)
    loss, g_p, parts = transient_loss(
        p, p_hat, image, render_out.color, schedule.lambda_prior, schedule.use_consistency
    )
    g_w, g_b = predict_backward(cache, g_p)
    params = {"tmp_weights": model.weights}
    grads = {"tmp_weights": g_w}
    if model.use_bias:
        bias_holder = np.array([model.bias])
        params["tmp_bias"] = bias_holder
        grads["tmp_bias"] = np.array([g_b])
    optimizer.step(params, grads)
    if model.use_bias:
        model.bias = float(params["tmp_bias"][0])
    return {"loss": loss, **parts}


def make_tmp_optimizer(schedule: TmpSchedule) -> Adam:
    return Adam({"tmp_weights": schedule.learning_rate, "tmp_bias": schedule.learning_rate})


def save_tmp(model: TmpModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(TMP_MAGIC)
        fh.write(struct.pack("<II", TMP_VERSION, model.dim))
        fh.write(model.weights.astype("<f4").tobytes())
        fh.write(struct.pack("<f", model.bias))


def load_tmp(path) -> TmpModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != TMP_MAGIC:
        raise ValueError(f"not a TMP checkpoint: {path}")
    version, dim = struct.unpack("<II", blob[4:12])
    if version != TMP_VERSION or len(blob) != 12 + 4 * dim + 4:
        raise ValueError(f"malformed TMP checkpoint: {path}")
    weights = np.frombuffer(blob, dtype="<f4", offset=12, count=dim).astype(np.float64)
    bias = struct.unpack("<f", blob[12 + 4 * dim:])[0]
    return TmpModel(weights, float(bias))

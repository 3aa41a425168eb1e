"""Gaussian-parameter optimization: masked photometric + depth-TV loss,
alternating splat/TMP schedule, and opacity resets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .adam import Adam
from .imaging import BinaryMask, ImageBuffer, psnr, ssim_with_grad
from .splat import GaussianCloud, depth_tv_loss, logit, render, render_backward, save_cloud
from .tmp import (
    SKIPPED,
    TmpModel,
    TmpSchedule,
    binarize,
    make_tmp_optimizer,
    predict_mask,
    tmp_step,
)
from . import imaging


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    total_iterations: int = 30000
    lambda_ssim: float = 0.2
    lambda_l1: float = 0.8
    lambda_depth: float = 0.05
    depth_loss_start: int = 500
    opacity_reset_interval: int = 3000
    propagation_iteration: int = 7000
    mask_dilation: int = 5          # N_e of the masked loss
    checkpoint_interval: int = 5000
    seed: int = 0
    lr_means: float = 5e-4
    lr_log_scales: float = 2.5e-3
    lr_quats: float = 1e-3
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-2

    def __post_init__(self):
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be non-negative")
        for name in ("lambda_ssim", "lambda_l1", "lambda_depth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def learning_rates(self) -> dict:
        return {
            "means": self.lr_means,
            "log_scales": self.lr_log_scales,
            "quats": self.lr_quats,
            "opacity_logits": self.lr_opacity,
            "color_logits": self.lr_color,
        }


@dataclass
class TrainState:
    iteration: int = 0
    last_reset_iteration: Optional[int] = None
    adam: Adam = None
    tmp_adam: Adam = None
    rng: np.random.Generator = None


def masked_loss(image: ImageBuffer, rendered: ImageBuffer, mask_star: BinaryMask,
                depth: ImageBuffer, cfg: TrainConfig, include_depth: bool = True):
    """Eq-style masked objective: SSIM + L1 on the unmasked region, TV on depth.

    ``mask_star`` marks pixels to EXCLUDE (already dilated). Returns
    (loss, parts, grad wrt rendered color, grad wrt depth).
    """
    if (image.height, image.width) != (rendered.height, rendered.width):
        raise ValueError("image dimensions differ")
    if (mask_star.height, mask_star.width) != (image.height, image.width):
        raise ValueError("mask dimensions differ")
    visible = ~mask_star.bits
    n_vis = int(visible.sum())
    grad_color = np.zeros_like(rendered.data)
    parts = {"ssim": 0.0, "l1": 0.0, "depth": 0.0, "fully_masked": n_vis == 0}

    if n_vis > 0:
        vis3 = visible[:, :, None].astype(np.float64)
        diff = rendered.data - image.data
        l1 = float(np.abs(diff * vis3).sum()) / (3.0 * n_vis)
        grad_color += cfg.lambda_l1 * np.sign(diff) * vis3 / (3.0 * n_vis)
        a = ImageBuffer.raw(image.data * vis3)
        b = ImageBuffer.raw(rendered.data * vis3)
        s, g_s = ssim_with_grad(a, b)
        grad_color += cfg.lambda_ssim * (-g_s) * vis3
        parts["ssim"] = 1.0 - s
        parts["l1"] = l1

    grad_depth = np.zeros((image.height, image.width))
    if include_depth and cfg.lambda_depth > 0:
        tv, g_tv = depth_tv_loss(depth)
        parts["depth"] = tv
        grad_depth = cfg.lambda_depth * g_tv

    loss = cfg.lambda_ssim * parts["ssim"] + cfg.lambda_l1 * parts["l1"] + cfg.lambda_depth * parts["depth"]
    return loss, parts, grad_color, grad_depth


def opacity_reset(cloud: GaussianCloud, adam: Optional[Adam] = None) -> GaussianCloud:
    """Reset every opacity to 0.01 (logit space) and clear its Adam state."""
    cloud.opacity_logits[:] = logit(0.01)
    if adam is not None:
        adam.reset_group("opacity_logits")
    return cloud


@dataclass
class TrainResult:
    cloud: GaussianCloud
    tmp_model: Optional[TmpModel]
    logs: list = field(default_factory=list)
    state: TrainState = None


def _cloud_params(cloud: GaussianCloud) -> dict:
    return {
        "means": cloud.means,
        "log_scales": cloud.log_scales,
        "quats": cloud.quats,
        "opacity_logits": cloud.opacity_logits,
        "color_logits": cloud.color_logits,
    }


def train(sequence, cloud: GaussianCloud, cfg: TrainConfig, *,
          tmp_model: Optional[TmpModel] = None,
          tmp_schedule: Optional[TmpSchedule] = None,
          provider=None,
          masks: Optional[dict] = None,
          iterations: Optional[int] = None,
          log_path=None,
          checkpoint_dir=None,
          log_every: int = 1) -> TrainResult:
    """Optimize the cloud on the sequence's training frames.

    Two modes: with ``masks`` supplied (final, post-refinement training) the
    TMP is left untouched and the given masks drive the loss; without them the
    live TMP mask of the sampled frame is used and the TMP trains in
    alternation with the splats.
    """
    iters = cfg.total_iterations if iterations is None else iterations
    state = TrainState(
        adam=Adam(cfg.learning_rates()),
        tmp_adam=make_tmp_optimizer(tmp_schedule) if tmp_schedule else None,
        rng=np.random.default_rng(cfg.seed),
    )
    train_frames = [sequence.frames[i] for i in sequence.train_indices]
    if not train_frames:
        raise ValueError("sequence has no training frames")
    use_tmp = masks is None and tmp_model is not None
    if use_tmp and provider is None:
        raise ValueError("TMP training requires a feature provider")

    dilated_supplied = {}
    if masks is not None:
        for idx, m in masks.items():
            dilated_supplied[idx] = imaging.dilate(m, cfg.mask_dilation)

    log_fh = open(log_path, "w") if log_path else None
    logs = []
    try:
        for i in range(iters):
            state.iteration = i
            frame = train_frames[int(state.rng.integers(len(train_frames)))]
            want_ids = use_tmp and tmp_schedule.use_consistency
            out = render(cloud, frame.camera, retain=True, with_ids=want_ids)

            if masks is not None:
                mask_star = dilated_supplied.get(
                    frame.index, BinaryMask.empty(frame.image.width, frame.image.height)
                )
            elif use_tmp:
                feats = provider.reference_features(frame)
                live = predict_mask(tmp_model, feats, frame.image.width, frame.image.height,
                                    tmp_schedule.dilate_patches)
                mask_star = imaging.dilate(binarize(live), cfg.mask_dilation)
            else:
                mask_star = BinaryMask.empty(frame.image.width, frame.image.height)

            include_depth = i >= cfg.depth_loss_start
            loss, parts, g_color, g_depth = masked_loss(
                frame.image, out.color, mask_star, out.depth, cfg, include_depth
            )
            if not np.isfinite(loss):
                dump = None
                if checkpoint_dir is not None:
                    dump = Path(checkpoint_dir) / "diverged.bin"
                    save_cloud(cloud, dump)
                raise TrainingDiverged(
                    f"non-finite loss at iteration {i}" + (f"; cloud dumped to {dump}" if dump else "")
                )
            grads = render_backward(out, g_color, g_depth)
            state.adam.step(_cloud_params(cloud), {
                "means": grads.means,
                "log_scales": grads.log_scales,
                "quats": grads.quats,
                "opacity_logits": grads.opacity_logits,
                "color_logits": grads.color_logits,
            })
            cloud.normalize_quats()

            tmp_info = None
            if use_tmp:
                tmp_info = tmp_step(tmp_model, frame, out, provider, tmp_schedule,
                                    i, state.last_reset_iteration, state.tmp_adam)

            if cfg.opacity_reset_interval > 0 and (i + 1) % cfg.opacity_reset_interval == 0 and (i + 1) < iters:
                opacity_reset(cloud, state.adam)
                state.last_reset_iteration = i + 1

            if i % log_every == 0 or i == iters - 1:
                rec = {
                    "iteration": i,
                    "frame": frame.index,
                    "loss": loss,
                    "ssim_term": parts["ssim"],
                    "l1_term": parts["l1"],
                    "depth_term": parts["depth"],
                    "psnr": psnr(frame.image, ImageBuffer(np.clip(out.color.data, 0.0, 1.0))),
                    "masked_fraction": float(mask_star.count) / (frame.image.width * frame.image.height),
                    "fully_masked": bool(parts["fully_masked"]),
                    "tmp": None if tmp_info in (None, SKIPPED) else tmp_info,
                }
                logs.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec, sort_keys=True) + "\n")

            if checkpoint_dir is not None and cfg.checkpoint_interval > 0 and (i + 1) % cfg.checkpoint_interval == 0:
                save_cloud(cloud, Path(checkpoint_dir) / f"checkpoint_{i + 1:06d}.bin")
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(cloud=cloud, tmp_model=tmp_model, logs=logs, state=state)


def tmp_masks_for_frames(tmp_model: TmpModel, provider, frames, dilate_patches: bool = True) -> dict:
    """Binarized TMP mask per frame index (no N_e dilation applied)."""
    out = {}
    for frame in frames:
        feats = provider.reference_features(frame)
        p = predict_mask(tmp_model, feats, frame.image.width, frame.image.height, dilate_patches)
        out[frame.index] = binarize(p)
    return out

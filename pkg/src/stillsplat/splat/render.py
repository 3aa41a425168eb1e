"""Depth-sorted alpha compositing of color/depth/alpha with analytic backward."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..imaging import ImageBuffer
from . import backend
from .cloud import Camera, GaussianCloud, sigmoid
from .project import Projection, project_backward, project_cloud

DEFAULT_T_STOP = 1e-4
DEFAULT_Q_CUTOFF = 9.0  # (3 sigma)^2


class RenderError(RuntimeError):
    pass


@dataclass
class ParamGrads:
    """Gradients for every optimizable Gaussian parameter."""

    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacity_logits: np.ndarray
    color_logits: np.ndarray

    def scaled(self, factor: float) -> "ParamGrads":
        return ParamGrads(
            self.means * factor,
            self.log_scales * factor,
            self.quats * factor,
            self.opacity_logits * factor,
            self.color_logits * factor,
        )


@dataclass
class RenderContext:
    cloud: GaussianCloud
    cam: Camera
    proj: Projection
    order: np.ndarray
    mean2d_v: np.ndarray
    conic_v: np.ndarray
    opac_v: np.ndarray
    colors_v: np.ndarray
    depths_v: np.ndarray
    radii_v: np.ndarray
    t_stop: float
    q_cutoff: float
    totals_color: np.ndarray
    totals_depth: np.ndarray
    totals_alpha: np.ndarray
    kernel_module: object


@dataclass
class RenderOutput:
    """Composited color/depth/alpha plus (optionally) retained backward state."""

    color: ImageBuffer
    depth: ImageBuffer
    alpha: ImageBuffer
    t_final: np.ndarray
    id_map: Optional[np.ndarray] = None
    ctx: Optional[RenderContext] = None

    @property
    def width(self) -> int:
        return self.color.width

    @property
    def height(self) -> int:
        return self.color.height


def render(
    cloud: GaussianCloud,
    cam: Camera,
    *,
    retain: bool = False,
    with_ids: bool = False,
    t_stop: float = DEFAULT_T_STOP,
    q_cutoff: float = DEFAULT_Q_CUTOFF,
    kernel_backend: str | None = None,
) -> RenderOutput:
    """Render the cloud through the camera (black background, zero alpha base).

    ``retain=True`` keeps the state needed by :func:`render_backward`;
    ``with_ids=True`` additionally composites an argmax-contribution map of
    the cloud's ``class_ids``.
    """
    _, kern = backend.get_backend(kernel_backend)
    proj = project_cloud(cloud, cam)
    order = proj.order
    mean2d_v = np.ascontiguousarray(proj.mean2d[order])
    conic_v = np.ascontiguousarray(proj.conic[order])
    opac_v = np.ascontiguousarray(sigmoid(cloud.opacity_logits)[order])
    colors_v = np.ascontiguousarray(sigmoid(cloud.color_logits)[order])
    depths_v = np.ascontiguousarray(proj.depth[order])
    radii_v = np.ascontiguousarray(proj.radius[order])
    ids_v = np.ascontiguousarray(cloud.class_ids[order], dtype=np.int32)

    color, depth, alpha, t_final, idmap = kern.composite_forward(
        mean2d_v, conic_v, opac_v, colors_v, depths_v, radii_v, ids_v,
        cam.width, cam.height, t_stop, q_cutoff, bool(with_ids),
    )
    ctx = None
    if retain:
        ctx = RenderContext(
            cloud=cloud, cam=cam, proj=proj, order=order,
            mean2d_v=mean2d_v, conic_v=conic_v, opac_v=opac_v,
            colors_v=colors_v, depths_v=depths_v, radii_v=radii_v,
            t_stop=t_stop, q_cutoff=q_cutoff,
            totals_color=color, totals_depth=depth, totals_alpha=alpha,
            kernel_module=kern,
        )
    return RenderOutput(
        color=ImageBuffer.raw(color),
        depth=ImageBuffer.raw(depth[:, :, None]),
        alpha=ImageBuffer.raw(alpha[:, :, None]),
        t_final=t_final,
        id_map=idmap,
        ctx=ctx,
    )


def render_backward(
    out: RenderOutput,
    grad_color: np.ndarray,
    grad_depth: Optional[np.ndarray] = None,
    grad_alpha: Optional[np.ndarray] = None,
) -> ParamGrads:
    """Pull per-pixel loss gradients back to all Gaussian parameters."""
    ctx = out.ctx
    if ctx is None:
        raise RenderError("render_backward requires render(..., retain=True)")
    cam = ctx.cam
    h, w = cam.height, cam.width
    grad_color = np.ascontiguousarray(grad_color, dtype=np.float64).reshape(h, w, 3)
    if grad_depth is None:
        grad_depth = np.zeros((h, w), dtype=np.float64)
    else:
        grad_depth = np.ascontiguousarray(grad_depth, dtype=np.float64).reshape(h, w)
    if grad_alpha is None:
        grad_alpha = np.zeros((h, w), dtype=np.float64)
    else:
        grad_alpha = np.ascontiguousarray(grad_alpha, dtype=np.float64).reshape(h, w)

    g_mu_v, g_conic_v, g_opac_v, g_colors_v, g_depths_v = ctx.kernel_module.composite_backward(
        ctx.mean2d_v, ctx.conic_v, ctx.opac_v, ctx.colors_v, ctx.depths_v, ctx.radii_v,
        w, h, ctx.t_stop, ctx.q_cutoff,
        ctx.totals_color, ctx.totals_depth, ctx.totals_alpha,
        grad_color, grad_depth, grad_alpha,
    )

    cloud = ctx.cloud
    n = cloud.n
    g_mean2d = np.zeros((n, 2), dtype=np.float64)
    g_conic = np.zeros((n, 3), dtype=np.float64)
    g_depth_full = np.zeros(n, dtype=np.float64)
    g_mean2d[ctx.order] = g_mu_v
    g_conic[ctx.order] = g_conic_v
    g_depth_full[ctx.order] = g_depths_v

    g_means, g_log_scales, g_quats = project_backward(
        ctx.proj, cloud, cam, g_mean2d, g_conic, g_depth_full
    )

    opac = sigmoid(cloud.opacity_logits)
    g_opacity_logits = np.zeros(n, dtype=np.float64)
    g_opacity_logits[ctx.order] = g_opac_v
    g_opacity_logits *= opac * (1.0 - opac)

    colors = sigmoid(cloud.color_logits)
    g_color_logits = np.zeros((n, 3), dtype=np.float64)
    g_color_logits[ctx.order] = g_colors_v
    g_color_logits *= colors * (1.0 - colors)

    return ParamGrads(g_means, g_log_scales, g_quats, g_opacity_logits, g_color_logits)


def depth_tv_loss(depth: ImageBuffer):
    """Anisotropic total variation of a depth map: value and gradient image.

    Forward differences, means over valid positions, zero subgradient at ties.
    """
    if depth.channels != 1:
        raise ValueError("depth TV expects a 1-channel image")
    d = depth.data[:, :, 0]
    h, w = d.shape
    grad = np.zeros_like(d)
    loss = 0.0
    if w > 1:
        dx = d[:, 1:] - d[:, :-1]
        nx = dx.size
        loss += float(np.abs(dx).sum()) / nx
        sx = np.sign(dx) / nx
        grad[:, 1:] += sx
        grad[:, :-1] -= sx
    if h > 1:
        dy = d[1:, :] - d[:-1, :]
        ny = dy.size
        loss += float(np.abs(dy).sum()) / ny
        sy = np.sign(dy) / ny
        grad[1:, :] += sy
        grad[:-1, :] -= sy
    return loss, grad

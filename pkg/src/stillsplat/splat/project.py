"""Perspective projection of 3-D Gaussians to screen space, with analytic backward.

The 2-D covariance is the first-order propagation ``J W Sigma W^T J^T`` of the
3-D covariance through the world-to-camera rotation ``W`` and the projection
Jacobian ``J``. Its eigenvalues are floored (anti-aliasing) before inversion;
the floor is applied in the spectral domain without forming eigenvectors,
which keeps the backward pass a plain chain rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import Camera, Gaussian, GaussianCloud

EIGENVALUE_FLOOR = 0.05  # px^2
CUTOFF_SIGMA = 3.0
_DEGENERATE_R = 1e-12


class Culled:
    """Sentinel for a Gaussian that does not reach the image."""

    def __repr__(self):
        return "CULLED"


CULLED = Culled()


@dataclass(frozen=True)
class Projected2DGaussian:
    mean2d: np.ndarray   # (2,)
    cov2d: np.ndarray    # (2, 2) after the eigenvalue floor
    depth: float
    radius: float        # 3-sigma screen footprint radius in px


def quat_to_rot(quats: np.ndarray) -> np.ndarray:
    """(N, 4) unit quaternions (wxyz) to (N, 3, 3) rotation matrices."""
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    rot = np.empty((quats.shape[0], 3, 3), dtype=np.float64)
    rot[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    rot[:, 0, 1] = 2.0 * (x * y - w * z)
    rot[:, 0, 2] = 2.0 * (x * z + w * y)
    rot[:, 1, 0] = 2.0 * (x * y + w * z)
    rot[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    rot[:, 1, 2] = 2.0 * (y * z - w * x)
    rot[:, 2, 0] = 2.0 * (x * z - w * y)
    rot[:, 2, 1] = 2.0 * (y * z + w * x)
    rot[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return rot


def quat_rot_backward(quats: np.ndarray, g_rot: np.ndarray) -> np.ndarray:
    """Gradient of a rotation-matrix loss wrt the (unit) quaternion components."""
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    G = g_rot
    gw = 2.0 * (-z * G[:, 0, 1] + y * G[:, 0, 2] + z * G[:, 1, 0]
                - x * G[:, 1, 2] - y * G[:, 2, 0] + x * G[:, 2, 1])
    gx = 2.0 * (y * G[:, 0, 1] + z * G[:, 0, 2] + y * G[:, 1, 0]
                - 2.0 * x * G[:, 1, 1] - w * G[:, 1, 2] + z * G[:, 2, 0]
                + w * G[:, 2, 1] - 2.0 * x * G[:, 2, 2])
    gy = 2.0 * (-2.0 * y * G[:, 0, 0] + x * G[:, 0, 1] + w * G[:, 0, 2]
                + x * G[:, 1, 0] + z * G[:, 1, 2] - w * G[:, 2, 0]
                + z * G[:, 2, 1] - 2.0 * y * G[:, 2, 2])
    gz = 2.0 * (-2.0 * z * G[:, 0, 0] - w * G[:, 0, 1] + x * G[:, 0, 2]
                + w * G[:, 1, 0] - 2.0 * z * G[:, 1, 1] + y * G[:, 1, 2]
                + x * G[:, 2, 0] + y * G[:, 2, 1])
    return np.stack([gw, gx, gy, gz], axis=1)


def _floor_eigenvalues(cov: np.ndarray, floor: float):
    """Clamp both eigenvalues of symmetric 2x2 matrices at ``floor``.

    Returns the floored matrices plus the scalars the backward pass needs.
    One spectral identity does all the work: with mean m, half-gap r and the
    clamped counterparts mt, rt, the result is ``mt*I + (rt/r) * (cov - m*I)``.
    """
    a = cov[:, 0, 0]
    b = cov[:, 0, 1]
    d = cov[:, 1, 1]
    m = 0.5 * (a + d)
    h = 0.5 * (a - d)
    r = np.sqrt(h * h + b * b)
    lam_p = m + r
    lam_m = m - r
    lam_pc = np.maximum(lam_p, floor)
    lam_mc = np.maximum(lam_m, floor)
    mt = 0.5 * (lam_pc + lam_mc)
    rt = 0.5 * (lam_pc - lam_mc)
    degenerate = r < _DEGENERATE_R
    safe_r = np.where(degenerate, 1.0, r)
    scale = np.where(degenerate, np.where(m >= floor, 1.0, 0.0), rt / safe_r)
    out = np.empty_like(cov)
    out[:, 0, 0] = mt + h * scale
    out[:, 0, 1] = b * scale
    out[:, 1, 0] = b * scale
    out[:, 1, 1] = mt - h * scale
    cache = {
        "h": h, "b": b, "r": safe_r, "scale": scale,
        "pass_p": lam_p >= floor, "pass_m": lam_m >= floor,
        "degenerate": degenerate, "deg_pass": m >= floor,
    }
    return out, lam_pc, cache


def _floor_backward(g_out: np.ndarray, cache) -> np.ndarray:
    """Chain rule through :func:`_floor_eigenvalues` (symmetric full-matrix grads)."""
    h, b, r, scale = cache["h"], cache["b"], cache["r"], cache["scale"]
    g00 = g_out[:, 0, 0]
    goff = g_out[:, 0, 1] + g_out[:, 1, 0]
    g11 = g_out[:, 1, 1]
    g_mt = g00 + g11
    g_scale = (g00 - g11) * h + goff * b
    g_h = (g00 - g11) * scale
    g_b = goff * scale
    g_rt = g_scale / r
    g_r = -g_scale * scale / r
    g_lpc = 0.5 * (g_mt + g_rt)
    g_lmc = 0.5 * (g_mt - g_rt)
    g_lp = np.where(cache["pass_p"], g_lpc, 0.0)
    g_lm = np.where(cache["pass_m"], g_lmc, 0.0)
    g_m = g_lp + g_lm
    g_r = g_r + (g_lp - g_lm)
    g_h = g_h + g_r * h / r
    g_b = g_b + g_r * b / r
    g_a = 0.5 * g_m + 0.5 * g_h
    g_d = 0.5 * g_m - 0.5 * g_h
    # Isotropic matrices never rotate under the floor: identity or zero grad.
    deg = cache["degenerate"]
    if deg.any():
        keep = deg & cache["deg_pass"]
        kill = deg & ~cache["deg_pass"]
        g_a = np.where(keep, g00, np.where(kill, 0.0, g_a))
        g_d = np.where(keep, g11, np.where(kill, 0.0, g_d))
        g_b = np.where(keep, goff, np.where(kill, 0.0, g_b))
    grad = np.empty_like(g_out)
    grad[:, 0, 0] = g_a
    grad[:, 0, 1] = 0.5 * g_b
    grad[:, 1, 0] = 0.5 * g_b
    grad[:, 1, 1] = g_d
    return grad


@dataclass
class Projection:
    """Everything the rasterization kernels and the backward pass consume."""

    visible: np.ndarray       # (N,) bool
    order: np.ndarray         # visible indices sorted by (depth, index)
    mean2d: np.ndarray        # (N, 2)
    cov2d: np.ndarray         # (N, 2, 2) floored
    conic: np.ndarray         # (N, 3) packed (A00, A01, A11) of cov2d^-1
    depth: np.ndarray         # (N,)
    radius: np.ndarray        # (N,)
    # retained intermediates for the backward pass
    t_cam: np.ndarray
    rot_g: np.ndarray
    scales: np.ndarray
    sigma_cam: np.ndarray
    cov2d_raw: np.ndarray
    jac: np.ndarray
    floor_cache: dict
    quats_n: np.ndarray
    quat_norm: np.ndarray
    rc_x: np.ndarray
    rc_y: np.ndarray
    clamped_x: np.ndarray
    clamped_y: np.ndarray


def project_cloud(cloud: GaussianCloud, cam: Camera) -> Projection:
    n = cloud.n
    R = cam.rotation
    t_cam = cloud.means @ R.T + cam.translation
    tx, ty, tz = t_cam[:, 0], t_cam[:, 1], t_cam[:, 2]
    in_front = tz > cam.near
    safe_z = np.where(in_front, tz, 1.0)

    quat_norm = np.linalg.norm(cloud.quats, axis=1)
    quats_n = cloud.quats / quat_norm[:, None]
    rot_g = quat_to_rot(quats_n)
    scales = np.exp(cloud.log_scales)
    M = rot_g * scales[:, None, :]
    sigma = np.einsum("nij,nkj->nik", M, M)
    sigma_cam = np.einsum("ij,njk,lk->nil", R, sigma, R)

    inv_z = 1.0 / safe_z
    inv_z2 = inv_z * inv_z
    # linearize J at a frustum-clamped ray so far off-axis Gaussians cannot
    # produce unbounded screen covariances (the ratio clamp saturates, with a
    # zero subgradient, well outside anything that reaches the image)
    lim_x = 1.3 * 0.5 * cam.width / cam.fx
    lim_y = 1.3 * 0.5 * cam.height / cam.fy
    ratio_x = tx * inv_z
    ratio_y = ty * inv_z
    rc_x = np.clip(ratio_x, -lim_x, lim_x)
    rc_y = np.clip(ratio_y, -lim_y, lim_y)
    clamped_x = rc_x != ratio_x
    clamped_y = rc_y != ratio_y
    jac = np.zeros((n, 2, 3), dtype=np.float64)
    jac[:, 0, 0] = cam.fx * inv_z
    jac[:, 0, 2] = -cam.fx * rc_x * inv_z
    jac[:, 1, 1] = cam.fy * inv_z
    jac[:, 1, 2] = -cam.fy * rc_y * inv_z
    cov2d_raw = np.einsum("nij,njk,nlk->nil", jac, sigma_cam, jac)
    cov2d, lam_max, floor_cache = _floor_eigenvalues(cov2d_raw, EIGENVALUE_FLOOR)

    mean2d = np.empty((n, 2), dtype=np.float64)
    mean2d[:, 0] = cam.fx * tx * inv_z + cam.cx
    mean2d[:, 1] = cam.fy * ty * inv_z + cam.cy
    radius = CUTOFF_SIGMA * np.sqrt(lam_max)

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 0, 1]
    conic = np.empty((n, 3), dtype=np.float64)
    conic[:, 0] = cov2d[:, 1, 1] / det
    conic[:, 1] = -cov2d[:, 0, 1] / det
    conic[:, 2] = cov2d[:, 0, 0] / det

    on_image = (
        (mean2d[:, 0] + radius >= -0.5)
        & (mean2d[:, 0] - radius <= cam.width - 0.5)
        & (mean2d[:, 1] + radius >= -0.5)
        & (mean2d[:, 1] - radius <= cam.height - 0.5)
    )
    visible = in_front & on_image
    vis_idx = np.nonzero(visible)[0]
    order = vis_idx[np.argsort(tz[vis_idx], kind="stable")]

    return Projection(
        visible=visible, order=order, mean2d=mean2d, cov2d=cov2d, conic=conic,
        depth=tz.copy(), radius=radius, t_cam=t_cam, rot_g=rot_g, scales=scales,
        sigma_cam=sigma_cam, cov2d_raw=cov2d_raw, jac=jac, floor_cache=floor_cache,
        quats_n=quats_n, quat_norm=quat_norm,
        rc_x=rc_x, rc_y=rc_y, clamped_x=clamped_x, clamped_y=clamped_y,
    )


def project_gaussian(g: Gaussian, cam: Camera):
    """Project one Gaussian; returns :data:`CULLED` when it misses the image."""
    proj = project_cloud(g.as_cloud(), cam)
    if not proj.visible[0]:
        return CULLED
    return Projected2DGaussian(
        mean2d=proj.mean2d[0].copy(),
        cov2d=proj.cov2d[0].copy(),
        depth=float(proj.depth[0]),
        radius=float(proj.radius[0]),
    )


def project_backward(
    proj: Projection,
    cloud: GaussianCloud,
    cam: Camera,
    g_mean2d: np.ndarray,
    g_conic: np.ndarray,
    g_depth: np.ndarray,
):
    """Map screen-space gradients back to means, log-scales and quaternions.

    ``g_conic`` is packed (dA00, dA01_scalar, dA11) against the quadratic form
    ``q = A00 dx^2 + 2 A01 dx dy + A11 dy^2``.
    """
    R = cam.rotation
    tx, ty, tz = proj.t_cam[:, 0], proj.t_cam[:, 1], proj.t_cam[:, 2]
    safe_z = np.where(tz > cam.near, tz, 1.0)
    inv_z = 1.0 / safe_z
    inv_z2 = inv_z * inv_z

    # conic -> floored covariance: dL/dS = -A G A for symmetric A, G.
    A = np.empty_like(proj.cov2d)
    A[:, 0, 0] = proj.conic[:, 0]
    A[:, 0, 1] = proj.conic[:, 1]
    A[:, 1, 0] = proj.conic[:, 1]
    A[:, 1, 1] = proj.conic[:, 2]
    G_A = np.empty_like(A)
    G_A[:, 0, 0] = g_conic[:, 0]
    G_A[:, 0, 1] = 0.5 * g_conic[:, 1]
    G_A[:, 1, 0] = 0.5 * g_conic[:, 1]
    G_A[:, 1, 1] = g_conic[:, 2]
    g_cov2d = -np.einsum("nij,njk,nkl->nil", A, G_A, A)

    g_cov_raw = _floor_backward(g_cov2d, proj.floor_cache)

    # cov_raw = J S_cam J^T
    g_jac = 2.0 * np.einsum("nij,njk,nkl->nil", g_cov_raw, proj.jac, proj.sigma_cam)
    g_sigma_cam = np.einsum("nji,njk,nkl->nil", proj.jac, g_cov_raw, proj.jac)

    # assemble t_cam gradient: projection of the mean, depth, and J's dependence
    g_t = np.zeros_like(proj.t_cam)
    g_t[:, 0] = cam.fx * inv_z * g_mean2d[:, 0]
    g_t[:, 1] = cam.fy * inv_z * g_mean2d[:, 1]
    g_t[:, 2] = (
        -cam.fx * tx * inv_z2 * g_mean2d[:, 0]
        - cam.fy * ty * inv_z2 * g_mean2d[:, 1]
        + g_depth
    )
    # J02 = -fx * rc_x / z with rc_x the clamped ray ratio: when the clamp is
    # saturated the ratio contributes nothing, leaving only the direct 1/z path
    free_x = ~proj.clamped_x
    free_y = ~proj.clamped_y
    g_t[:, 0] += np.where(free_x, g_jac[:, 0, 2] * (-cam.fx * inv_z2), 0.0)
    g_t[:, 1] += np.where(free_y, g_jac[:, 1, 2] * (-cam.fy * inv_z2), 0.0)
    g_t[:, 2] += g_jac[:, 0, 0] * (-cam.fx * inv_z2) + g_jac[:, 1, 1] * (-cam.fy * inv_z2)
    g_t[:, 2] += g_jac[:, 0, 2] * cam.fx * inv_z2 * (
        proj.rc_x + np.where(free_x, tx * inv_z, 0.0)
    )
    g_t[:, 2] += g_jac[:, 1, 2] * cam.fy * inv_z2 * (
        proj.rc_y + np.where(free_y, ty * inv_z, 0.0)
    )
    g_means = g_t @ R

    # S_cam = R Sigma R^T ; Sigma = M M^T ; M = R_g diag(s)
    g_sigma = np.einsum("ji,njk,kl->nil", R, g_sigma_cam, R)
    M = proj.rot_g * proj.scales[:, None, :]
    g_M = 2.0 * np.einsum("nij,njk->nik", g_sigma, M)
    g_rot_g = g_M * proj.scales[:, None, :]
    g_scales = np.einsum("nij,nij->nj", proj.rot_g, g_M)
    g_log_scales = g_scales * proj.scales

    g_qn = quat_rot_backward(proj.quats_n, g_rot_g)
    dot = np.einsum("ni,ni->n", proj.quats_n, g_qn)
    g_quats = (g_qn - proj.quats_n * dot[:, None]) / proj.quat_norm[:, None]

    # culled Gaussians received no kernel gradient, but scrub any numerical
    # residue from the vectorized math on their rows
    invisible = ~proj.visible
    if invisible.any():
        g_means[invisible] = 0.0
        g_log_scales[invisible] = 0.0
        g_quats[invisible] = 0.0
    return g_means, g_log_scales, g_quats

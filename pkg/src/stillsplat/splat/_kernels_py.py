"""Pure-Python (numpy) rasterization kernels.

These mirror the compiled kernels operation-for-operation so both backends
produce bit-identical images: per pixel, contributors are visited in the same
depth order and combined with the same float64 arithmetic. Exponentials go
through libm (``math.exp``) because numpy's SIMD ``exp`` differs from libm in
the last ulp on some platforms.
"""
from __future__ import annotations

import math

import numpy as np

_libm_exp = np.frompyfunc(math.exp, 1, 1)


def _exp(x: np.ndarray) -> np.ndarray:
    return _libm_exp(x).astype(np.float64)


def _rect(mu_x, mu_y, rad, width, height):
    x0 = max(0, int(math.ceil(mu_x - rad)))
    x1 = min(width - 1, int(math.floor(mu_x + rad)))
    y0 = max(0, int(math.ceil(mu_y - rad)))
    y1 = min(height - 1, int(math.floor(mu_y + rad)))
    return x0, x1, y0, y1


def composite_forward(
    mean2d, conic, opac, colors, depths, radii, class_ids,
    width, height, t_stop, q_cutoff, want_ids,
):
    m = mean2d.shape[0]
    color = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.zeros((height, width), dtype=np.float64)
    alpha = np.zeros((height, width), dtype=np.float64)
    trans = np.ones((height, width), dtype=np.float64)
    if want_ids:
        idmap = np.full((height, width), -1, dtype=np.int32)
        best = np.zeros((height, width), dtype=np.float64)
    else:
        idmap = None
        best = None
    for g in range(m):
        x0, x1, y0, y1 = _rect(mean2d[g, 0], mean2d[g, 1], radii[g], width, height)
        if x0 > x1 or y0 > y1:
            continue
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - mean2d[g, 0]
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - mean2d[g, 1]
        a, b, c = conic[g]
        dxg, dyg = np.meshgrid(dx, dy)
        q = a * dxg * dxg + 2.0 * b * dxg * dyg + c * dyg * dyg
        t_rect = trans[y0:y1 + 1, x0:x1 + 1]
        active = (q <= q_cutoff) & (t_rect >= t_stop)
        if not active.any():
            continue
        w = opac[g] * _exp(-0.5 * q)
        contrib = t_rect * w * active
        color[y0:y1 + 1, x0:x1 + 1] += contrib[:, :, None] * colors[g][None, None, :]
        depth[y0:y1 + 1, x0:x1 + 1] += contrib * depths[g]
        alpha[y0:y1 + 1, x0:x1 + 1] += contrib
        if want_ids:
            b_rect = best[y0:y1 + 1, x0:x1 + 1]
            better = contrib > b_rect
            best[y0:y1 + 1, x0:x1 + 1] = np.where(better, contrib, b_rect)
            id_rect = idmap[y0:y1 + 1, x0:x1 + 1]
            idmap[y0:y1 + 1, x0:x1 + 1] = np.where(better, class_ids[g], id_rect)
        trans[y0:y1 + 1, x0:x1 + 1] = t_rect * (1.0 - w * active)
    return color, depth, alpha, trans, idmap


def composite_backward(
    mean2d, conic, opac, colors, depths, radii,
    width, height, t_stop, q_cutoff,
    totals_color, totals_depth, totals_alpha,
    grad_color, grad_depth, grad_alpha,
):
    """Gradients of an upstream pixel loss wrt the screen-space Gaussian params.

    Runs the same front-to-back sweep as the forward pass; the behind-this-
    contributor sums needed by the transmittance chain come from the totals
    minus a running prefix.
    """
    m = mean2d.shape[0]
    g_mean2d = np.zeros((m, 2), dtype=np.float64)
    g_conic = np.zeros((m, 3), dtype=np.float64)
    g_opac = np.zeros(m, dtype=np.float64)
    g_colors = np.zeros((m, 3), dtype=np.float64)
    g_depths = np.zeros(m, dtype=np.float64)

    trans = np.ones((height, width), dtype=np.float64)
    prefix_c = np.zeros((height, width, 3), dtype=np.float64)
    prefix_d = np.zeros((height, width), dtype=np.float64)
    prefix_a = np.zeros((height, width), dtype=np.float64)

    for g in range(m):
        x0, x1, y0, y1 = _rect(mean2d[g, 0], mean2d[g, 1], radii[g], width, height)
        if x0 > x1 or y0 > y1:
            continue
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - mean2d[g, 0]
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - mean2d[g, 1]
        a, b, c = conic[g]
        dxg, dyg = np.meshgrid(dx, dy)
        q = a * dxg * dxg + 2.0 * b * dxg * dyg + c * dyg * dyg
        t_rect = trans[y0:y1 + 1, x0:x1 + 1]
        active = (q <= q_cutoff) & (t_rect >= t_stop)
        if not active.any():
            continue
        gauss = _exp(-0.5 * q)
        w = opac[g] * gauss
        contrib = t_rect * w * active

        pc = prefix_c[y0:y1 + 1, x0:x1 + 1]
        pd = prefix_d[y0:y1 + 1, x0:x1 + 1]
        pa = prefix_a[y0:y1 + 1, x0:x1 + 1]
        pc += contrib[:, :, None] * colors[g][None, None, :]
        pd += contrib * depths[g]
        pa += contrib

        gc = grad_color[y0:y1 + 1, x0:x1 + 1, :]
        gd = grad_depth[y0:y1 + 1, x0:x1 + 1]
        ga = grad_alpha[y0:y1 + 1, x0:x1 + 1]
        tc = totals_color[y0:y1 + 1, x0:x1 + 1, :]
        td = totals_depth[y0:y1 + 1, x0:x1 + 1]
        ta = totals_alpha[y0:y1 + 1, x0:x1 + 1]

        inv_one_minus_w = 1.0 / (1.0 - w)
        dldw = np.zeros_like(q)
        for ch in range(3):
            dldw += gc[:, :, ch] * (t_rect * colors[g, ch] - (tc[:, :, ch] - pc[:, :, ch]) * inv_one_minus_w)
        dldw += gd * (t_rect * depths[g] - (td - pd) * inv_one_minus_w)
        dldw += ga * (t_rect - (ta - pa) * inv_one_minus_w)
        dldw *= active

        for ch in range(3):
            g_colors[g, ch] += float(np.sum(gc[:, :, ch] * contrib))
        g_depths[g] += float(np.sum(gd * contrib))
        g_opac[g] += float(np.sum(dldw * gauss))

        gq = -0.5 * w * dldw
        g_mean2d[g, 0] += float(np.sum(gq * (-(2.0 * a * dxg + 2.0 * b * dyg))))
        g_mean2d[g, 1] += float(np.sum(gq * (-(2.0 * b * dxg + 2.0 * c * dyg))))
        g_conic[g, 0] += float(np.sum(gq * dxg * dxg))
        g_conic[g, 1] += float(np.sum(gq * 2.0 * dxg * dyg))
        g_conic[g, 2] += float(np.sum(gq * dyg * dyg))

        trans[y0:y1 + 1, x0:x1 + 1] = t_rect * (1.0 - w * active)
    return g_mean2d, g_conic, g_opac, g_colors, g_depths

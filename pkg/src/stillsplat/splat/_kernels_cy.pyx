# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rasterization kernels.

Operation-for-operation identical to ``_kernels_py`` (same contributor order,
same float64 arithmetic, libm exp), so the two backends render bit-identical
images.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor

cnp.import_array()


def composite_forward(
    double[:, ::1] mean2d, double[:, ::1] conic, double[::1] opac,
    double[:, ::1] colors, double[::1] depths, double[::1] radii,
    int[::1] class_ids,
    int width, int height, double t_stop, double q_cutoff, bint want_ids,
):
    cdef int m = mean2d.shape[0]
    color_arr = np.zeros((height, width, 3), dtype=np.float64)
    depth_arr = np.zeros((height, width), dtype=np.float64)
    alpha_arr = np.zeros((height, width), dtype=np.float64)
    trans_arr = np.ones((height, width), dtype=np.float64)
    cdef double[:, :, ::1] color = color_arr
    cdef double[:, ::1] depth = depth_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] trans = trans_arr

    idmap_arr = None
    best_arr = None
    cdef int[:, ::1] idmap = None
    cdef double[:, ::1] best = None
    if want_ids:
        idmap_arr = np.full((height, width), -1, dtype=np.int32)
        best_arr = np.zeros((height, width), dtype=np.float64)
        idmap = idmap_arr
        best = best_arr

    cdef int g, x0, x1, y0, y1, px, py
    cdef double mux, muy, rad, a, b, c, o, d, c0, c1, c2
    cdef double dx, dy, q, w, t, contrib
    cdef int gid

    for g in range(m):
        mux = mean2d[g, 0]
        muy = mean2d[g, 1]
        rad = radii[g]
        x0 = <int>ceil(mux - rad)
        if x0 < 0:
            x0 = 0
        x1 = <int>floor(mux + rad)
        if x1 > width - 1:
            x1 = width - 1
        y0 = <int>ceil(muy - rad)
        if y0 < 0:
            y0 = 0
        y1 = <int>floor(muy + rad)
        if y1 > height - 1:
            y1 = height - 1
        if x0 > x1 or y0 > y1:
            continue
        a = conic[g, 0]
        b = conic[g, 1]
        c = conic[g, 2]
        o = opac[g]
        d = depths[g]
        c0 = colors[g, 0]
        c1 = colors[g, 1]
        c2 = colors[g, 2]
        gid = class_ids[g] if want_ids else 0
        for py in range(y0, y1 + 1):
            dy = py - muy
            for px in range(x0, x1 + 1):
                t = trans[py, px]
                if t < t_stop:
                    continue
                dx = px - mux
                q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                if q > q_cutoff:
                    continue
                w = o * exp(-0.5 * q)
                contrib = t * w
                color[py, px, 0] += contrib * c0
                color[py, px, 1] += contrib * c1
                color[py, px, 2] += contrib * c2
                depth[py, px] += contrib * d
                alpha[py, px] += contrib
                if want_ids:
                    if contrib > best[py, px]:
                        best[py, px] = contrib
                        idmap[py, px] = gid
                trans[py, px] = t * (1.0 - w)
    return color_arr, depth_arr, alpha_arr, trans_arr, idmap_arr


def composite_backward(
    double[:, ::1] mean2d, double[:, ::1] conic, double[::1] opac,
    double[:, ::1] colors, double[::1] depths, double[::1] radii,
    int width, int height, double t_stop, double q_cutoff,
    double[:, :, ::1] totals_color, double[:, ::1] totals_depth,
    double[:, ::1] totals_alpha,
    double[:, :, ::1] grad_color, double[:, ::1] grad_depth,
    double[:, ::1] grad_alpha,
):
    cdef int m = mean2d.shape[0]
    g_mean2d_arr = np.zeros((m, 2), dtype=np.float64)
    g_conic_arr = np.zeros((m, 3), dtype=np.float64)
    g_opac_arr = np.zeros(m, dtype=np.float64)
    g_colors_arr = np.zeros((m, 3), dtype=np.float64)
    g_depths_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] g_mean2d = g_mean2d_arr
    cdef double[:, ::1] g_conic = g_conic_arr
    cdef double[::1] g_opac = g_opac_arr
    cdef double[:, ::1] g_colors = g_colors_arr
    cdef double[::1] g_depths = g_depths_arr

    trans_arr = np.ones((height, width), dtype=np.float64)
    prefix_c_arr = np.zeros((height, width, 3), dtype=np.float64)
    prefix_d_arr = np.zeros((height, width), dtype=np.float64)
    prefix_a_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] trans = trans_arr
    cdef double[:, :, ::1] prefix_c = prefix_c_arr
    cdef double[:, ::1] prefix_d = prefix_d_arr
    cdef double[:, ::1] prefix_a = prefix_a_arr

    cdef int g, x0, x1, y0, y1, px, py
    cdef double mux, muy, rad, a, b, c, o, d, c0, c1, c2
    cdef double dx, dy, q, w, t, contrib, gauss, inv1mw, dldw, gq

    for g in range(m):
        mux = mean2d[g, 0]
        muy = mean2d[g, 1]
        rad = radii[g]
        x0 = <int>ceil(mux - rad)
        if x0 < 0:
            x0 = 0
        x1 = <int>floor(mux + rad)
        if x1 > width - 1:
            x1 = width - 1
        y0 = <int>ceil(muy - rad)
        if y0 < 0:
            y0 = 0
        y1 = <int>floor(muy + rad)
        if y1 > height - 1:
            y1 = height - 1
        if x0 > x1 or y0 > y1:
            continue
        a = conic[g, 0]
        b = conic[g, 1]
        c = conic[g, 2]
        o = opac[g]
        d = depths[g]
        c0 = colors[g, 0]
        c1 = colors[g, 1]
        c2 = colors[g, 2]
        for py in range(y0, y1 + 1):
            dy = py - muy
            for px in range(x0, x1 + 1):
                t = trans[py, px]
                if t < t_stop:
                    continue
                dx = px - mux
                q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                if q > q_cutoff:
                    continue
                gauss = exp(-0.5 * q)
                w = o * gauss
                contrib = t * w

                prefix_c[py, px, 0] += contrib * c0
                prefix_c[py, px, 1] += contrib * c1
                prefix_c[py, px, 2] += contrib * c2
                prefix_d[py, px] += contrib * d
                prefix_a[py, px] += contrib

                inv1mw = 1.0 / (1.0 - w)
                dldw = grad_color[py, px, 0] * (t * c0 - (totals_color[py, px, 0] - prefix_c[py, px, 0]) * inv1mw)
                dldw += grad_color[py, px, 1] * (t * c1 - (totals_color[py, px, 1] - prefix_c[py, px, 1]) * inv1mw)
                dldw += grad_color[py, px, 2] * (t * c2 - (totals_color[py, px, 2] - prefix_c[py, px, 2]) * inv1mw)
                dldw += grad_depth[py, px] * (t * d - (totals_depth[py, px] - prefix_d[py, px]) * inv1mw)
                dldw += grad_alpha[py, px] * (t - (totals_alpha[py, px] - prefix_a[py, px]) * inv1mw)

                g_colors[g, 0] += grad_color[py, px, 0] * contrib
                g_colors[g, 1] += grad_color[py, px, 1] * contrib
                g_colors[g, 2] += grad_color[py, px, 2] * contrib
                g_depths[g] += grad_depth[py, px] * contrib
                g_opac[g] += dldw * gauss

                gq = -0.5 * w * dldw
                g_mean2d[g, 0] += gq * (-(2.0 * a * dx + 2.0 * b * dy))
                g_mean2d[g, 1] += gq * (-(2.0 * b * dx + 2.0 * c * dy))
                g_conic[g, 0] += gq * dx * dx
                g_conic[g, 1] += gq * 2.0 * dx * dy
                g_conic[g, 2] += gq * dy * dy

                trans[py, px] = t * (1.0 - w)
    return g_mean2d_arr, g_conic_arr, g_opac_arr, g_colors_arr, g_depths_arr

"""Vectorized numpy kernel: base loss, IoU loss and anchor gradients.

Gradients are hand-derived in reverse mode with the same conventions as the
tape: min/max ties split the derivative evenly, abs and sqrt have slope 0 at
0, and the overlap clamp is flat for touching boxes. ``_kernel_c.pyx``
mirrors this file line for line.
"""

from __future__ import annotations

import math

import numpy as np

_ASPECT_K = 4.0 / math.pi**2


def _sel(a, b):
    """d min(a, b)/da; for max swap the arguments."""
    return np.where(a < b, 1.0, np.where(a == b, 0.5, 0.0))


def evaluate(kind, anchors, targets, eps, out_iou, out_loss, out_grad):
    x, y, w, h = (anchors[:, k] for k in range(4))
    xg, yg, wg, hg = (targets[:, k] for k in range(4))

    ax1, ax2 = x - w * 0.5, x + w * 0.5
    ay1, ay2 = y - h * 0.5, y + h * 0.5
    tx1, tx2 = xg - wg * 0.5, xg + wg * 0.5
    ty1, ty2 = yg - hg * 0.5, yg + hg * 0.5

    iw_raw = np.minimum(ax2, tx2) - np.maximum(ax1, tx1)
    ih_raw = np.minimum(ay2, ty2) - np.maximum(ay1, ty1)
    ov_x = iw_raw > 0.0
    ov_y = ih_raw > 0.0
    wi = np.where(ov_x, iw_raw, 0.0)
    hi = np.where(ov_y, ih_raw, 0.0)
    inter = wi * hi
    union = w * h + wg * hg - inter
    liou = 1.0 - inter / union

    wg_enc = np.maximum(ax2, tx2) - np.minimum(ax1, tx1)
    hg_enc = np.maximum(ay2, ty2) - np.minimum(ay1, ty1)
    dx, dy = x - xg, y - yg
    d2 = dx * dx + dy * dy

    zeros = np.zeros_like(x)
    g_liou = np.ones_like(x)
    g_wg = zeros.copy()
    g_hg = zeros.copy()
    g_union = zeros.copy()
    g_x = zeros.copy()
    g_y = zeros.copy()
    g_w = zeros.copy()
    g_h = zeros.copy()

    if kind == 0:
        loss = liou
    elif kind == 1:
        area = wg_enc * hg_enc
        loss = liou + (area - union) / area
        g_union += -1.0 / area
        g_area = union / (area * area)
        g_wg += g_area * hg_enc
        g_hg += g_area * wg_enc
    elif kind in (2, 3, 4):
        c2 = wg_enc * wg_enc + hg_enc * hg_enc
        penalty = d2 / c2
        g_d2 = 1.0 / c2
        g_c2 = -d2 / (c2 * c2)
        g_wg += g_c2 * 2.0 * wg_enc
        g_hg += g_c2 * 2.0 * hg_enc
        g_x += g_d2 * 2.0 * dx
        g_y += g_d2 * 2.0 * dy
        if kind == 3:
            wg2, hg2 = wg_enc * wg_enc, hg_enc * hg_enc
            penalty = penalty + dx * dx / wg2 + dy * dy / hg2
            g_x += 2.0 * dx / wg2
            g_y += 2.0 * dy / hg2
            g_wg += -2.0 * dx * dx / (wg2 * wg_enc)
            g_hg += -2.0 * dy * dy / (hg2 * hg_enc)
        elif kind == 4:
            diff = np.arctan(w / h) - np.arctan(wg / hg)
            v = _ASPECT_K * diff * diff
            denom = liou + v
            safe = np.where(denom == 0.0, 1.0, denom)
            alpha = np.where(denom == 0.0, 0.0, v / safe)
            penalty = penalty + alpha * v
            dv = alpha * 2.0 * _ASPECT_K * diff / (w * w + h * h)
            g_w += dv * h
            g_h += -dv * w
        loss = liou + penalty
    elif kind == 5:
        adx, ady = np.abs(dx), np.abs(dy)
        m = np.minimum(adx, ady)
        dist = np.sqrt(d2)
        den = dist + eps
        q = m / den
        u = np.arcsin(q)
        angle = np.sin(2.0 * u)
        gamma = 2.0 - angle
        wg2, hg2 = wg_enc * wg_enc, hg_enc * hg_enc
        rho_x = dx * dx / wg2
        rho_y = dy * dy / hg2
        ex, ey = np.exp(-gamma * rho_x), np.exp(-gamma * rho_y)
        distance = 0.5 * ((1.0 - ex) + (1.0 - ey))

        g_rho_x = 0.5 * gamma * ex
        g_rho_y = 0.5 * gamma * ey
        g_angle = -0.5 * (rho_x * ex + rho_y * ey)
        g_q = g_angle * 2.0 * np.cos(2.0 * u) / np.sqrt(1.0 - q * q)
        g_m = g_q / den
        g_dist = -g_q * m / (den * den)
        safe_dist = np.where(dist > 0.0, dist, 1.0)
        g_dist_d = np.where(dist > 0.0, g_dist / safe_dist, 0.0)
        g_adx = g_m * _sel(adx, ady)
        g_ady = g_m * _sel(ady, adx)
        g_x += g_adx * np.sign(dx) + g_dist_d * dx + g_rho_x * 2.0 * dx / wg2
        g_y += g_ady * np.sign(dy) + g_dist_d * dy + g_rho_y * 2.0 * dy / hg2
        g_wg += -g_rho_x * 2.0 * rho_x / wg_enc
        g_hg += -g_rho_y * 2.0 * rho_y / hg_enc

        shape = zeros.copy()
        for size, size_gt, g_size in ((w, wg, g_w), (h, hg, g_h)):
            num = np.abs(size - size_gt)
            big = np.maximum(size, size_gt)
            omega = num / big
            e = np.exp(-omega)
            base = 1.0 - e
            shape += 0.5 * base**4
            g_omega = 2.0 * base**3 * e
            g_size += g_omega * np.sign(size - size_gt) / big
            g_size += -g_omega * num / (big * big) * _sel(size_gt, size)
        loss = liou + distance + shape
    elif kind == 6:
        c2 = wg_enc * wg_enc + hg_enc * hg_enc
        attention = np.exp(d2 / c2)
        loss = attention * liou
        g_liou = attention
        g_d2 = liou * attention / c2
        g_x += g_d2 * 2.0 * dx
        g_y += g_d2 * 2.0 * dy
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")

    # L_IoU = 1 - inter/union
    g_inter = -g_liou / union
    g_union += g_liou * inter / (union * union)
    # union = w*h + wg*hg - inter
    g_w += g_union * h
    g_h += g_union * w
    g_inter -= g_union
    g_wi = np.where(ov_x, g_inter * hi, 0.0)
    g_hi = np.where(ov_y, g_inter * wi, 0.0)

    # right/left anchor edges
    g_ax2 = g_wi * _sel(ax2, tx2) + g_wg * _sel(tx2, ax2)
    g_ax1 = -g_wi * _sel(tx1, ax1) - g_wg * _sel(ax1, tx1)
    g_ay2 = g_hi * _sel(ay2, ty2) + g_hg * _sel(ty2, ay2)
    g_ay1 = -g_hi * _sel(ty1, ay1) - g_hg * _sel(ay1, ty1)
    g_x += g_ax2 + g_ax1
    g_w += 0.5 * (g_ax2 - g_ax1)
    g_y += g_ay2 + g_ay1
    g_h += 0.5 * (g_ay2 - g_ay1)

    out_iou[:] = liou
    out_loss[:] = loss
    out_grad[:, 0] = g_x
    out_grad[:, 1] = g_y
    out_grad[:, 2] = g_w
    out_grad[:, 3] = g_h

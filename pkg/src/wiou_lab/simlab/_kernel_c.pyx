# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-case kernel; same arithmetic as ``_kernel_py``.

The loop runs without the GIL so callers may evaluate disjoint slices from
several threads. No fast-math: results must not depend on the slicing.
"""

from libc.math cimport atan, asin, sin, cos, exp, sqrt, fabs, M_PI


cdef double ASPECT_K = 4.0 / (M_PI * M_PI)


cdef inline double sel(double a, double b) nogil:
    # d min(a, b)/da; d max(a, b)/da is sel(b, a)
    if a < b:
        return 1.0
    if a == b:
        return 0.5
    return 0.0


cdef inline double sign(double a) nogil:
    if a > 0.0:
        return 1.0
    if a < 0.0:
        return -1.0
    return 0.0


cdef inline double dmin(double a, double b) nogil:
    return a if a <= b else b


cdef inline double dmax(double a, double b) nogil:
    return a if a >= b else b


cdef inline void shape_term(double s, double sg, double *value, double *g_s) nogil:
    cdef double num = fabs(s - sg)
    cdef double big = dmax(s, sg)
    cdef double omega = num / big
    cdef double e = exp(-omega)
    cdef double base = 1.0 - e
    cdef double g_omega = 2.0 * base * base * base * e
    value[0] += 0.5 * base * base * base * base
    g_s[0] += g_omega * sign(s - sg) / big
    g_s[0] += -g_omega * num / (big * big) * sel(sg, s)


cdef void case(int kind, double eps,
               double x, double y, double w, double h,
               double xg, double yg, double wg, double hg,
               double *out) nogil:
    cdef double ax1 = x - w * 0.5, ax2 = x + w * 0.5
    cdef double ay1 = y - h * 0.5, ay2 = y + h * 0.5
    cdef double tx1 = xg - wg * 0.5, tx2 = xg + wg * 0.5
    cdef double ty1 = yg - hg * 0.5, ty2 = yg + hg * 0.5

    cdef double iw_raw = dmin(ax2, tx2) - dmax(ax1, tx1)
    cdef double ih_raw = dmin(ay2, ty2) - dmax(ay1, ty1)
    cdef bint ov_x = iw_raw > 0.0
    cdef bint ov_y = ih_raw > 0.0
    cdef double wi = iw_raw if ov_x else 0.0
    cdef double hi = ih_raw if ov_y else 0.0
    cdef double inter = wi * hi
    cdef double union_ = w * h + wg * hg - inter
    cdef double liou = 1.0 - inter / union_

    cdef double wg_enc = dmax(ax2, tx2) - dmin(ax1, tx1)
    cdef double hg_enc = dmax(ay2, ty2) - dmin(ay1, ty1)
    cdef double dx = x - xg, dy = y - yg
    cdef double d2 = dx * dx + dy * dy

    cdef double g_liou = 1.0, g_wg = 0.0, g_hg = 0.0, g_union = 0.0
    cdef double g_x = 0.0, g_y = 0.0, g_w = 0.0, g_h = 0.0
    cdef double loss = liou
    cdef double area, g_area, c2, penalty, g_d2, g_c2, wg2, hg2
    cdef double diff, v, denom, alpha, dv
    cdef double adx, ady, m, dist, den, q, u, angle, gamma, rho_x, rho_y, ex, ey
    cdef double distance, g_rho_x, g_rho_y, g_angle, g_q, g_m, g_dist, g_dist_d
    cdef double shape, attention
    cdef double g_inter, g_wi, g_hi, g_ax1, g_ax2, g_ay1, g_ay2

    if kind == 1:
        area = wg_enc * hg_enc
        loss = liou + (area - union_) / area
        g_union += -1.0 / area
        g_area = union_ / (area * area)
        g_wg += g_area * hg_enc
        g_hg += g_area * wg_enc
    elif kind == 2 or kind == 3 or kind == 4:
        c2 = wg_enc * wg_enc + hg_enc * hg_enc
        penalty = d2 / c2
        g_d2 = 1.0 / c2
        g_c2 = -d2 / (c2 * c2)
        g_wg += g_c2 * 2.0 * wg_enc
        g_hg += g_c2 * 2.0 * hg_enc
        g_x += g_d2 * 2.0 * dx
        g_y += g_d2 * 2.0 * dy
        if kind == 3:
            wg2 = wg_enc * wg_enc
            hg2 = hg_enc * hg_enc
            penalty = penalty + dx * dx / wg2 + dy * dy / hg2
            g_x += 2.0 * dx / wg2
            g_y += 2.0 * dy / hg2
            g_wg += -2.0 * dx * dx / (wg2 * wg_enc)
            g_hg += -2.0 * dy * dy / (hg2 * hg_enc)
        elif kind == 4:
            diff = atan(w / h) - atan(wg / hg)
            v = ASPECT_K * diff * diff
            denom = liou + v
            alpha = 0.0 if denom == 0.0 else v / denom
            penalty = penalty + alpha * v
            dv = alpha * 2.0 * ASPECT_K * diff / (w * w + h * h)
            g_w += dv * h
            g_h += -dv * w
        loss = liou + penalty
    elif kind == 5:
        adx = fabs(dx)
        ady = fabs(dy)
        m = dmin(adx, ady)
        dist = sqrt(d2)
        den = dist + eps
        q = m / den
        u = asin(q)
        angle = sin(2.0 * u)
        gamma = 2.0 - angle
        wg2 = wg_enc * wg_enc
        hg2 = hg_enc * hg_enc
        rho_x = dx * dx / wg2
        rho_y = dy * dy / hg2
        ex = exp(-gamma * rho_x)
        ey = exp(-gamma * rho_y)
        distance = 0.5 * ((1.0 - ex) + (1.0 - ey))

        g_rho_x = 0.5 * gamma * ex
        g_rho_y = 0.5 * gamma * ey
        g_angle = -0.5 * (rho_x * ex + rho_y * ey)
        g_q = g_angle * 2.0 * cos(2.0 * u) / sqrt(1.0 - q * q)
        g_m = g_q / den
        g_dist = -g_q * m / (den * den)
        g_dist_d = g_dist / dist if dist > 0.0 else 0.0
        g_x += g_m * sel(adx, ady) * sign(dx) + g_dist_d * dx + g_rho_x * 2.0 * dx / wg2
        g_y += g_m * sel(ady, adx) * sign(dy) + g_dist_d * dy + g_rho_y * 2.0 * dy / hg2
        g_wg += -g_rho_x * 2.0 * rho_x / wg_enc
        g_hg += -g_rho_y * 2.0 * rho_y / hg_enc

        shape = 0.0
        shape_term(w, wg, &shape, &g_w)
        shape_term(h, hg, &shape, &g_h)
        loss = liou + distance + shape
    elif kind == 6:
        c2 = wg_enc * wg_enc + hg_enc * hg_enc
        attention = exp(d2 / c2)
        loss = attention * liou
        g_liou = attention
        g_d2 = liou * attention / c2
        g_x += g_d2 * 2.0 * dx
        g_y += g_d2 * 2.0 * dy

    g_inter = -g_liou / union_
    g_union += g_liou * inter / (union_ * union_)
    g_w += g_union * h
    g_h += g_union * w
    g_inter -= g_union
    g_wi = g_inter * hi if ov_x else 0.0
    g_hi = g_inter * wi if ov_y else 0.0

    g_ax2 = g_wi * sel(ax2, tx2) + g_wg * sel(tx2, ax2)
    g_ax1 = -g_wi * sel(tx1, ax1) - g_wg * sel(ax1, tx1)
    g_ay2 = g_hi * sel(ay2, ty2) + g_hg * sel(ty2, ay2)
    g_ay1 = -g_hi * sel(ty1, ay1) - g_hg * sel(ay1, ty1)
    g_x += g_ax2 + g_ax1
    g_w += 0.5 * (g_ax2 - g_ax1)
    g_y += g_ay2 + g_ay1
    g_h += 0.5 * (g_ay2 - g_ay1)

    out[0] = liou
    out[1] = loss
    out[2] = g_x
    out[3] = g_y
    out[4] = g_w
    out[5] = g_h


def evaluate(int kind, const double[:, ::1] anchors, const double[:, ::1] targets, double eps,
             double[::1] out_iou, double[::1] out_loss, double[:, ::1] out_grad):
    cdef Py_ssize_t i, n = anchors.shape[0]
    cdef double buf[6]
    if kind < 0 or kind > 6:
        raise ValueError(f"unknown kernel kind {kind!r}")
    if targets.shape[0] != n or out_iou.shape[0] != n or out_loss.shape[0] != n or out_grad.shape[0] != n:
        raise ValueError("kernel arrays must share their first dimension")
    with nogil:
        for i in range(n):
            case(kind, eps,
                 anchors[i, 0], anchors[i, 1], anchors[i, 2], anchors[i, 3],
                 targets[i, 0], targets[i, 1], targets[i, 2], targets[i, 3], buf)
            out_iou[i] = buf[0]
            out_loss[i] = buf[1]
            out_grad[i, 0] = buf[2]
            out_grad[i, 1] = buf[3]
            out_grad[i, 2] = buf[4]
            out_grad[i, 3] = buf[5]

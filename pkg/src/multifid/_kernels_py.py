"""Pure-Python implementations of the hot numerical kernels.

These mirror ``_kernels.pyx`` operation for operation so that both paths
produce the same floating point results. They are used when the compiled
extension is unavailable or ``MULTIFID_PURE_PYTHON`` is set.
"""
import math

import numpy as np

BACKEND = "python"


def _norm(dx, dy):
    # not math.hypot: it rounds differently from the compiled path
    return math.sqrt(dx * dx + dy * dy)


def project_points(ref_x, ref_y, px, py):
    """Closest-point projection of many query points onto a polyline.

    Returns ``(s, d, seg)``: arclength of the foot point along the polyline,
    signed distance (positive left of the travel direction) and the index of
    the segment that holds the foot. Ties resolve toward the smaller segment
    index. Zero-length segments are skipped.
    """
    ref_x = np.asarray(ref_x, dtype=float)
    ref_y = np.asarray(ref_y, dtype=float)
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    n = ref_x.shape[0]
    m = px.shape[0]
    out_s = np.zeros(m)
    out_d = np.zeros(m)
    out_seg = np.zeros(m, dtype=np.int64)

    seg_len = [0.0] * (n - 1)
    s_start = [0.0] * n
    for i in range(n - 1):
        seg_len[i] = _norm(ref_x[i + 1] - ref_x[i], ref_y[i + 1] - ref_y[i])
        s_start[i + 1] = s_start[i] + seg_len[i]

    for k in range(m):
        qx = float(px[k])
        qy = float(py[k])
        best = math.inf
        best_s = 0.0
        best_d = 0.0
        best_seg = 0
        found = False
        for i in range(n - 1):
            ln = seg_len[i]
            if ln < 1e-12:
                continue
            ux = (ref_x[i + 1] - ref_x[i]) / ln
            uy = (ref_y[i + 1] - ref_y[i]) / ln
            wx = qx - ref_x[i]
            wy = qy - ref_y[i]
            u = wx * ux + wy * uy
            if u < 0.0:
                u = 0.0
            elif u > ln:
                u = ln
            fx = ref_x[i] + u * ux
            fy = ref_y[i] + u * uy
            dist = _norm(qx - fx, qy - fy)
            if dist < best:
                best = dist
                cross = ux * (qy - fy) - uy * (qx - fx)
                if cross < 0.0:
                    best_d = -dist
                else:
                    best_d = dist
                best_s = s_start[i] + u
                best_seg = i
                found = True
        if not found:
            # degenerate polyline: every segment has zero length
            best_s = 0.0
            best_d = _norm(qx - ref_x[0], qy - ref_y[0])
            best_seg = 0
        out_s[k] = best_s
        out_d[k] = best_d
        out_seg[k] = best_seg
    return out_s, out_d, out_seg


def lookahead_point(tr_x, tr_y, tr_s, x, y, ld):
    """Point at arc distance ``ld`` ahead of the foot of ``(x, y)`` on a trajectory.

    Clamps to the final trajectory point.
    """
    n = len(tr_x)
    if n == 1:
        return tr_x[0], tr_y[0]
    best = math.inf
    foot_s = 0.0
    for i in range(n - 1):
        ln = tr_s[i + 1] - tr_s[i]
        if ln < 1e-12:
            continue
        ux = (tr_x[i + 1] - tr_x[i]) / ln
        uy = (tr_y[i + 1] - tr_y[i]) / ln
        u = (x - tr_x[i]) * ux + (y - tr_y[i]) * uy
        if u < 0.0:
            u = 0.0
        elif u > ln:
            u = ln
        fx = tr_x[i] + u * ux
        fy = tr_y[i] + u * uy
        dist = _norm(x - fx, y - fy)
        if dist < best:
            best = dist
            foot_s = tr_s[i] + u
    target = foot_s + ld
    if target >= tr_s[n - 1]:
        return tr_x[n - 1], tr_y[n - 1]
    j = 0
    while j < n - 2 and tr_s[j + 1] <= target:
        j += 1
    ln = tr_s[j + 1] - tr_s[j]
    if ln < 1e-12:
        return tr_x[j + 1], tr_y[j + 1]
    r = (target - tr_s[j]) / ln
    return tr_x[j] + r * (tr_x[j + 1] - tr_x[j]), tr_y[j] + r * (tr_y[j + 1] - tr_y[j])


def pure_pursuit(tr_x, tr_y, tr_s, x, y, heading, v, wheelbase, delta_max, k_v, ld_min, ld_max):
    ld = k_v * v
    if ld < ld_min:
        ld = ld_min
    elif ld > ld_max:
        ld = ld_max
    lx, ly = lookahead_point(tr_x, tr_y, tr_s, x, y, ld)
    dx = lx - x
    dy = ly - y
    chord = _norm(dx, dy)
    if chord < 1e-9:
        return 0.0
    alpha = math.atan2(dy, dx) - heading
    steer = math.atan(2.0 * wheelbase * math.sin(alpha) / chord)
    if steer > delta_max:
        steer = delta_max
    elif steer < -delta_max:
        steer = -delta_max
    return steer


def interp_time(tr_t, values, tm):
    n = len(tr_t)
    if tm <= tr_t[0]:
        return values[0]
    if tm >= tr_t[n - 1]:
        return values[n - 1]
    j = 0
    while j < n - 2 and tr_t[j + 1] <= tm:
        j += 1
    r = (tm - tr_t[j]) / (tr_t[j + 1] - tr_t[j])
    return values[j] + r * (values[j + 1] - values[j])


def hifi_integrate(
    x, y, heading, v, a, steer, t_offset,
    tr_t, tr_x, tr_y, tr_v, tr_a, tr_s,
    wheelbase, delta_max, steer_rate_max, a_accel_max, a_brake_max,
    tau_steer, tau_accel, mu, g,
    kp, ki, i_limit, k_v, ld_min, ld_max,
    dt, substeps, integral, noise,
):
    """Integrate the controlled kinematic bicycle over ``substeps`` intervals.

    ``t_offset`` is the time of the current state measured from the first
    trajectory sample. Returns the new ``(x, y, heading, v, a, steer,
    integral, steer_target, accel_target, max_steer_step)``; heading is not
    wrapped.
    """
    tr_t = [float(q) for q in tr_t]
    tr_x = [float(q) for q in tr_x]
    tr_y = [float(q) for q in tr_y]
    tr_v = [float(q) for q in tr_v]
    tr_a = [float(q) for q in tr_a]
    tr_s = [float(q) for q in tr_s]
    alpha_steer = 1.0 - math.exp(-dt / tau_steer)
    alpha_accel = 1.0 - math.exp(-dt / tau_accel)
    max_dsteer = steer_rate_max * dt
    lat_limit = mu * g
    steer_target = 0.0
    accel_target = 0.0
    max_step = 0.0
    for j in range(substeps):
        tm = t_offset + j * dt
        steer_target = pure_pursuit(
            tr_x, tr_y, tr_s, x, y, heading, v, wheelbase, delta_max, k_v, ld_min, ld_max
        )
        v_ref = interp_time(tr_t, tr_v, tm)
        a_ff = interp_time(tr_t, tr_a, tm + tau_accel)
        i_term = ki * integral
        accel_target = a_ff + kp * (v_ref - v) + i_term
        if accel_target > a_accel_max:
            accel_target = a_accel_max
        elif accel_target < -a_brake_max:
            accel_target = -a_brake_max

        new_steer = steer + (steer_target - steer) * alpha_steer
        dsteer = new_steer - steer
        if dsteer > max_dsteer:
            dsteer = max_dsteer
        elif dsteer < -max_dsteer:
            dsteer = -max_dsteer
        new_steer = steer + dsteer
        if new_steer > delta_max:
            new_steer = delta_max
        elif new_steer < -delta_max:
            new_steer = -delta_max
        step = math.fabs(new_steer - steer)
        if step > max_step:
            max_step = step
        steer = new_steer

        a = a + (accel_target - a) * alpha_accel
        if a > a_accel_max:
            a = a_accel_max
        elif a < -a_brake_max:
            a = -a_brake_max
        a_exec = a + noise[j]

        v = v + a_exec * dt
        if v < 0.0:
            v = 0.0

        tan_d = math.tan(steer)
        if v * v * math.fabs(tan_d) > lat_limit * wheelbase:
            tan_eff = lat_limit * wheelbase / (v * v)
            if tan_d < 0.0:
                tan_eff = -tan_eff
        else:
            tan_eff = tan_d

        # position advances along the mean heading of the substep: first-order
        # pose error would drift the endpoint with the substep size
        dheading = v * tan_eff / wheelbase * dt
        h_mid = heading + 0.5 * dheading
        heading = heading + dheading
        x = x + v * math.cos(h_mid) * dt
        y = y + v * math.sin(h_mid) * dt

        integral = integral + (v_ref - v) * dt
        if integral > i_limit:
            integral = i_limit
        elif integral < -i_limit:
            integral = -i_limit
    return x, y, heading, v, a, steer, integral, steer_target, accel_target, max_step

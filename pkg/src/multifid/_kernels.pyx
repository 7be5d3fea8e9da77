# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: polyline projection and the high-fidelity substep loop.

Operation order matches ``_kernels_py`` exactly; keep the two in sync.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan, atan2, cos, exp, fabs, sin, sqrt, tan, INFINITY

cnp.import_array()

BACKEND = "cython"


# libm hypot and math.hypot round differently; sqrt is exact in both
cdef inline double _norm(double dx, double dy) noexcept nogil:
    return sqrt(dx * dx + dy * dy)


def project_points(ref_x, ref_y, px, py):
    cdef double[::1] rx = np.ascontiguousarray(ref_x, dtype=np.float64)
    cdef double[::1] ry = np.ascontiguousarray(ref_y, dtype=np.float64)
    cdef double[::1] qxs = np.ascontiguousarray(px, dtype=np.float64)
    cdef double[::1] qys = np.ascontiguousarray(py, dtype=np.float64)
    cdef Py_ssize_t n = rx.shape[0]
    cdef Py_ssize_t m = qxs.shape[0]
    out_s_arr = np.zeros(m)
    out_d_arr = np.zeros(m)
    out_seg_arr = np.zeros(m, dtype=np.int64)
    cdef double[::1] out_s = out_s_arr
    cdef double[::1] out_d = out_d_arr
    cdef cnp.int64_t[::1] out_seg = out_seg_arr
    seg_len_arr = np.zeros(max(n - 1, 1))
    s_start_arr = np.zeros(n)
    cdef double[::1] seg_len = seg_len_arr
    cdef double[::1] s_start = s_start_arr
    cdef Py_ssize_t i, k
    cdef double qx, qy, best, best_s, best_d, ln, ux, uy, wx, wy, u, fx, fy, dist, cross
    cdef Py_ssize_t best_seg
    cdef bint found

    for i in range(n - 1):
        seg_len[i] = _norm(rx[i + 1] - rx[i], ry[i + 1] - ry[i])
        s_start[i + 1] = s_start[i] + seg_len[i]

    for k in range(m):
        qx = qxs[k]
        qy = qys[k]
        best = INFINITY
        best_s = 0.0
        best_d = 0.0
        best_seg = 0
        found = False
        for i in range(n - 1):
            ln = seg_len[i]
            if ln < 1e-12:
                continue
            ux = (rx[i + 1] - rx[i]) / ln
            uy = (ry[i + 1] - ry[i]) / ln
            wx = qx - rx[i]
            wy = qy - ry[i]
            u = wx * ux + wy * uy
            if u < 0.0:
                u = 0.0
            elif u > ln:
                u = ln
            fx = rx[i] + u * ux
            fy = ry[i] + u * uy
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
            best_s = 0.0
            best_d = _norm(qx - rx[0], qy - ry[0])
            best_seg = 0
        out_s[k] = best_s
        out_d[k] = best_d
        out_seg[k] = best_seg
    return out_s_arr, out_d_arr, out_seg_arr


cdef void _lookahead(double[::1] tr_x, double[::1] tr_y, double[::1] tr_s,
                     double x, double y, double ld, double* lx, double* ly) noexcept nogil:
    cdef Py_ssize_t n = tr_x.shape[0]
    cdef Py_ssize_t i, j
    cdef double best, foot_s, ln, ux, uy, u, fx, fy, dist, target, r
    if n == 1:
        lx[0] = tr_x[0]
        ly[0] = tr_y[0]
        return
    best = INFINITY
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
        lx[0] = tr_x[n - 1]
        ly[0] = tr_y[n - 1]
        return
    j = 0
    while j < n - 2 and tr_s[j + 1] <= target:
        j += 1
    ln = tr_s[j + 1] - tr_s[j]
    if ln < 1e-12:
        lx[0] = tr_x[j + 1]
        ly[0] = tr_y[j + 1]
        return
    r = (target - tr_s[j]) / ln
    lx[0] = tr_x[j] + r * (tr_x[j + 1] - tr_x[j])
    ly[0] = tr_y[j] + r * (tr_y[j + 1] - tr_y[j])


cdef double _pure_pursuit(double[::1] tr_x, double[::1] tr_y, double[::1] tr_s,
                          double x, double y, double heading, double v, double wheelbase,
                          double delta_max, double k_v, double ld_min, double ld_max) noexcept nogil:
    cdef double ld = k_v * v
    cdef double lx, ly, dx, dy, chord, alpha, steer
    if ld < ld_min:
        ld = ld_min
    elif ld > ld_max:
        ld = ld_max
    _lookahead(tr_x, tr_y, tr_s, x, y, ld, &lx, &ly)
    dx = lx - x
    dy = ly - y
    chord = _norm(dx, dy)
    if chord < 1e-9:
        return 0.0
    alpha = atan2(dy, dx) - heading
    steer = atan(2.0 * wheelbase * sin(alpha) / chord)
    if steer > delta_max:
        steer = delta_max
    elif steer < -delta_max:
        steer = -delta_max
    return steer


cdef double _interp_time(double[::1] tr_t, double[::1] values, double tm) noexcept nogil:
    cdef Py_ssize_t n = tr_t.shape[0]
    cdef Py_ssize_t j = 0
    cdef double r
    if tm <= tr_t[0]:
        return values[0]
    if tm >= tr_t[n - 1]:
        return values[n - 1]
    while j < n - 2 and tr_t[j + 1] <= tm:
        j += 1
    r = (tm - tr_t[j]) / (tr_t[j + 1] - tr_t[j])
    return values[j] + r * (values[j + 1] - values[j])


def lookahead_point(tr_x, tr_y, tr_s, double x, double y, double ld):
    cdef double lx, ly
    _lookahead(np.ascontiguousarray(tr_x, dtype=np.float64),
               np.ascontiguousarray(tr_y, dtype=np.float64),
               np.ascontiguousarray(tr_s, dtype=np.float64), x, y, ld, &lx, &ly)
    return lx, ly


def pure_pursuit(tr_x, tr_y, tr_s, double x, double y, double heading, double v,
                 double wheelbase, double delta_max, double k_v, double ld_min, double ld_max):
    return _pure_pursuit(np.ascontiguousarray(tr_x, dtype=np.float64),
                         np.ascontiguousarray(tr_y, dtype=np.float64),
                         np.ascontiguousarray(tr_s, dtype=np.float64),
                         x, y, heading, v, wheelbase, delta_max, k_v, ld_min, ld_max)


def interp_time(tr_t, values, double tm):
    return _interp_time(np.ascontiguousarray(tr_t, dtype=np.float64),
                        np.ascontiguousarray(values, dtype=np.float64), tm)


def hifi_integrate(
    double x, double y, double heading, double v, double a, double steer, double t_offset,
    tr_t, tr_x, tr_y, tr_v, tr_a, tr_s,
    double wheelbase, double delta_max, double steer_rate_max, double a_accel_max,
    double a_brake_max, double tau_steer, double tau_accel, double mu, double g,
    double kp, double ki, double i_limit, double k_v, double ld_min, double ld_max,
    double dt, int substeps, double integral, noise,
):
    cdef double[::1] t_ = np.ascontiguousarray(tr_t, dtype=np.float64)
    cdef double[::1] x_ = np.ascontiguousarray(tr_x, dtype=np.float64)
    cdef double[::1] y_ = np.ascontiguousarray(tr_y, dtype=np.float64)
    cdef double[::1] v_ = np.ascontiguousarray(tr_v, dtype=np.float64)
    cdef double[::1] a_ = np.ascontiguousarray(tr_a, dtype=np.float64)
    cdef double[::1] s_ = np.ascontiguousarray(tr_s, dtype=np.float64)
    cdef double[::1] nz = np.ascontiguousarray(noise, dtype=np.float64)
    cdef double alpha_steer = 1.0 - exp(-dt / tau_steer)
    cdef double alpha_accel = 1.0 - exp(-dt / tau_accel)
    cdef double max_dsteer = steer_rate_max * dt
    cdef double lat_limit = mu * g
    cdef double steer_target = 0.0
    cdef double accel_target = 0.0
    cdef double max_step = 0.0
    cdef double tm, v_ref, a_ff, i_term, new_steer, dsteer, step, a_exec, tan_d, tan_eff, dheading, h_mid
    cdef int j
    with nogil:
        for j in range(substeps):
            tm = t_offset + j * dt
            steer_target = _pure_pursuit(x_, y_, s_, x, y, heading, v, wheelbase,
                                         delta_max, k_v, ld_min, ld_max)
            v_ref = _interp_time(t_, v_, tm)
            a_ff = _interp_time(t_, a_, tm + tau_accel)
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
            step = fabs(new_steer - steer)
            if step > max_step:
                max_step = step
            steer = new_steer

            a = a + (accel_target - a) * alpha_accel
            if a > a_accel_max:
                a = a_accel_max
            elif a < -a_brake_max:
                a = -a_brake_max
            a_exec = a + nz[j]

            v = v + a_exec * dt
            if v < 0.0:
                v = 0.0

            tan_d = tan(steer)
            if v * v * fabs(tan_d) > lat_limit * wheelbase:
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
            x = x + v * cos(h_mid) * dt
            y = y + v * sin(h_mid) * dt

            integral = integral + (v_ref - v) * dt
            if integral > i_limit:
                integral = i_limit
            elif integral < -i_limit:
                integral = -i_limit
    return x, y, heading, v, a, steer, integral, steer_target, accel_target, max_step

"""Planar geometry helpers shared by scenario, planner and evaluation code."""
import math

import numpy as np


class ProjectionError(ValueError):
    """Raised when a point is too far from a reference path to be projected."""


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi]."""
    if np.ndim(theta) == 0:
        w = math.fmod(float(theta) + math.pi, 2.0 * math.pi)
        if w <= 0.0:
            w += 2.0 * math.pi
        return w - math.pi
    theta = np.asarray(theta, dtype=float)
    w = np.fmod(theta + math.pi, 2.0 * math.pi)
    w = np.where(w <= 0.0, w + 2.0 * math.pi, w)
    return w - math.pi


def _sinc(z):
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-12
    out[nz] = np.sin(z[nz]) / z[nz]
    return out


def advance_pose(x, y, heading, curvature, length):
    """Position and heading after travelling ``length`` on a constant-curvature arc."""
    half = 0.5 * np.asarray(curvature) * np.asarray(length)
    chord = np.asarray(length) * _sinc(half)
    mid = np.asarray(heading) + half
    return (
        x + chord * np.cos(mid),
        y + chord * np.sin(mid),
        np.asarray(heading) + 2.0 * half,
    )


class ReferencePath:
    """Arclength-indexed centerline lookup.

    Heading is linearly interpolated in arclength between samples, which
    makes every segment a constant-curvature arc; positions are integrated
    along that arc so heading is always the exact tangent. Queries outside
    ``[0, s_max]`` continue along the end tangents with zero curvature and
    are flagged out of range.
    """

    def __init__(self, x, y, heading, s):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.heading = np.unwrap(np.asarray(heading, dtype=float))
        self.s = np.asarray(s, dtype=float)
        if self.s.shape[0] < 2:
            raise ValueError("reference path needs at least two samples")
        ds = np.diff(self.s)
        if np.any(ds <= 0.0):
            raise ValueError("reference path arclength must be strictly increasing")
        self.seg_len = ds
        self.seg_k = np.diff(self.heading) / ds

    @classmethod
    def from_centerline(cls, centerline):
        return cls(centerline.x, centerline.y, centerline.heading, centerline.s)

    @property
    def s_max(self):
        return float(self.s[-1])

    def evaluate(self, s):
        """Return ``(x, y, heading, curvature, out_of_range)`` at arclength(s) ``s``."""
        scalar = np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        n = self.s.shape[0]
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, n - 2)
        u = s - self.s[idx]
        k = self.seg_k[idx].copy()
        below = s < 0.0
        above = s > self.s[-1]
        idx = np.where(above, n - 1, idx)
        u = np.where(above, s - self.s[-1], u)
        k[below | above] = 0.0
        x0 = self.x[idx]
        y0 = self.y[idx]
        h0 = self.heading[idx]
        x, y, h = advance_pose(x0, y0, h0, k, u)
        oor = below | above
        if scalar:
            return float(x[0]), float(y[0]), float(h[0]), float(k[0]), bool(oor[0])
        return x, y, h, k, oor

    def project(self, px, py, max_distance=None):
        """Project a point onto the path.

        Returns ``(s, d, heading, curvature, out_of_range)`` where ``d`` is
        positive to the left of the travel direction. Raises
        ``ProjectionError`` when the foot is farther than ``max_distance``.
        """
        n = self.s.shape[0]
        x0 = self.x[:-1]
        y0 = self.y[:-1]
        h0 = self.heading[:-1]
        k = self.seg_k
        ln = self.seg_len
        wx = px - x0
        wy = py - y0
        straight = np.abs(k) < 1e-12
        u = np.empty(n - 1)
        # straight segments: scalar projection on the tangent
        u[straight] = wx[straight] * np.cos(h0[straight]) + wy[straight] * np.sin(h0[straight])
        arc = ~straight
        if np.any(arc):
            ka = k[arc]
            ha = h0[arc]
            cx = x0[arc] - np.sin(ha) / ka
            cy = y0[arc] + np.cos(ha) / ka
            vx = px - cx
            vy = py - cy
            sg = np.sign(ka)
            foot_heading = np.arctan2(sg * vx, -sg * vy)
            mid = ha + 0.5 * ka * ln[arc]
            delta = wrap_angle(foot_heading - mid) + (mid - ha)
            u[arc] = delta / ka
        u = np.clip(u, 0.0, ln)
        fx, fy, fh = advance_pose(x0, y0, h0, k, u)
        dist = np.hypot(px - fx, py - fy)
        i = int(np.argmin(dist))
        best = dist[i]
        s_best = self.s[i] + u[i]

        # extension rays beyond either end
        h_start = self.heading[0]
        along0 = (px - self.x[0]) * math.cos(h_start) + (py - self.y[0]) * math.sin(h_start)
        if along0 < 0.0:
            ex = self.x[0] + along0 * math.cos(h_start)
            ey = self.y[0] + along0 * math.sin(h_start)
            de = math.hypot(px - ex, py - ey)
            if de < best:
                best, s_best = de, along0
        h_end = self.heading[-1]
        along1 = (px - self.x[-1]) * math.cos(h_end) + (py - self.y[-1]) * math.sin(h_end)
        if along1 > 0.0:
            ex = self.x[-1] + along1 * math.cos(h_end)
            ey = self.y[-1] + along1 * math.sin(h_end)
            de = math.hypot(px - ex, py - ey)
            if de < best:
                best, s_best = de, self.s[-1] + along1

        if max_distance is not None and best > max_distance:
            raise ProjectionError(
                f"point ({px:.3f}, {py:.3f}) is {best:.3f} m from the path (limit {max_distance:.3f} m)"
            )
        rx, ry, rh, rk, oor = self.evaluate(s_best)
        d = (px - rx) * -math.sin(rh) + (py - ry) * math.cos(rh)
        return float(s_best), float(d), rh, rk, oor

"""Procedural closed tracks and arclength-projected references."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Track:
    """Closed polyline; the last waypoint connects back to the first."""

    centerline: np.ndarray  # (n, 2)
    s: np.ndarray  # arclength at each waypoint, s[0] = 0

    def __post_init__(self):
        c = np.array(self.centerline, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2 or len(c) < 3:
            raise ValueError("centerline must be (n >= 3, 2)")
        seg = np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)
        if np.any(seg <= 0):
            raise ValueError("consecutive waypoints must be distinct")
        s = np.concatenate([[0.0], np.cumsum(seg[:-1])])
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "centerline", c)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "_seg_len", seg)
        object.__setattr__(self, "_length", float(seg.sum()))

    @classmethod
    def from_points(cls, pts) -> "Track":
        return cls(np.asarray(pts, dtype=np.float64), np.zeros(len(pts)))

    @property
    def length(self) -> float:
        return self._length

    def point_at(self, s) -> np.ndarray:
        """Interpolated centerline point(s) at arclength ``s`` (wrapped)."""
        s = np.mod(np.asarray(s, dtype=np.float64), self._length)
        i = np.searchsorted(self.s, s, side="right") - 1
        i = np.clip(i, 0, len(self.s) - 1)
        t = (s - self.s[i]) / self._seg_len[i]
        a = self.centerline[i]
        b = self.centerline[(i + 1) % len(self.centerline)]
        return a + t[..., None] * (b - a)

    def heading_at(self, s) -> np.ndarray:
        s = np.mod(np.asarray(s, dtype=np.float64), self._length)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 1)
        d = self.centerline[(i + 1) % len(self.centerline)] - self.centerline[i]
        return np.arctan2(d[..., 1], d[..., 0])

    def project(self, p) -> tuple[float, float]:
        """Nearest-segment projection; returns ``(arclength, distance)``.

        Equidistant segments resolve to the lower index.
        """
        p = np.asarray(p, dtype=np.float64)[:2]
        a = self.centerline
        d = np.roll(a, -1, axis=0) - a
        t = np.clip(np.einsum("ij,ij->i", p - a, d) / (self._seg_len ** 2), 0.0, 1.0)
        q = a + t[:, None] * d
        dist = np.linalg.norm(q - p, axis=1)
        i = int(np.argmin(dist))  # first minimum -> lower index
        return float(self.s[i] + t[i] * self._seg_len[i]), float(dist[i])

    def cross_track_error(self, p) -> float:
        return self.project(p)[1]


def make_reference(track: Track, x, cfg) -> np.ndarray:
    """H reference positions advancing ``v_ref * Ts`` per step from the
    projection of the current position."""
    s0, _ = track.project(np.asarray(x)[:2])
    k = np.arange(1, cfg.H + 1)
    return track.point_at(s0 + k * cfg.v_ref * cfg.Ts)


def _integrate(segments, ds: float, start=(0.0, 0.0), heading: float = 0.0) -> np.ndarray:
    """Waypoints along (length, curvature) pieces, sampled every ~``ds``."""
    pts = []
    x, y, th = start[0], start[1], heading
    for length, kappa in segments:
        n = max(1, int(math.ceil(length / ds)))
        h = length / n
        for _ in range(n):
            pts.append((x, y))
            if kappa == 0.0:
                x += h * math.cos(th)
                y += h * math.sin(th)
            else:
                th2 = th + kappa * h
                x += (math.sin(th2) - math.sin(th)) / kappa
                y -= (math.cos(th2) - math.cos(th)) / kappa
                th = th2
    return np.array(pts)


def stadium_track(straight: float = 3.0, radius: float = 0.8, chicane_radius: float = 0.7,
                  chicane_angle: float = 0.5, ds: float = 0.01) -> Track:
    """Counter-clockwise stadium; the first straight carries an
    out-and-back chicane (arcs +a, -a, -a, +a) when ``chicane_angle > 0``."""
    if straight <= 0 or radius <= 0:
        raise ValueError("straight and radius must be positive")
    segs = []
    if chicane_angle > 0:
        span = 4 * chicane_radius * math.sin(chicane_angle)
        if span >= straight:
            raise ValueError("chicane does not fit on the straight")
        arc = chicane_radius * chicane_angle
        k = 1.0 / chicane_radius
        rest = 0.5 * (straight - span)
        segs += [(rest, 0.0), (arc, k), (arc, -k), (arc, -k), (arc, k), (rest, 0.0)]
    else:
        segs.append((straight, 0.0))
    segs += [(math.pi * radius, 1.0 / radius), (straight, 0.0), (math.pi * radius, 1.0 / radius)]
    return Track.from_points(_integrate(segs, ds))


def circle_track(radius: float = 1.0, n: int = 400) -> Track:
    th = 2 * np.pi * np.arange(n) / n
    return Track.from_points(np.stack([radius * np.cos(th), radius * np.sin(th)], axis=1))

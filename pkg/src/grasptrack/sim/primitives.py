"""Analytic shape primitives: ray intersection, surface sampling, containment.

All operations work in the shape's local frame; callers handle poses. Ray
directions are not assumed normalized, so camera code can use rays with unit
camera-z and read the intersection parameter directly as z-depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_INF = np.inf


def _smallest_positive(t0: np.ndarray, t1: np.ndarray) -> np.ndarray:
    t0 = np.where(t0 > 1e-9, t0, _INF)
    t1 = np.where(t1 > 1e-9, t1, _INF)
    return np.minimum(t0, t1)


@dataclass(frozen=True)
class Sphere:
    radius: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        a = np.sum(dirs * dirs, axis=1)
        b = 2.0 * dirs @ origin
        c = origin @ origin - self.radius**2
        disc = b * b - 4 * a * c
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = _smallest_positive(t0, t1)
        return np.where(hit, t, _INF)

    def normal_at(self, points: np.ndarray) -> np.ndarray:
        n = points.copy()
        norms = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norms > 0, norms, 1.0)

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        return np.sum(points * points, axis=1) <= (self.radius + margin) ** 2

    def surface_points(self, pitch: float) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic Fibonacci-lattice sampling of the sphere surface."""
        n = max(64, int(4.0 * math.pi * self.radius**2 / pitch**2))
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
        golden = math.pi * (3.0 - math.sqrt(5.0))
        theta = golden * i
        dirs = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
        return self.radius * dirs, dirs


@dataclass(frozen=True)
class Cylinder:
    """Capped cylinder with its axis along local z, centered at the origin."""

    radius: float
    height: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        ox, oy, oz = origin
        dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        hh = 0.5 * self.height
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        c = ox * ox + oy * oy - self.radius**2
        disc = b * b - 4 * a * c
        side_ok = (disc >= 0) & (a > 1e-16)
        sq = np.sqrt(np.where(side_ok, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            ts0 = np.where(side_ok, (-b - sq) / (2 * a), _INF)
            ts1 = np.where(side_ok, (-b + sq) / (2 * a), _INF)
        z0 = oz + ts0 * dz
        z1 = oz + ts1 * dz
        ts0 = np.where(np.abs(z0) <= hh, ts0, _INF)
        ts1 = np.where(np.abs(z1) <= hh, ts1, _INF)
        t_side = _smallest_positive(ts0, ts1)

        with np.errstate(divide="ignore", invalid="ignore"):
            t_top = np.where(np.abs(dz) > 1e-16, (hh - oz) / dz, _INF)
            t_bot = np.where(np.abs(dz) > 1e-16, (-hh - oz) / dz, _INF)
        for t_cap in (t_top, t_bot):
            px = ox + t_cap * dx
            py = oy + t_cap * dy
            np.copyto(t_cap, _INF, where=px * px + py * py > self.radius**2)
        t_caps = _smallest_positive(t_top, t_bot)
        return np.minimum(t_side, t_caps)

    def normal_at(self, points: np.ndarray) -> np.ndarray:
        hh = 0.5 * self.height
        on_cap = np.abs(np.abs(points[:, 2]) - hh) < 1e-7
        n = np.zeros_like(points)
        n[:, 0] = points[:, 0]
        n[:, 1] = points[:, 1]
        norms = np.linalg.norm(n, axis=1, keepdims=True)
        n = n / np.where(norms > 0, norms, 1.0)
        n[on_cap] = 0.0
        n[on_cap, 2] = np.sign(points[on_cap, 2])
        return n

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        radial = points[:, 0] ** 2 + points[:, 1] ** 2 <= (self.radius + margin) ** 2
        axial = np.abs(points[:, 2]) <= 0.5 * self.height + margin
        return radial & axial

    def surface_points(self, pitch: float) -> tuple[np.ndarray, np.ndarray]:
        hh = 0.5 * self.height
        n_theta = max(12, int(round(2.0 * math.pi * self.radius / pitch)))
        n_z = max(2, int(round(self.height / pitch)))
        theta = (np.arange(n_theta) + 0.5) / n_theta * 2.0 * math.pi
        zs = np.linspace(-hh, hh, n_z)
        tt, zz = np.meshgrid(theta, zs, indexing="ij")
        side = np.stack(
            [self.radius * np.cos(tt).ravel(), self.radius * np.sin(tt).ravel(), zz.ravel()], axis=1
        )
        side_n = np.stack([np.cos(tt).ravel(), np.sin(tt).ravel(), np.zeros(tt.size)], axis=1)

        pts = [side]
        nrm = [side_n]
        n_r = max(1, int(round(self.radius / pitch)))
        for sign in (1.0, -1.0):
            for ring in range(n_r + 1):
                r = self.radius * ring / n_r
                m = max(1, int(round(2.0 * math.pi * r / pitch))) if ring else 1
                ang = (np.arange(m) + 0.5) / m * 2.0 * math.pi
                cap = np.stack(
                    [r * np.cos(ang), r * np.sin(ang), np.full(m, sign * hh)], axis=1
                )
                pts.append(cap)
                nrm.append(np.tile([0.0, 0.0, sign], (m, 1)))
        return np.concatenate(pts), np.concatenate(nrm)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box centered at the origin, full sizes (sx, sy, sz)."""

    size_x: float
    size_y: float
    size_z: float

    @property
    def half(self) -> np.ndarray:
        return 0.5 * np.array([self.size_x, self.size_y, self.size_z])

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        half = self.half
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        t_lo = (-half - origin) * inv
        t_hi = (half - origin) * inv
        t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=1)
        t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=1)
        hit = (t_far >= np.maximum(t_near, 0.0)) & (t_far > 1e-9)
        t = np.where(t_near > 1e-9, t_near, t_far)
        return np.where(hit, t, _INF)

    def normal_at(self, points: np.ndarray) -> np.ndarray:
        rel = np.abs(points) / self.half
        axis = np.argmax(rel, axis=1)
        n = np.zeros_like(points)
        n[np.arange(len(points)), axis] = np.sign(points[np.arange(len(points)), axis])
        return n

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        return np.all(np.abs(points) <= self.half + margin, axis=1)

    def surface_points(self, pitch: float) -> tuple[np.ndarray, np.ndarray]:
        half = self.half
        pts, nrm = [], []
        for axis in range(3):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            nu = max(2, int(round(2 * half[u_ax] / pitch)) + 1)
            nv = max(2, int(round(2 * half[v_ax] / pitch)) + 1)
            us = np.linspace(-half[u_ax], half[u_ax], nu)
            vs = np.linspace(-half[v_ax], half[v_ax], nv)
            uu, vv = np.meshgrid(us, vs, indexing="ij")
            for sign in (1.0, -1.0):
                p = np.zeros((uu.size, 3))
                p[:, axis] = sign * half[axis]
                p[:, u_ax] = uu.ravel()
                p[:, v_ax] = vv.ravel()
                n = np.zeros((uu.size, 3))
                n[:, axis] = sign
                pts.append(p)
                nrm.append(n)
        return np.concatenate(pts), np.concatenate(nrm)


Shape = Sphere | Cylinder | Box


@lru_cache(maxsize=64)
def cached_surface(shape: Shape, pitch: float) -> tuple[np.ndarray, np.ndarray]:
    """Memoized local-frame surface samples; shapes are frozen and hashable."""
    pts, nrm = shape.surface_points(pitch)
    pts.setflags(write=False)
    nrm.setflags(write=False)
    return pts, nrm

"""Rigid shapes: disks and convex CCW polygons.

Provides perimeter parameterization (for boundary point sampling),
area/inertia, and contact probe circles used by the penalty contact
model. All geometry is in the body frame; callers apply the pose.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .config import ObjectSpec


class Disk:
    __slots__ = ("radius",)

    def __init__(self, radius):
        if radius <= 0:
            raise ConfigError("disk radius must be > 0")
        self.radius = float(radius)

    def perimeter(self):
        return 2.0 * np.pi * self.radius

    def area(self):
        return np.pi * self.radius ** 2

    def inertia_per_mass(self):
        return 0.5 * self.radius ** 2

    def boundary_points(self, s):
        """Points at arc-length positions s in [0, perimeter)."""
        ang = np.asarray(s) / self.radius
        return np.stack([self.radius * np.cos(ang), self.radius * np.sin(ang)], axis=-1)

    def scaled(self, factor):
        return Disk(self.radius * factor)


class Polygon:
    __slots__ = ("vertices", "_edge_len", "_cum")

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ConfigError("polygon needs >= 3 planar vertices")
        nxt = np.roll(v, -1, axis=0)
        cross = v[:, 0] * nxt[:, 1] - v[:, 1] * nxt[:, 0]
        if cross.sum() <= 0:
            raise ConfigError("polygon vertices must be counter-clockwise")
        edges = nxt - v
        nxt_edges = np.roll(edges, -1, axis=0)
        turns = edges[:, 0] * nxt_edges[:, 1] - edges[:, 1] * nxt_edges[:, 0]
        if np.any(turns <= 0):
            raise ConfigError("polygon must be convex")
        self.vertices = v
        self._edge_len = np.linalg.norm(edges, axis=1)
        self._cum = np.concatenate([[0.0], np.cumsum(self._edge_len)])

    def perimeter(self):
        return float(self._cum[-1])

    def area(self):
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * nxt[:, 1] - v[:, 1] * nxt[:, 0]))

    def inertia_per_mass(self):
        """Second polar moment about the centroid divided by area."""
        v = self.vertices - self.centroid()
        nxt = np.roll(v, -1, axis=0)
        cross = v[:, 0] * nxt[:, 1] - v[:, 1] * nxt[:, 0]
        num = np.sum(cross * (np.sum(v * v, axis=1) + np.sum(v * nxt, axis=1)
                              + np.sum(nxt * nxt, axis=1)))
        return float(num / (6.0 * np.sum(cross)))

    def centroid(self):
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        cross = v[:, 0] * nxt[:, 1] - v[:, 1] * nxt[:, 0]
        c = np.sum((v + nxt) * cross[:, None], axis=0) / (3.0 * np.sum(cross))
        return c

    def boundary_points(self, s):
        s = np.asarray(s, dtype=np.float64) % self.perimeter()
        idx = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0,
                      len(self._edge_len) - 1)
        frac = (s - self._cum[idx]) / self._edge_len[idx]
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        return v[idx] + frac[:, None] * (nxt[idx] - v[idx])

    def scaled(self, factor):
        return Polygon(self.vertices * factor)


def build_shape(spec: ObjectSpec, scale=1.0):
    if spec.kind == "disk":
        return Disk(spec.radius * scale)
    if spec.kind == "polygon":
        return Polygon(np.asarray(spec.vertices) * scale)
    raise ConfigError(f"unknown shape kind: {spec.kind}")


def contact_probes(shape, spacing):
    """Body-frame probe points along the boundary for penalty contacts.

    Disks are handled analytically by the contact solver and return an
    empty probe set here.
    """
    if isinstance(shape, Disk):
        return np.zeros((0, 2))
    per = shape.perimeter()
    n = max(int(np.ceil(per / spacing)), len(shape.vertices))
    s = np.linspace(0.0, per, n, endpoint=False)
    # include exact vertices so corners always carry a probe
    s = np.unique(np.concatenate([s, shape._cum[:-1]]))
    return shape.boundary_points(s)


def rot_matrix(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def shape_features(shape):
    """Geometry summary [equivalent radius, perimeter, is_disk]."""
    r_eq = float(np.sqrt(shape.area() / np.pi))
    return np.array([r_eq, shape.perimeter(), 1.0 if isinstance(shape, Disk) else 0.0])


def grip_radius(shape):
    """Largest center-to-boundary distance; the safe enclosing radius."""
    if isinstance(shape, Disk):
        return shape.radius
    return float(np.linalg.norm(shape.vertices, axis=1).max())

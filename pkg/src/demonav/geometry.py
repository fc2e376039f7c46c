"""2D geometry primitives: segments, rectangles, ray casting, collision tests.

Walls are zero-thickness line segments stored as (N, 4) float arrays of
``[x1, y1, x2, y2]`` rows. Obstacles are oriented rectangles contributing
four boundary segments plus an interior containment test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Obstacle",
    "segments_of_obstacles",
    "segment_hits_any",
    "ray_hit_distance",
    "points_in_obstacles",
]

_EPS = 1e-12


@dataclass(frozen=True)
class Obstacle:
    """Oriented rectangle blocking the agent's path.

    ``orientation`` is the angle (radians) of the length axis; width is
    measured perpendicular to it.
    """

    center: tuple[float, float]
    length: float
    width: float
    orientation: float

    def corners(self) -> np.ndarray:
        """4x2 corner array in counterclockwise order."""
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        axis = np.array([c, s])
        perp = np.array([-s, c])
        ctr = np.asarray(self.center, dtype=float)
        half_l = 0.5 * self.length * axis
        half_w = 0.5 * self.width * perp
        return np.stack(
            [ctr + half_l + half_w, ctr - half_l + half_w, ctr - half_l - half_w, ctr + half_l - half_w]
        )

    def edges(self) -> np.ndarray:
        """4x4 array of boundary segments."""
        crn = self.corners()
        nxt = np.roll(crn, -1, axis=0)
        return np.hstack([crn, nxt])

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of points strictly inside the (optionally inflated) rectangle."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        rel = pts - np.asarray(self.center, dtype=float)
        along = rel[:, 0] * c + rel[:, 1] * s
        across = -rel[:, 0] * s + rel[:, 1] * c
        return (np.abs(along) < 0.5 * self.length + margin) & (np.abs(across) < 0.5 * self.width + margin)

    def to_dict(self) -> dict:
        return {
            "center": [float(self.center[0]), float(self.center[1])],
            "length": float(self.length),
            "width": float(self.width),
            "orientation": float(self.orientation),
        }

    @staticmethod
    def from_dict(d: dict) -> "Obstacle":
        return Obstacle(tuple(d["center"]), d["length"], d["width"], d["orientation"])


def segments_of_obstacles(obstacles: list[Obstacle]) -> np.ndarray:
    if not obstacles:
        return np.zeros((0, 4))
    return np.vstack([ob.edges() for ob in obstacles])


def points_in_obstacles(points: np.ndarray, obstacles: list[Obstacle], margin: float = 0.0) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mask = np.zeros(len(pts), dtype=bool)
    for ob in obstacles:
        mask |= ob.contains(pts, margin=margin)
    return mask


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def segment_hits_any(p: np.ndarray, q: np.ndarray, segments: np.ndarray) -> bool:
    """True if the motion segment p->q touches any blocking segment.

    Endpoint touches count as hits (conservative for collision checking).
    """
    if segments.shape[0] == 0:
        return False
    px, py = float(p[0]), float(p[1])
    qx, qy = float(q[0]), float(q[1])
    ax, ay, bx, by = segments[:, 0], segments[:, 1], segments[:, 2], segments[:, 3]

    d1 = _cross(px, py, qx, qy, ax, ay)
    d2 = _cross(px, py, qx, qy, bx, by)
    d3 = _cross(ax, ay, bx, by, px, py)
    d4 = _cross(ax, ay, bx, by, qx, qy)

    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    if proper.any():
        return True

    # Collinear / endpoint-touching cases: a zero cross product with overlap
    # in the bounding boxes means the segments touch.
    def on_seg(cx, cy, ux, uy, vx, vy):
        return (
            (cx <= np.maximum(ux, vx) + _EPS)
            & (cx >= np.minimum(ux, vx) - _EPS)
            & (cy <= np.maximum(uy, vy) + _EPS)
            & (cy >= np.minimum(uy, vy) - _EPS)
        )

    touch = (
        ((np.abs(d1) < _EPS) & on_seg(ax, ay, px, py, qx, qy))
        | ((np.abs(d2) < _EPS) & on_seg(bx, by, px, py, qx, qy))
        | ((np.abs(d3) < _EPS) & on_seg(px, py, ax, ay, bx, by))
        | ((np.abs(d4) < _EPS) & on_seg(qx, qy, ax, ay, bx, by))
    )
    return bool(touch.any())


def ray_hit_distance(origin: np.ndarray, direction: np.ndarray, segments: np.ndarray) -> float:
    """Distance from origin along unit ``direction`` to the first segment hit.

    Returns +inf when the ray hits nothing. Rays grazing exactly parallel
    along a segment do not register (measure-zero configuration).
    """
    if segments.shape[0] == 0:
        return np.inf
    ox, oy = float(origin[0]), float(origin[1])
    dx, dy = float(direction[0]), float(direction[1])
    ax, ay = segments[:, 0], segments[:, 1]
    ex, ey = segments[:, 2] - ax, segments[:, 3] - ay

    denom = dx * ey - dy * ex
    ok = np.abs(denom) > _EPS
    if not ok.any():
        return np.inf
    rx, ry = ax - ox, ay - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rx * ey - ry * ex) / denom
        u = (rx * dy - ry * dx) / denom
    valid = ok & (t >= 0.0) & (u >= -_EPS) & (u <= 1.0 + _EPS)
    if not valid.any():
        return np.inf
    return float(t[valid].min())

"""Deterministic SVG rendering of maps, demonstrations, and rollouts.

Color conventions: black walls, gray demo points, blue start, green goal,
brown obstacles, red rollout line. The writer emits plain SVG text with fixed
float formatting, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .demos import Demonstration
from .geometry import Obstacle
from .maze import MazeMap

__all__ = ["render_trajectory", "render_svg"]

_SCALE = 24.0
_PAD = 12.0

WALL_COLOR = "#000000"
DEMO_COLOR = "#9e9e9e"
START_COLOR = "#1f62d0"
GOAL_COLOR = "#2e9e44"
OBSTACLE_COLOR = "#8b5a2b"
ROLLOUT_COLOR = "#d62728"


def _fmt(x: float) -> str:
    return f"{x:.3f}"


class _Svg:
    def __init__(self, width: float, height: float):
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
            f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
            f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="#ffffff"/>',
        ]

    def pt(self, p) -> tuple[float, float]:
        # flip y so the maze's +y points up on screen
        return _PAD + _SCALE * float(p[0]), self.height - (_PAD + _SCALE * float(p[1]))

    def line(self, a, b, color, width=2.0):
        x1, y1 = self.pt(a)
        x2, y2 = self.pt(b)
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{_fmt(width)}" stroke-linecap="round"/>'
        )

    def circle(self, p, r_units, color):
        x, y = self.pt(p)
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r_units * _SCALE)}" fill="{color}"/>'
        )

    def polygon(self, pts, color):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (self.pt(p) for p in pts))
        self.parts.append(f'<polygon points="{coords}" fill="{color}" fill-opacity="0.9"/>')

    def polyline(self, pts, color, width=2.0):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (self.pt(p) for p in pts))
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(width)}" stroke-linejoin="round"/>'
        )

    def text(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def render_svg(
    maze: MazeMap,
    demo: Demonstration | None = None,
    rollout: np.ndarray | None = None,
    obstacles: list[Obstacle] | None = None,
) -> str:
    side = maze.grid_size * _SCALE + 2 * _PAD
    svg = _Svg(side, side)

    for ob in obstacles or []:
        svg.polygon(ob.corners(), OBSTACLE_COLOR)
    for x1, y1, x2, y2 in maze.walls:
        svg.line((x1, y1), (x2, y2), WALL_COLOR, width=2.5)
    if demo is not None:
        for p in demo.positions:
            svg.circle(p, 0.09, DEMO_COLOR)
        svg.circle(demo.goal, 0.16, GOAL_COLOR)
    svg.circle(maze.start, 0.16, START_COLOR)
    if rollout is not None and len(rollout) > 1:
        svg.polyline(rollout, ROLLOUT_COLOR, width=2.0)
    return svg.text()


def render_trajectory(
    maze: MazeMap,
    demo: Demonstration | None,
    rollout: np.ndarray | None,
    obstacles: list[Obstacle] | None,
    path,
) -> None:
    with open(path, "w") as f:
        f.write(render_svg(maze, demo, rollout, obstacles))

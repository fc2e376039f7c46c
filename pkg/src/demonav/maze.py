"""Procedural maze maps: depth-first carving, cell graph queries, JSON I/O.

A map of nominal size ``grid_size`` with corridors ``path_width`` wide is a
lattice of ``grid_size / path_width - 1`` square path cells per side, inset by
half a path width so the map's geometric center falls at the center of the
middle cell (the fixed start position). Depth-first traversal of the lattice
carves a spanning tree; every uncarved shared boundary becomes a zero-thickness
wall segment, and the perimeter of the path region is fully walled.

For the even-lattice corner case (e.g. grid_size=6, path_width=2) the center
of the map is a lattice vertex, so the start is moved to the center of the
cell just below-left of it to keep it strictly inside a path cell.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import segment_hits_any
from .rng import stream

__all__ = ["MazeMap", "MazeConfigError", "generate_maze", "maze_is_connected"]


class MazeConfigError(ValueError):
    """Invalid maze generation parameters."""


@dataclass
class MazeMap:
    grid_size: int
    path_width: int
    walls: np.ndarray  # (N, 4) rows of [x1, y1, x2, y2]
    start: np.ndarray  # (2,)
    seed: int
    map_id: str
    _open_edges: dict | None = field(default=None, repr=False, compare=False)

    # -- lattice helpers ----------------------------------------------------
    @property
    def margin(self) -> float:
        return self.path_width / 2.0

    @property
    def n_cells(self) -> int:
        return self.grid_size // self.path_width - 1

    def cell_of(self, point) -> tuple[int, int]:
        p = np.asarray(point, dtype=float)
        pw = self.path_width
        i = int(np.floor((p[0] - self.margin) / pw))
        j = int(np.floor((p[1] - self.margin) / pw))
        n = self.n_cells
        return (min(max(i, 0), n - 1), min(max(j, 0), n - 1))

    def cell_center(self, cell: tuple[int, int]) -> np.ndarray:
        pw = self.path_width
        return np.array([self.margin + (cell[0] + 0.5) * pw, self.margin + (cell[1] + 0.5) * pw])

    def in_bounds(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        lo, hi = self.margin, self.grid_size - self.margin
        return bool(lo < p[0] < hi and lo < p[1] < hi)

    # -- cell graph ----------------------------------------------------------
    def edge_open(self, a: tuple[int, int], b: tuple[int, int]) -> bool:
        """Whether the shared boundary of adjacent cells a, b is passable.

        Probed geometrically (center-to-center segment against the wall set),
        so it also works for maps loaded from files or built by hand.
        """
        if self._open_edges is None:
            self._open_edges = {}
        key = (a, b) if a <= b else (b, a)
        if key not in self._open_edges:
            hit = segment_hits_any(self.cell_center(a), self.cell_center(b), self.walls)
            self._open_edges[key] = not hit
        return self._open_edges[key]

    def neighbors(self, cell: tuple[int, int]):
        n = self.n_cells
        i, j = cell
        for di, dj in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            ni, nj = i + di, j + dj
            if 0 <= ni < n and 0 <= nj < n and self.edge_open(cell, (ni, nj)):
                yield (ni, nj)

    def graph_distances(self, source: tuple[int, int]) -> dict[tuple[int, int], int]:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            cur = queue.popleft()
            for nb in self.neighbors(cur):
                if nb not in dist:
                    dist[nb] = dist[cur] + 1
                    queue.append(nb)
        return dist

    def cell_path(self, src: tuple[int, int], dst: tuple[int, int]) -> list[tuple[int, int]]:
        """BFS cell path src -> dst (inclusive). Raises KeyError if unreachable."""
        prev: dict[tuple[int, int], tuple[int, int] | None] = {src: None}
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            if cur == dst:
                path = [cur]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for nb in self.neighbors(cur):
                if nb not in prev:
                    prev[nb] = cur
                    queue.append(nb)
        raise KeyError(f"cell {dst} unreachable from {src}")

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "map_id": self.map_id,
            "seed": int(self.seed),
            "grid_size": int(self.grid_size),
            "path_width": int(self.path_width),
            "walls": [[float(v) for v in row] for row in self.walls],
            "start": [float(self.start[0]), float(self.start[1])],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(d: dict) -> "MazeMap":
        walls = np.asarray(d["walls"], dtype=float).reshape(-1, 4)
        return MazeMap(
            grid_size=int(d["grid_size"]),
            path_width=int(d["path_width"]),
            walls=walls,
            start=np.asarray(d["start"], dtype=float),
            seed=int(d["seed"]),
            map_id=str(d["map_id"]),
        )

    @staticmethod
    def from_json(text: str) -> "MazeMap":
        return MazeMap.from_dict(json.loads(text))


def generate_maze(seed: int, grid_size: int, path_width: int) -> MazeMap:
    """Depth-first maze over the path-cell lattice; deterministic in the seed."""
    if grid_size % 2 != 0 or grid_size < 2 * path_width:
        raise MazeConfigError(f"grid_size must be even and >= 2*path_width, got {grid_size}")
    if path_width < 1:
        raise MazeConfigError(f"path_width must be >= 1, got {path_width}")
    if grid_size % path_width != 0:
        raise MazeConfigError(f"grid_size must be a multiple of path_width, got {grid_size}/{path_width}")

    n = grid_size // path_width - 1
    pw = float(path_width)
    m = pw / 2.0
    rng = stream(seed, "maze")

    carved: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    if n > 1:
        visited = np.zeros((n, n), dtype=bool)
        stack = [(0, 0)]
        visited[0, 0] = True
        while stack:
            cell = stack[-1]
            i, j = cell
            options = []
            for di, dj in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                ni, nj = i + di, j + dj
                if 0 <= ni < n and 0 <= nj < n and not visited[ni, nj]:
                    options.append((ni, nj))
            if not options:
                stack.pop()
                continue
            nxt = options[int(rng.integers(len(options)))]
            visited[nxt] = True
            carved.add((cell, nxt) if cell <= nxt else (nxt, cell))
            stack.append(nxt)

    walls: list[list[float]] = []
    lo, hi = m, grid_size - m
    walls.extend(
        [[lo, lo, hi, lo], [hi, lo, hi, hi], [hi, hi, lo, hi], [lo, hi, lo, lo]]
    )
    for i in range(n):
        for j in range(n):
            # boundary with the right neighbor
            if i + 1 < n and ((i, j), (i + 1, j)) not in carved:
                x = m + (i + 1) * pw
                walls.append([x, m + j * pw, x, m + (j + 1) * pw])
            # boundary with the upper neighbor
            if j + 1 < n and ((i, j), (i, j + 1)) not in carved:
                y = m + (j + 1) * pw
                walls.append([m + i * pw, y, m + (i + 1) * pw, y])

    center = np.array([grid_size / 2.0, grid_size / 2.0])
    if n % 2 == 1:
        start = center
    else:
        # center sits on a lattice vertex; snap to the adjacent cell's center
        start = center - np.array([pw / 2.0, pw / 2.0])

    map_id = f"maze{grid_size}x{grid_size}-pw{path_width}-s{seed}"
    return MazeMap(
        grid_size=grid_size,
        path_width=path_width,
        walls=np.asarray(walls, dtype=float),
        start=start,
        seed=seed,
        map_id=map_id,
    )


def maze_is_connected(maze: MazeMap) -> bool:
    """Flood fill over the cell graph reaches every path cell."""
    n = maze.n_cells
    return len(maze.graph_distances((0, 0))) == n * n

"""Constructive trace-back policy: a provably sufficient single-demo imitator.

The policy repeatedly targets the furthest demonstration state reachable by a
straight collision-free segment and steps toward it. When an unexpected
obstacle hides every successor state, it routes around the obstacle through
a small visibility graph built from points just clear of the obstacle's
corners and sides; if even that fails it steps toward the nearest visible
demonstration state to regain line of sight.
"""

from __future__ import annotations

import numpy as np

from .demos import DEFAULT_MAX_STEP, Demonstration
from .env import EnvState, NavEnv

__all__ = ["OraclePolicy", "OracleStuck"]

# lateral clearances tried when routing around an obstacle; the middle value
# centers the via point in the gap between obstacle side and corridor wall
_SIDE_MARGINS = (0.1625, 0.1, 0.25)
_END_MARGIN = 0.25
_ARRIVE_EPS = 1e-9


class OracleStuck(RuntimeError):
    """No demonstration state is visible or plan-reachable from here."""


class OraclePolicy:
    def __init__(self, env: NavEnv, demo: Demonstration, max_step: float = DEFAULT_MAX_STEP):
        self.env = env
        self.demo = demo
        self.max_step = max_step
        self.progress = 0  # highest demo index we have arrived at so far
        self._plan: list[np.ndarray] = []
        self._plan_target = -1
        self._vias = self._via_candidates()

    # -- public interface -----------------------------------------------------
    def act(self, state: EnvState) -> np.ndarray:
        pos = np.asarray(state.position, dtype=float)
        if np.linalg.norm(pos - self.demo.goal) <= self.demo.goal_radius:
            return np.zeros(2)  # terminal: the episode is already a success
        visible = self._visible_indices(pos)
        ahead = [j for j in visible if j > self.progress]

        if ahead:
            target = max(ahead)
            self._plan = []
            return self._step_toward(pos, self.demo.positions[target], arrive_idx=target)

        if not self._plan or self.env.segment_blocked(pos, self._plan[0]):
            self._plan = []
            self._plan_detour(pos)
        if self._plan:
            return self._follow_plan(pos)

        # trace back toward the nearest visible state to regain line of sight
        candidates = [j for j in visible if np.linalg.norm(self.demo.positions[j] - pos) > _ARRIVE_EPS]
        if candidates:
            nearest = min(candidates, key=lambda j: np.linalg.norm(self.demo.positions[j] - pos))
            return self._step_toward(pos, self.demo.positions[nearest], arrive_idx=None)
        raise OracleStuck(f"no demo state visible from {pos}")

    # -- movement ---------------------------------------------------------------
    def _step_toward(self, pos: np.ndarray, target: np.ndarray, arrive_idx: int | None) -> np.ndarray:
        delta = target - pos
        dist = float(np.linalg.norm(delta))
        if dist <= self.max_step:
            if arrive_idx is not None:
                self.progress = max(self.progress, arrive_idx)
            return delta
        return delta * (self.max_step / dist)

    def _follow_plan(self, pos: np.ndarray) -> np.ndarray:
        while self._plan and np.linalg.norm(self._plan[0] - pos) <= _ARRIVE_EPS:
            self._plan.pop(0)
        if not self._plan:
            return self._step_toward(pos, self.demo.positions[self._plan_target], arrive_idx=self._plan_target)
        return self._step_toward(pos, self._plan[0], arrive_idx=None)

    # -- visibility and planning --------------------------------------------------
    def _visible_indices(self, pos: np.ndarray) -> list[int]:
        out = []
        for j in range(len(self.demo.positions)):
            if not self.env.segment_blocked(pos, self.demo.positions[j]):
                out.append(j)
        return out

    def _via_candidates(self) -> list[np.ndarray]:
        vias = []
        for ob in self.env.obstacles:
            c, s = np.cos(ob.orientation), np.sin(ob.orientation)
            axis = np.array([c, s])
            perp = np.array([-s, c])
            ctr = np.asarray(ob.center, dtype=float)
            for lat in _SIDE_MARGINS:
                side_off = (0.5 * ob.width + lat) * perp
                end_off = (0.5 * ob.length + _END_MARGIN) * axis
                for sgn in (1.0, -1.0):
                    for pt in (
                        ctr + sgn * side_off,
                        ctr + sgn * side_off + end_off,
                        ctr + sgn * side_off - end_off,
                    ):
                        if self.env.position_free(pt):
                            vias.append(pt)
        return vias

    def _plan_detour(self, pos: np.ndarray) -> bool:
        """Route through free via points to the furthest plan-reachable successor.

        First pass uses only the obstacle-derived via points; if that graph
        cannot see any successor (e.g. the agent sits in a slit between two
        obstacles), a dense local grid of free points around the agent is
        added and the search repeats.
        """
        targets = list(range(self.progress + 1, len(self.demo.positions)))
        if not targets:
            return False
        if self._vias and self._bfs_plan(pos, self._vias, targets):
            return True
        extra = self._local_grid(pos)
        if not extra:
            return False
        return self._bfs_plan(pos, self._vias + extra, targets, max_edge=1.5)

    def _local_grid(self, pos: np.ndarray, radius: float = 2.2, step: float = 0.35) -> list[np.ndarray]:
        offsets = np.arange(-radius, radius + 1e-9, step)
        pts = []
        for dx in offsets:
            for dy in offsets:
                p = pos + np.array([dx, dy])
                if (dx or dy) and self.env.position_free(p):
                    pts.append(p)
        return pts

    def _bfs_plan(self, pos: np.ndarray, vias: list[np.ndarray], targets: list[int], max_edge: float = 2.5) -> bool:
        from collections import deque

        nodes = [pos] + list(vias)
        n = len(nodes)
        coords = np.asarray(nodes)
        adj: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            d = np.linalg.norm(coords[i + 1 :] - coords[i], axis=1)
            for off in np.nonzero(d <= max_edge)[0]:
                j = i + 1 + int(off)
                if not self.env.segment_blocked(nodes[i], nodes[j]):
                    adj[i].append(j)
                    adj[j].append(i)

        demo_pos = self.demo.positions
        prev: dict[int, int | None] = {0: None}
        queue = deque([0])
        best: tuple[int, int] | None = None  # (node, demo index)
        while queue:
            cur = queue.popleft()
            seen = [t for t in targets if not self.env.segment_blocked(nodes[cur], demo_pos[t])]
            if seen:
                best = (cur, max(seen))
                break
            for nb in adj[cur]:
                if nb not in prev:
                    prev[nb] = cur
                    queue.append(nb)
        if best is None:
            return False
        node, target = best
        chain = []
        cur: int | None = node
        while cur is not None and cur != 0:
            chain.append(nodes[cur])
            cur = prev[cur]
        self._plan = chain[::-1]
        self._plan_target = target
        return True

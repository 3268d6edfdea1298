"""Evaluation metrics: coverage, SR, SPL, distance-to-goal, visit uniformity.

The grid BFS used here is the ground-truth oracle for shortest paths and
geodesic distances. It reads the true map and is for evaluation only; the
agent-facing modules never import it.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .gridworld import GridMap


class CoverageTracker:
    """Per-cell visited flags and visit counts over the reachable free space."""

    def __init__(self, grid: GridMap):
        self.grid = grid
        self.reachable = len(grid.free_cells())
        self.hist: Dict[Tuple[int, int], int] = {}

    def visit(self, x: int, y: int) -> None:
        self.hist[(x, y)] = self.hist.get((x, y), 0) + 1

    def coverage(self) -> float:
        return len(self.hist) / self.reachable

    def uniformity(self) -> float:
        return uniformity(list(self.hist.values()), self.reachable)


def uniformity(counts, reachable: int) -> float:
    """Entropy of the normalized visit histogram, scaled to [0, 1]."""
    counts = np.asarray(list(counts), float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    p = counts / total
    p = p[p > 0]
    return float(-(p * np.log(p)).sum() / math.log(reachable))


def grid_shortest_length(grid: GridMap, start: Tuple[int, int],
                         goal: Tuple[int, int]) -> Optional[int]:
    """Geodesic cell distance by BFS on the true map (evaluation oracle)."""
    if not grid.is_free(*start) or not grid.is_free(*goal):
        raise ValueError("start and goal must be free cells")
    if start == goal:
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nxt = (x + dx, y + dy)
            if nxt in dist or not grid.is_free(*nxt):
                continue
            dist[nxt] = dist[(x, y)] + 1
            if nxt == goal:
                return dist[nxt]
            queue.append(nxt)
    return None


def distance_to_goal(grid: GridMap, final_cell: Tuple[int, int],
                     goal_cell: Tuple[int, int]) -> Optional[float]:
    """Geodesic distance in cells; None flags an unreachable pairing."""
    d = grid_shortest_length(grid, final_cell, goal_cell)
    return float(d) if d is not None else None


def spl(episodes: List[Tuple[bool, float, float]]) -> float:
    """Mean of success * shortest / max(path, shortest) over episodes.

    Episodes are (success, path_length, shortest_length); start == goal
    episodes carry shortest_length 0 and count as ratio 1 when successful.
    """
    if not episodes:
        raise ValueError("spl of an empty episode list is undefined")
    total = 0.0
    for success, path, shortest in episodes:
        if not success:
            continue
        if shortest <= 0:
            total += 1.0
        else:
            total += shortest / max(path, shortest)
    return total / len(episodes)


@dataclass
class EvalReport:
    sr: float
    spl: float
    mean_dts: float
    episodes: List[dict] = field(default_factory=list)
    coverage_curve: List[Tuple[int, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["episode,success,steps,shortest,spl,dts"]
        for i, ep in enumerate(self.episodes):
            lines.append(
                f"{i},{int(ep['success'])},{ep['steps']},{ep['shortest']},"
                f"{ep['spl']:.6f},{ep['dts']}")
        return "\n".join(lines) + "\n"


def build_report(episodes: List[dict]) -> EvalReport:
    if not episodes:
        raise ValueError("no episodes to report")
    sr = sum(ep["success"] for ep in episodes) / len(episodes)
    spl_value = spl([(ep["success"], ep["steps"], ep["shortest"])
                     for ep in episodes])
    dts = [ep["dts"] for ep in episodes if ep["dts"] is not None]
    mean_dts = float(np.mean(dts)) if dts else float("nan")
    for ep in episodes:
        if ep["success"] and ep["shortest"] > 0:
            ep["spl"] = ep["shortest"] / max(ep["steps"], ep["shortest"])
        else:
            ep["spl"] = 1.0 if ep["success"] else 0.0
    return EvalReport(sr, spl_value, mean_dts, episodes)

"""Static SVG rendering of a map plus graph memory snapshot."""
from __future__ import annotations

import math
from typing import Optional, Tuple

from . import gridworld as gw
from .graph import GraphMemory

CELL = 20
_LANDMARK_FILL = "#ffd27f"


def render_svg(grid: gw.GridMap, graph: Optional[GraphMemory] = None) -> str:
    """Deterministic SVG: grid tiles, landmark cells, node dots, edge lines."""
    width = grid.width * CELL
    height = grid.height * CELL
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for y in range(grid.height):
        for x in range(grid.width):
            tile = int(grid.tiles[x, y])
            if tile == gw.FREE:
                continue
            fill = "#333333" if tile == gw.WALL else _LANDMARK_FILL
            parts.append(
                f'<rect x="{x * CELL}" y="{y * CELL}" width="{CELL}" '
                f'height="{CELL}" fill="{fill}"/>')
            if tile != gw.WALL:
                parts.append(
                    f'<text x="{x * CELL + CELL // 2}" y="{y * CELL + 15}" '
                    f'font-size="12" text-anchor="middle">'
                    f'{gw.landmark_id(tile)}</text>')

    if graph is not None and graph.nodes:
        origin = graph.origin or (0.0, 0.0, 0.0)

        def to_px(pose) -> Tuple[float, float]:
            return ((pose[0] + origin[0] + 0.5) * CELL,
                    (pose[1] + origin[1] + 0.5) * CELL)

        for key in sorted(graph.edges):
            edge = graph.edges[key]
            x1, y1 = to_px(graph.nodes[edge.i].pose)
            x2, y2 = to_px(graph.nodes[edge.j].pose)
            parts.append(
                f'<line class="edge" x1="{x1:.1f}" y1="{y1:.1f}" '
                f'x2="{x2:.1f}" y2="{y2:.1f}" stroke="#4a90d9" '
                f'stroke-width="1.5"/>')
        for node_id in sorted(graph.nodes):
            node = graph.nodes[node_id]
            cx, cy = to_px(node.pose)
            r = 3.0 + 2.0 * math.sqrt(node.count)
            parts.append(
                f'<circle class="node" cx="{cx:.1f}" cy="{cy:.1f}" '
                f'r="{min(r, 9.0):.1f}" fill="#d94a4a" fill-opacity="0.8"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

"""Edge-pixel geometry: chain tracing, local tangents, geodesic neighborhoods.

Annotated edge pixels form an 8-connected graph.  Chains are ordered
traversals of that graph (each pixel appears in exactly one chain
position); geodesic distance between edge pixels is the step count of the
shortest path through the graph, which coincides with the along-chain
distance on simple curves and stays well defined at junctions.

Tangent angles live in [0, pi) and are measured against the positive
x-axis of the (x=col, y=row) frame.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InputFormatError
from .grids import EdgeLabelMap, PixelCoord, edge_pixel_array

_NEIGHBOR_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass
class EdgeChains:
    """Traced chains plus the adjacency needed for geodesic queries."""

    chains: list[list[PixelCoord]]
    adjacency: dict = field(repr=False)

    @classmethod
    def from_label_map(cls, label_map: EdgeLabelMap) -> "EdgeChains":
        pixels = [PixelCoord(int(r), int(c)) for r, c in edge_pixel_array(label_map)]
        pixel_set = set(pixels)
        adjacency = {
            p: [
                PixelCoord(p.row + dr, p.col + dc)
                for dr, dc in _NEIGHBOR_OFFSETS
                if PixelCoord(p.row + dr, p.col + dc) in pixel_set
            ]
            for p in pixels
        }
        chains = _peel_chains(pixels, adjacency)
        return cls(chains=chains, adjacency=adjacency)

    def contains(self, q: PixelCoord) -> bool:
        return q in self.adjacency

    def geodesic_ball(self, q: PixelCoord, radius: int) -> list[tuple[PixelCoord, int]]:
        """Edge pixels within ``radius`` graph steps of ``q``, with distances, BFS order."""
        if q not in self.adjacency:
            raise InputFormatError(f"pixel {tuple(q)} is not an edge pixel")
        dist = {q: 0}
        out = [(q, 0)]
        queue = deque([q])
        while queue:
            cur = queue.popleft()
            d = dist[cur]
            if d == radius:
                continue
            for nb in self.adjacency[cur]:
                if nb not in dist:
                    dist[nb] = d + 1
                    out.append((nb, d + 1))
                    queue.append(nb)
        return out

    def neighborhood(self, q: PixelCoord, radius: int) -> list[PixelCoord]:
        """Edge pixels v != q with geodesic distance <= radius, row-major order."""
        if radius < 1:
            raise InputFormatError(f"geodesic radius must be >= 1, got {radius}")
        ball = [p for p, d in self.geodesic_ball(q, radius) if d > 0]
        return sorted(ball)

    def tangent(self, q: PixelCoord, fit_radius: int) -> tuple[float, bool]:
        """Local tangent angle at ``q`` from a total-least-squares line fit.

        Fits the edge pixels within ``fit_radius`` geodesic steps and
        returns ``(theta, fallback)``; ``fallback`` is True when no
        direction is defined (isolated pixel, or rotation-symmetric
        neighborhood), in which case theta is 0 and callers should use an
        isotropic kernel instead.
        """
        pts = [p for p, _ in self.geodesic_ball(q, fit_radius)]
        if len(pts) < 2:
            return 0.0, True
        xs = np.array([p.col for p in pts], dtype=np.float64)
        ys = np.array([p.row for p in pts], dtype=np.float64)
        xs -= xs.mean()
        ys -= ys.mean()
        cxx = float(xs @ xs)
        cyy = float(ys @ ys)
        cxy = float(xs @ ys)
        # principal axis of the 2x2 scatter matrix
        if math.hypot(cxx - cyy, 2.0 * cxy) <= 1e-12 * max(cxx + cyy, 1.0):
            return 0.0, True
        theta = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
        if theta < 0.0:
            theta += math.pi
        if theta >= math.pi:
            theta -= math.pi
        return theta, False


def _peel_chains(pixels: list[PixelCoord], adjacency: dict) -> list[list[PixelCoord]]:
    """Decompose edge pixels into ordered chains of 8-neighbor steps.

    Walks greedily from endpoints first (degree-1 pixels, smallest first),
    then from any remaining unvisited pixel, so chains are deterministic
    and every pixel lands in exactly one chain position.
    """
    visited: set[PixelCoord] = set()
    chains: list[list[PixelCoord]] = []

    def walk(start: PixelCoord) -> list[PixelCoord]:
        chain = [start]
        visited.add(start)
        cur = start
        while True:
            nxt = None
            for nb in sorted(adjacency[cur]):
                if nb not in visited:
                    nxt = nb
                    break
            if nxt is None:
                return chain
            chain.append(nxt)
            visited.add(nxt)
            cur = nxt

    endpoints = sorted(p for p in pixels if len(adjacency[p]) == 1)
    for p in endpoints:
        if p not in visited:
            chains.append(walk(p))
    for p in pixels:  # closed loops and junction leftovers
        if p not in visited:
            chains.append(walk(p))
    return chains


def estimate_tangent(chains: EdgeChains, q: PixelCoord, fit_radius: int = 4) -> tuple[float, bool]:
    """Tangent angle in [0, pi) at edge pixel ``q``; see :meth:`EdgeChains.tangent`."""
    if not chains.contains(q):
        raise InputFormatError(f"pixel {tuple(q)} is not an edge pixel")
    if fit_radius < 1:
        raise InputFormatError(f"fit_radius must be >= 1, got {fit_radius}")
    return chains.tangent(q, fit_radius)


def geodesic_neighborhood(chains: EdgeChains, q: PixelCoord, radius: int) -> list[PixelCoord]:
    """Edge pixels v != q within ``radius`` geodesic steps of ``q``."""
    return chains.neighborhood(q, radius)

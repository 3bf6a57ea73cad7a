"""Deterministic triangulation of convex polygons.

A centroid fan is refined uniformly (every triangle split into four at its
edge midpoints) until the longest edge is below the requested size.  Each
boundary edge remembers which polygon side it came from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvexInput
from .geometry import Polygon

MIN_ANGLE_DEG = 5.0


def _edge_lengths(points, tris):
    p = points[tris]
    return np.stack(
        [
            np.hypot(*(p[:, 1] - p[:, 0]).T),
            np.hypot(*(p[:, 2] - p[:, 1]).T),
            np.hypot(*(p[:, 0] - p[:, 2]).T),
        ],
        axis=1,
    )


def _min_angle_deg(points, tris) -> float:
    L = _edge_lengths(points, tris)
    a, b, c = L[:, 1], L[:, 2], L[:, 0]  # sides opposite vertices 0, 1, 2
    cos0 = (b * b + c * c - a * a) / (2 * b * c)
    cos1 = (a * a + c * c - b * b) / (2 * a * c)
    cos2 = (a * a + b * b - c * c) / (2 * a * b)
    ang = np.arccos(np.clip(np.stack([cos0, cos1, cos2]), -1.0, 1.0))
    return float(np.degrees(ang.min()))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh of a polygon.

    ``boundary_edges[k]`` runs counterclockwise along the boundary and lies on
    polygon side ``boundary_side[k]`` (an index into ``polygon.tags``).
    """

    points: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_side: np.ndarray
    polygon: Polygon
    levels: int = 0
    h: float = field(init=False)
    min_angle: float = field(init=False)

    def __post_init__(self):
        for name in ("points", "triangles", "boundary_edges", "boundary_side"):
            getattr(self, name).setflags(write=False)
        object.__setattr__(self, "h", float(_edge_lengths(self.points, self.triangles).max()))
        object.__setattr__(self, "min_angle", _min_angle_deg(self.points, self.triangles))

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def tags(self) -> tuple:
        return self.polygon.tags

    @property
    def trusted(self) -> bool:
        """False when some triangle is a needle below the reporting threshold."""
        return self.min_angle >= MIN_ANGLE_DEG

    def triangle_areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)


def triangulate(p: Polygon, target_h: float, levels: int | None = None) -> Mesh:
    """Fan from the vertex centroid, then refine until the longest edge <= ``target_h``.

    Passing ``levels`` fixes the number of refinements instead; scans use it to
    keep the mesh topology constant across nearby flow times.
    """
    if not p.is_convex():
        raise NonConvexInput("triangulate accepts convex polygons only")
    n = len(p)
    c = p.vertices.mean(axis=0)
    points = np.vstack([p.vertices, c[None, :]])
    idx = np.arange(n)
    tris = np.column_stack([np.full(n, n), idx, (idx + 1) % n])
    bedges = np.column_stack([idx, (idx + 1) % n])
    m = Mesh(points, tris, bedges, idx.copy(), p, 0)
    if levels is None:
        if not target_h > 0:
            raise ValueError("target_h must be positive")
        levels = max(0, math.ceil(math.log2(m.h / target_h) - 1e-12))
    for _ in range(levels):
        m = refine(m)
    return m


def refine(m: Mesh) -> Mesh:
    """Split each triangle into four through its edge midpoints."""
    tris = m.triangles
    nv = m.n_points
    local = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    keys = np.sort(local, axis=2)
    code = keys[..., 0].astype(np.int64) * nv + keys[..., 1]
    uniq, inverse = np.unique(code.ravel(), return_inverse=True)
    mids = nv + inverse.reshape(-1, 3)
    a_, b_ = uniq // nv, uniq % nv
    new_pts = 0.5 * (m.points[a_] + m.points[b_])
    points = np.vstack([m.points, new_pts])

    v0, v1, v2 = tris.T
    m01, m12, m20 = mids.T
    new_tris = np.concatenate(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    be = m.boundary_edges
    bkey = np.sort(be, axis=1)
    bmid = nv + np.searchsorted(uniq, bkey[:, 0].astype(np.int64) * nv + bkey[:, 1])
    new_be = np.empty((2 * len(be), 2), dtype=be.dtype)
    new_be[0::2, 0], new_be[0::2, 1] = be[:, 0], bmid
    new_be[1::2, 0], new_be[1::2, 1] = bmid, be[:, 1]
    new_side = np.repeat(m.boundary_side, 2)
    return Mesh(points, new_tris, new_be, new_side, m.polygon, m.levels + 1)

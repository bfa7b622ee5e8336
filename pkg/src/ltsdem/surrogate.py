"""Multiscale surrogate triangle hierarchies.

Level 0 holds the fine mesh triangles with the particle's own halo width.
Each coarser level replaces groups of triangles with one synthesized
triangle whose enlarged halo is guaranteed to contain every child halo:
the halo of a triangle is its Minkowski sum with a ball, so the exact
covering width is max over child vertices of (distance to the parent
triangle plus the child halo width).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

# Guards against float drift when re-checking containment downstream.
_EPS_PAD = 1e-12


@dataclass
class SurrogateLevel:
    corners: np.ndarray  # (k, 3, 3) triangle corner coordinates
    epsilon: np.ndarray  # (k,) halo width per triangle
    children: list[np.ndarray] | None  # indices into the next finer level

    @property
    def size(self) -> int:
        return len(self.corners)


@dataclass
class SurrogateTree:
    levels: list[SurrogateLevel]  # levels[0] fine, levels[-1] coarsest

    @property
    def depth(self) -> int:
        return len(self.levels)

    def level_sizes(self) -> list[int]:
        return [lvl.size for lvl in self.levels]

    def root_level(self) -> int:
        return len(self.levels) - 1


def _fit_parent_triangle(points: np.ndarray) -> np.ndarray:
    """Triangle in the best-fit plane of `points` covering their projection.

    A right triangle with doubled legs always contains the projected
    bounding rectangle, so in-plane deviation costs no halo width; only
    out-of-plane spread does.
    """
    centroid = points.mean(axis=0)
    rel = points - centroid
    # Principal directions; the least-variance axis is the plane normal.
    _, _, vt = np.linalg.svd(rel, full_matrices=False)
    u, v = vt[0], vt[1]
    su = rel @ u
    sv = rel @ v
    pad = max(1e-9, 1e-6 * float(np.abs(rel).max() or 1.0))
    lo_u, hi_u = su.min() - pad, su.max() + pad
    lo_v, hi_v = sv.min() - pad, sv.max() + pad
    w, h = hi_u - lo_u, hi_v - lo_v
    p0 = centroid + lo_u * u + lo_v * v
    return np.stack([p0, p0 + 2.0 * w * u, p0 + 2.0 * h * v])


def build_surrogate_tree(
    mesh, epsilon: float, fanout: int = 4, max_levels: int = 8
) -> SurrogateTree:
    """Greedy agglomeration of triangles into a coarsening hierarchy.

    `mesh` is a TriangleMesh (or a raw (m, 3, 3) corner array). Triangles
    are ordered along a Morton curve of their centroids and grouped
    `fanout` at a time, so the grouping is deterministic and roughly
    spatial. Coarsening stops at a single root or at the level cap.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if fanout < 2:
        raise ValueError(f"fanout must be at least 2, got {fanout}")
    if hasattr(mesh, "corners"):
        corners = np.stack(mesh.corners(), axis=1)
    else:
        corners = np.asarray(mesh, dtype=float).reshape(-1, 3, 3)
    levels = [
        SurrogateLevel(
            corners=corners,
            epsilon=np.full(len(corners), float(epsilon)),
            children=None,
        )
    ]
    while levels[-1].size > 1 and len(levels) < max_levels:
        fine = levels[-1]
        order = kernels.morton_order(fine.corners.mean(axis=1))
        groups = [order[i : i + fanout] for i in range(0, len(order), fanout)]
        parent_corners = np.empty((len(groups), 3, 3))
        parent_eps = np.empty(len(groups))
        children: list[np.ndarray] = []
        for gi, group in enumerate(groups):
            pts = fine.corners[group].reshape(-1, 3)
            tri = _fit_parent_triangle(pts)
            dist, _ = kernels.point_triangle_closest(
                pts,
                np.broadcast_to(tri[0], (len(pts), 3)),
                np.broadcast_to(tri[1], (len(pts), 3)),
                np.broadcast_to(tri[2], (len(pts), 3)),
            )
            child_eps = np.repeat(fine.epsilon[group], 3)
            parent_corners[gi] = tri
            parent_eps[gi] = float((dist + child_eps).max()) + _EPS_PAD
            children.append(np.sort(group))
        levels.append(
            SurrogateLevel(corners=parent_corners, epsilon=parent_eps, children=children)
        )
    return SurrogateTree(levels=levels)

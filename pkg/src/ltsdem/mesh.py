"""Triangle mesh container, procedural generators, OBJ I/O, mass properties.

Meshes are index-based: an (n, 3) float64 vertex array plus an (m, 3) int
triangle array. Generators produce watertight, outward-oriented surfaces;
the loader enforces the same invariants it can check cheaply.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

_MIN_AREA = 1e-12


class MeshFormatError(ValueError):
    """Malformed mesh file or record."""


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size:
            lo, hi = self.triangles.min(), self.triangles.max()
            if lo < 0 or hi >= len(self.vertices):
                raise MeshFormatError(
                    f"triangle index out of range: [{lo}, {hi}] for {len(self.vertices)} vertices"
                )
            if np.any(self.areas() <= _MIN_AREA):
                bad = int(np.argmax(self.areas() <= _MIN_AREA))
                raise MeshFormatError(f"triangle {bad} is degenerate (area <= {_MIN_AREA})")

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v, t = self.vertices, self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        a, b, c = self.corners()
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def translated(self, offset: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=float), self.triangles.copy())

    def is_watertight(self) -> bool:
        """True when every edge is shared by exactly two triangles."""
        if not self.triangles.size:
            return False
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def make_cube(center: np.ndarray, edge: float) -> TriangleMesh:
    """Axis-aligned cube: 8 vertices, 12 triangles, outward normals."""
    if edge <= 0.0:
        raise ValueError(f"cube edge must be positive, got {edge}")
    h = 0.5 * edge
    center = np.asarray(center, dtype=float)
    signs = np.array(
        [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
         [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
        dtype=float,
    )
    vertices = center + h * signs
    triangles = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom, -z
            [4, 5, 6], [4, 6, 7],  # top, +z
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ]
    )
    return TriangleMesh(vertices, triangles)


def make_plane(corner_a: np.ndarray, corner_b: np.ndarray) -> TriangleMesh:
    """Axis-aligned rectangle between two opposite corners, two triangles.

    The corners must agree in exactly one coordinate (the plane axis) and
    differ in the other two.
    """
    a = np.asarray(corner_a, dtype=float)
    b = np.asarray(corner_b, dtype=float)
    fixed = np.isclose(a, b, rtol=0.0, atol=1e-12)
    if fixed.sum() != 1:
        raise ValueError(
            "plane corners must share exactly one coordinate, "
            f"got {corner_a} and {corner_b}"
        )
    axis = int(np.argmax(fixed))
    u_axis, v_axis = [i for i in range(3) if i != axis]
    c0, c1, c2, c3 = a.copy(), a.copy(), b.copy(), a.copy()
    c1[u_axis] = b[u_axis]
    c3[v_axis] = b[v_axis]
    vertices = np.stack([c0, c1, c2, c3])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(vertices, triangles)


def _fibonacci_sphere_mesh(n_triangles: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit sphere triangulated with exactly n_triangles faces.

    Points are spread along a Fibonacci spiral and triangulated by their
    convex hull; a closed hull over v extreme points has 2v - 4 faces, so
    v = (n + 4) / 2 points give the exact count. A tiny seeded tangential
    jitter breaks coplanar ties without moving points off the sphere.
    """
    from scipy.spatial import ConvexHull

    n_points = (n_triangles + 4) // 2
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    i = np.arange(n_points)
    z = 1.0 - 2.0 * (i + 0.5) / n_points
    theta = 2.0 * np.pi * i / golden
    rxy = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    base = np.stack([rxy * np.cos(theta), rxy * np.sin(theta), z], axis=1)

    rng = np.random.default_rng(seed)
    for _ in range(8):
        jitter = rng.normal(scale=1e-4, size=(n_points, 3))
        jitter -= np.einsum("ij,ij->i", jitter, base)[:, None] * base
        pts = base + jitter
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        hull = ConvexHull(pts)
        if len(hull.vertices) == n_points and len(hull.simplices) == n_triangles:
            tris = hull.simplices.copy()
            a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
            inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0.0
            tris[inward] = tris[inward][:, [0, 2, 1]]
            return pts, tris
    raise RuntimeError(f"could not triangulate a sphere with {n_triangles} faces")


class _PerlinNoise:
    """Classic 3d gradient noise with a seeded permutation table.

    Output lies in [-1, 1]. Small and deterministic; enough to carve
    correlated bumps into sphere surfaces.
    """

    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256)
        self._perm = np.concatenate([perm, perm])
        g = rng.normal(size=(256, 3))
        self._grad = g / np.linalg.norm(g, axis=1, keepdims=True)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        cell = np.floor(p).astype(int)
        frac = p - cell
        fade = frac**3 * (frac * (frac * 6 - 15) + 10)
        total = np.zeros(len(p))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    corner = np.array([dx, dy, dz])
                    idx = (cell + corner) & 255
                    h = self._perm[self._perm[self._perm[idx[:, 0]] + idx[:, 1]] + idx[:, 2]]
                    offset = frac - corner
                    dot = np.einsum("ij,ij->i", self._grad[h], offset)
                    wx = fade[:, 0] if dx else 1.0 - fade[:, 0]
                    wy = fade[:, 1] if dy else 1.0 - fade[:, 1]
                    wz = fade[:, 2] if dz else 1.0 - fade[:, 2]
                    total += wx * wy * wz * dot
        return np.clip(total, -1.0, 1.0)


def make_noisy_sphere(
    radius: float, n_triangles: int, eta_r: float = 1.0, seed: int = 0
) -> TriangleMesh:
    """Watertight sphere-like particle with noise-displaced vertices.

    Vertices start on a sphere of the given radius and are pushed outward
    along their normals by layered gradient noise, so every vertex distance
    lands in [radius, radius * eta_r]. eta_r = 1 gives the plain sphere.
    The result is deterministic in (radius, n_triangles, eta_r, seed).
    """
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if eta_r < 1.0:
        raise ValueError(f"eta_r must be >= 1, got {eta_r}")
    if n_triangles < 4:
        raise ValueError(f"need at least 4 triangles, got {n_triangles}")
    if n_triangles == 4:
        vertices = np.array(
            [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
        ) / np.sqrt(3.0)
        triangles = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    elif n_triangles % 2:
        # A closed triangulated surface has 3F/2 edges, so F must be even.
        raise ValueError(f"a watertight sphere needs an even triangle count, got {n_triangles}")
    else:
        vertices, triangles = _fibonacci_sphere_mesh(n_triangles, seed)

    if eta_r > 1.0:
        noise = _PerlinNoise(seed)
        octaves = noise(vertices * 1.5) + 0.5 * noise(vertices * 3.0 + 11.7)
        bump = np.clip(0.5 + octaves / 3.0, 0.0, 1.0)
        scale = radius * (1.0 + (eta_r - 1.0) * bump)
    else:
        scale = radius
    mesh = TriangleMesh(vertices * np.atleast_1d(scale)[:, None], triangles)
    return mesh


def load_mesh(path: str | os.PathLike) -> TriangleMesh:
    """Read a Wavefront OBJ with `v x y z` and `f i j k` records.

    Indices are 1-based. Comment lines start with `#`. Faces with anything
    other than three vertices are rejected with the offending line number.
    Grouping and normal records are skipped so frame dumps round-trip.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    skippable = {"g", "o", "s", "vn", "vt", "usemtl", "mtllib", "l"}
    # Open errors propagate as OSError so callers can tell I/O from format.
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            kind = tokens[0]
            if kind == "v":
                if len(tokens) != 4:
                    raise MeshFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in tokens[1:]])
                except ValueError as exc:
                    raise MeshFormatError(f"{path}:{lineno}: bad vertex coordinate") from exc
            elif kind == "f":
                if len(tokens) != 4:
                    raise MeshFormatError(
                        f"{path}:{lineno}: face has {len(tokens) - 1} vertices, only triangles are supported"
                    )
                try:
                    idx = [int(tok.split("/")[0]) for tok in tokens[1:]]
                except ValueError as exc:
                    raise MeshFormatError(f"{path}:{lineno}: bad face index") from exc
                if any(i < 1 or i > len(vertices) for i in idx):
                    raise MeshFormatError(f"{path}:{lineno}: face index out of range")
                faces.append([i - 1 for i in idx])
            elif kind in skippable:
                continue
            else:
                raise MeshFormatError(f"{path}:{lineno}: unsupported record '{kind}'")
    if not faces:
        raise MeshFormatError(f"{path}: no faces found")
    return TriangleMesh(np.array(vertices), np.array(faces))


@dataclass
class MassProperties:
    mass: float
    com: np.ndarray
    inertia: np.ndarray  # 3x3 about the center of mass, body frame
    inverse_mass: float = field(init=False)
    inverse_inertia: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if self.mass > 0.0:
            self.inverse_mass = 1.0 / self.mass
            self.inverse_inertia = np.linalg.inv(self.inertia)
        else:
            self.inverse_mass = 0.0
            self.inverse_inertia = np.zeros((3, 3))

    @classmethod
    def immovable(cls) -> "MassProperties":
        """Static body: zero inverse mass and inertia."""
        return cls(mass=0.0, com=np.zeros(3), inertia=np.zeros((3, 3)))


# Second moments of the canonical tetrahedron (origin, e1, e2, e3):
# integral of x_i x_j over the volume.
_CANONICAL_SECOND_MOMENT = np.full((3, 3), 1.0 / 120.0) + np.diag([1.0 / 120.0] * 3)


def mass_properties(mesh: TriangleMesh, density: float = 1.0) -> MassProperties:
    """Volume, center of mass and inertia by signed tetrahedra.

    Every triangle spans a signed tetrahedron with the origin; summing the
    signed contributions yields exact polyhedron integrals for watertight
    meshes. Inertia is reported about the center of mass.
    """
    if density <= 0.0:
        raise ValueError(f"density must be positive, got {density}")
    if not mesh.is_watertight():
        raise ValueError("mass properties need a watertight mesh")
    a, b, c = mesh.corners()
    dets = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = dets.sum() / 6.0
    if volume <= 0.0:
        raise ValueError(f"mesh encloses non-positive volume {volume}, check triangle winding")
    com = (dets[:, None] * (a + b + c)).sum(axis=0) / (24.0 * volume)

    # Covariance sum_tet det * A C A^T with A = [a b c] as columns.
    mats = np.stack([a, b, c], axis=2)
    cov = np.einsum("n,nik,kl,njl->ij", dets, mats, _CANONICAL_SECOND_MOMENT, mats)
    cov *= density
    mass = density * volume
    # Shift to the center of mass, then convert covariance to inertia.
    cov -= mass * np.outer(com, com)
    inertia = np.trace(cov) * np.eye(3) - cov
    return MassProperties(mass=mass, com=com, inertia=inertia)


@dataclass
class BoundingSphere:
    center: np.ndarray
    radius: float  # includes the epsilon halo


def bounding_sphere(mesh: TriangleMesh, epsilon: float) -> BoundingSphere:
    """Near-minimal sphere around all vertices plus the epsilon halo.

    Starts at the bounding-box center and walks toward the farthest vertex
    with shrinking steps; the estimate converges to within a fraction of a
    percent of the optimal enclosing radius, and stays conservative at any
    iteration count because the radius is measured last.
    """
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    v = mesh.vertices
    center = 0.5 * (v.min(axis=0) + v.max(axis=0))
    for k in range(256):
        delta = v - center
        far = int(np.argmax(np.einsum("ij,ij->i", delta, delta)))
        center = center + delta[far] / (k + 2.0)
    radius = float(np.linalg.norm(v - center, axis=1).max()) + epsilon
    return BoundingSphere(center=center, radius=radius)

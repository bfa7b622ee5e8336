"""Batched geometry kernels.

Everything here is written row-wise: inputs are (n, 3) arrays and each row
is one independent query. The collision pipeline funnels thousands of
primitive tests per sweep through these, so they avoid Python loops.
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-300


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", u, v)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return num / np.where(np.abs(den) > _TINY, den, 1.0)


def point_triangle_closest(
    p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Closest point on each triangle (a, b, c) to each point p.

    Region classification per the standard Voronoi-feature scheme: test the
    three vertex regions, then the three edge regions, else project into
    the face. Returns (distance, closest_point), both per row.
    """
    p, a, b, c = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (p, a, b, c))
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    # Start from the face projection and overwrite rows that fall outside.
    denom = va + vb + vc
    v = _safe_div(vb, denom)[:, None]
    w = _safe_div(vc, denom)[:, None]
    closest = a + ab * v + ac * w

    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    wbc = _safe_div(d4 - d3, (d4 - d3) + (d5 - d6))[:, None]
    closest = np.where(on_bc[:, None], b + wbc * (c - b), closest)

    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    wac = _safe_div(d2, d2 - d6)[:, None]
    closest = np.where(on_ac[:, None], a + wac * ac, closest)

    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    wab = _safe_div(d1, d1 - d3)[:, None]
    closest = np.where(on_ab[:, None], a + wab * ab, closest)

    in_c = (d6 >= 0) & (d5 <= d6)
    closest = np.where(in_c[:, None], c, closest)
    in_b = (d3 >= 0) & (d4 <= d3)
    closest = np.where(in_b[:, None], b, closest)
    in_a = (d1 <= 0) & (d2 <= 0)
    closest = np.where(in_a[:, None], a, closest)

    dist = np.linalg.norm(p - closest, axis=1)
    return dist, closest


def segment_segment_closest(
    p1: np.ndarray, q1: np.ndarray, p2: np.ndarray, q2: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closest points between segments [p1, q1] and [p2, q2] per row.

    Clamped quadratic minimization with the usual re-clamping dance; the
    branches collapse into np.where masks. Degenerate (zero length)
    segments are handled by the same guards. Returns (distance, c1, c2).
    """
    p1, q1, p2, q2 = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    denom = a * e - b * b

    # General case; parallel rows (denom ~ 0) pick s = 0 by convention.
    s = np.clip(_safe_div(b * f - c * e, denom), 0.0, 1.0)
    s = np.where(denom > 1e-14 * a * e + _TINY, s, 0.0)
    t = _safe_div(b * s + f, e)
    s = np.where(t < 0.0, np.clip(_safe_div(-c, a), 0.0, 1.0), s)
    s = np.where(t > 1.0, np.clip(_safe_div(b - c, a), 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)

    # Zero-length guards: a degenerate segment pins its own parameter.
    s = np.where(a <= _TINY, 0.0, s)
    t = np.where(a <= _TINY, np.clip(_safe_div(f, e), 0.0, 1.0), t)
    t = np.where(e <= _TINY, 0.0, t)
    s = np.where((e <= _TINY) & (a > _TINY), np.clip(_safe_div(-c, a), 0.0, 1.0), s)

    c1 = p1 + s[:, None] * d1
    c2 = p2 + t[:, None] * d2
    dist = np.linalg.norm(c1 - c2, axis=1)
    return dist, c1, c2


def morton_order(points: np.ndarray, bits: int = 10) -> np.ndarray:
    """Sort order of points along a 3d Morton (Z-order) curve.

    Coordinates are quantized to `bits` per axis over the point bounding
    box. Deterministic given identical input, which the surrogate builder
    and spatial hashing rely on.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    span[span <= 0.0] = 1.0
    scale = (2**bits - 1) / span
    q = ((pts - lo) * scale).astype(np.uint64)
    code = np.zeros(len(pts), dtype=np.uint64)
    for i in range(bits):
        for axis in range(3):
            code |= ((q[:, axis] >> np.uint64(i)) & np.uint64(1)) << np.uint64(3 * i + axis)
    return np.argsort(code, kind="stable")


def triangle_overlap_centroid(
    tri_a: np.ndarray, tri_b: np.ndarray, normal: np.ndarray
) -> np.ndarray | None:
    """Centroid of the overlap of two near-parallel triangles.

    Both triangles are projected onto the plane orthogonal to `normal` and
    clipped against each other (Sutherland-Hodgman). Returns the overlap
    polygon centroid lifted back to the midplane, or None when the
    projections do not intersect.
    """
    n = normal / np.linalg.norm(normal)
    # Build an in-plane basis.
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    origin = tri_a.mean(axis=0)

    def project(tri: np.ndarray) -> list[np.ndarray]:
        rel = tri - origin
        return [np.array([pt @ u, pt @ v]) for pt in rel]

    subject = project(tri_b)
    clip_poly = project(tri_a)
    # Ensure counter-clockwise clip polygon.
    e1, e2 = clip_poly[1] - clip_poly[0], clip_poly[2] - clip_poly[0]
    if e1[0] * e2[1] - e1[1] * e2[0] < 0.0:
        clip_poly = clip_poly[::-1]

    output = subject
    for i in range(3):
        if not output:
            return None
        edge_a, edge_b = clip_poly[i], clip_poly[(i + 1) % 3]
        edge = edge_b - edge_a
        inputs, output = output, []
        for j, cur in enumerate(inputs):
            prev = inputs[j - 1]
            cur_in = edge[0] * (cur[1] - edge_a[1]) - edge[1] * (cur[0] - edge_a[0]) >= -1e-12
            prev_in = edge[0] * (prev[1] - edge_a[1]) - edge[1] * (prev[0] - edge_a[0]) >= -1e-12
            if cur_in != prev_in:
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                if abs(denom) > _TINY:
                    tpar = (edge[0] * (edge_a[1] - prev[1]) - edge[1] * (edge_a[0] - prev[0])) / -denom
                    output.append(prev + np.clip(tpar, 0.0, 1.0) * d)
            if cur_in:
                output.append(cur)
    if len(output) < 3:
        return None
    poly = np.array(output)
    # Area-weighted centroid of the clipped polygon.
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-18:
        centroid2 = poly.mean(axis=0)
    else:
        centroid2 = np.array(
            [((x + xn) * cross).sum(), ((y + yn) * cross).sum()]
        ) / (6.0 * area)
    mid_offset = 0.5 * ((tri_a - origin) @ n).mean() + 0.5 * ((tri_b - origin) @ n).mean()
    return origin + centroid2[0] * u + centroid2[1] * v + mid_offset * n

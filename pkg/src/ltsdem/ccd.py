"""Earliest-contact search over the surrogate triangle hierarchies.

How far may a consolidated cluster advance before any two halo surfaces
touch? The answer is found by walking pairs of surrogate levels from
coarse to fine. Each candidate triangle pair is screened by sampling its
true rigid-motion distance over the remaining window; the screen admits
a slack of half the distance a sample step can change, so a dip below
touching distance cannot slip between samples. Candidates that cannot
touch before the shared bound are dropped, surviving coarse candidates
expand into their children, and surviving fine candidates are refined to
an exact crossing time, which tightens the shared bound for everything
still in flight. Refinement runs golden-section and bisection over all
flagged candidates at once, one batched distance evaluation per step.

Pairs already inside touching distance at the window start are resting
contacts: they are reported for the impulse solve but never shrink the
step, otherwise a settled arrangement could grind time to a halt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .quaternions import to_matrix

_WIDEN = 1e-3  # relative widening of a collision-limited step
_REST_SLOP = 1e-9  # absolute slack on the touching test at the window start
_MIN_SAMPLES = 2
_MAX_SAMPLES = 33
_ZOOM_SAMPLES = 17
_GRAZE_TOL = 1e-9  # dips this close to touching count as clear misses
_BISECT_ITERS = 52
_PARALLEL_COS = 1.0 - 1e-3

_EDGE_A = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
_EDGE_B = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
_NEXT = np.array([1, 2, 0])


@dataclass
class ContactPoint:
    """A touching point between two halo surfaces.

    `normal` points from body_b toward body_a. `depth` measures how far
    the pair sits inside the touching threshold at the recorded time:
    zero for a crossing caught in flight, positive for a pair that was
    already inside it.
    """

    body_a: int
    body_b: int
    position: np.ndarray
    normal: np.ndarray
    depth: float
    t: float
    tri_a: int = -1
    tri_b: int = -1
    threshold: float = 0.0


@dataclass
class NarrowResult:
    """Outcome of one earliest-contact search.

    `dt` is the effective step: the full window when nothing new touches,
    else the earliest crossing widened by a whisker so the contact is
    inside the step it produced. `collision` records whether the window
    was cut.
    """

    dt: float
    contacts: list[ContactPoint]
    narrowing_iters: int
    bound_history: list[float]
    collision: bool
    first_contact: float | None = None  # earliest crossing offset, pre-widening


class _Motion:
    """Free-flight rigid motion plus the surrogate geometry of one body."""

    __slots__ = ("bid", "x0", "v", "omega", "axis", "base", "tree", "_arms")

    def __init__(self, bid, x0, v, omega_vec, base, tree):
        self.bid = bid
        self.x0 = np.asarray(x0, dtype=float)
        self.v = np.asarray(v, dtype=float)
        omega_vec = np.asarray(omega_vec, dtype=float)
        self.omega = float(np.linalg.norm(omega_vec))
        self.axis = omega_vec / self.omega if self.omega > 0.0 else None
        self.base = base
        self.tree = tree
        self._arms: dict[int, np.ndarray] = {}

    @classmethod
    def of_body(cls, body) -> "_Motion":
        if hasattr(body, "timeline"):  # dynamic particle
            s = body.timeline.current
            return cls(
                body.pid, s.position, s.velocity, s.angular_velocity,
                to_matrix(s.rotation), body.tree,
            )
        return cls(body.sid, np.zeros(3), np.zeros(3), np.zeros(3), np.eye(3), body.tree)

    def arm(self, level: int) -> np.ndarray:
        """Largest corner radius per triangle, the lever for rotation speed."""
        got = self._arms.get(level)
        if got is None:
            got = np.linalg.norm(self.tree.levels[level].corners, axis=2).max(axis=1)
            self._arms[level] = got
        return got

    def rotations(self, taus) -> np.ndarray:
        m = len(taus)
        if self.axis is None:
            return np.broadcast_to(self.base, (m, 3, 3))
        k = self.axis
        cross = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        ang = self.omega * np.asarray(taus, dtype=float)
        s = np.sin(ang)[:, None, None]
        c = (1.0 - np.cos(ang))[:, None, None]
        return (np.eye(3) + s * cross + c * (cross @ cross)) @ self.base

    def triangles_at(self, level: int, tris, taus) -> np.ndarray:
        """World corners (m, 3, 3), one triangle and one time per row."""
        local = self.tree.levels[level].corners[np.asarray(tris, dtype=int)]
        rot = self.rotations(taus)
        pos = self.x0 + np.outer(np.asarray(taus, dtype=float), self.v)
        return np.einsum("mij,mpj->mpi", rot, local) + pos[:, None, :]


def _feature_distances(tri_a: np.ndarray, tri_b: np.ndarray) -> np.ndarray:
    """Row-wise triangle pair distance via the 15 feature pairs.

    Six vertex-triangle features (both directions) and nine edge-edge
    features; their minimum is the surface distance whenever the
    triangles do not interpenetrate, which on a continuous approach is
    every moment up to and including first touch.
    """
    n = len(tri_a)
    pts = np.concatenate([tri_a.reshape(-1, 3), tri_b.reshape(-1, 3)])
    oth = np.concatenate([np.repeat(tri_b, 3, axis=0), np.repeat(tri_a, 3, axis=0)])
    d_vt, _ = kernels.point_triangle_closest(pts, oth[:, 0], oth[:, 1], oth[:, 2])
    d_vt = d_vt.reshape(2, n, 3).min(axis=(0, 2))
    p1 = tri_a[:, _EDGE_A, :].reshape(-1, 3)
    q1 = tri_a[:, _NEXT[_EDGE_A], :].reshape(-1, 3)
    p2 = tri_b[:, _EDGE_B, :].reshape(-1, 3)
    q2 = tri_b[:, _NEXT[_EDGE_B], :].reshape(-1, 3)
    d_ee, _, _ = kernels.segment_segment_closest(p1, q1, p2, q2)
    return np.minimum(d_vt, d_ee.reshape(n, 9).min(axis=1))


def _closest_feature(tri_a: np.ndarray, tri_b: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Distance and the witness points realizing it, one triangle each."""
    pts = np.concatenate([tri_a, tri_b])
    oth = np.concatenate(
        [np.broadcast_to(tri_b, (3, 3, 3)), np.broadcast_to(tri_a, (3, 3, 3))]
    )
    d_vt, c_vt = kernels.point_triangle_closest(pts, oth[:, 0], oth[:, 1], oth[:, 2])
    p1 = tri_a[_EDGE_A]
    q1 = tri_a[_NEXT[_EDGE_A]]
    p2 = tri_b[_EDGE_B]
    q2 = tri_b[_NEXT[_EDGE_B]]
    d_ee, e1, e2 = kernels.segment_segment_closest(p1, q1, p2, q2)
    best_vt = int(np.argmin(d_vt))
    best_ee = int(np.argmin(d_ee))
    if d_vt[best_vt] <= d_ee[best_ee]:
        if best_vt < 3:
            return float(d_vt[best_vt]), pts[best_vt], c_vt[best_vt]
        return float(d_vt[best_vt]), c_vt[best_vt], pts[best_vt]
    return float(d_ee[best_ee]), e1[best_ee], e2[best_ee]


def _face_normal(tri: np.ndarray) -> np.ndarray:
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    norm = float(np.linalg.norm(n))
    return n / norm if norm > 0.0 else np.array([0.0, 0.0, 1.0])


def _make_contact(ma: _Motion, mb: _Motion, ia: int, ib: int, tau: float, h: float,
                  t_abs: float) -> ContactPoint:
    tri_a = ma.triangles_at(0, [ia], [tau])[0]
    tri_b = mb.triangles_at(0, [ib], [tau])[0]
    dist, pa, pb = _closest_feature(tri_a, tri_b)
    position = 0.5 * (pa + pb)
    na = _face_normal(tri_a)
    nb = _face_normal(tri_b)
    if abs(float(na @ nb)) >= _PARALLEL_COS:
        # Face-on-face: spread the point over the shared footprint instead
        # of whichever feature the argmin happened to land on.
        mid = kernels.triangle_overlap_centroid(tri_a, tri_b, na)
        if mid is not None:
            position = mid
    if dist > 1e-9:
        normal = (pa - pb) / dist
    else:
        normal = nb.copy()
        if float(normal @ (tri_a.mean(axis=0) - tri_b.mean(axis=0))) < 0.0:
            normal = -normal
    return ContactPoint(
        body_a=ma.bid,
        body_b=mb.bid,
        position=position,
        normal=normal,
        depth=max(0.0, h - dist),
        t=t_abs,
        tri_a=ia,
        tri_b=ib,
        threshold=h,
    )


def _make_batch_fn(motions, pairs, rows):
    """Distance evaluator for a fixed set of fine triangle pairs.

    `rows` holds (pair index, tri_a, tri_b) triples; the returned callable
    maps per-row times to per-row distances in one batched kernel pass.
    """
    n = len(rows)
    sides = []
    for side in (0, 1):
        bids = np.array([pairs[r[0]][side] for r in rows])
        tris = np.array([r[1 + side] for r in rows], dtype=int)
        groups = [(motions[bid], bids == bid) for bid in np.unique(bids)]
        sides.append((tris, groups))

    def fn(taus: np.ndarray) -> np.ndarray:
        worlds = []
        for tris, groups in sides:
            world = np.empty((n, 3, 3))
            for motion, mask in groups:
                world[mask] = motion.triangles_at(0, tris[mask], taus[mask])
            worlds.append(world)
        return _feature_distances(worlds[0], worlds[1])

    return fn


def _isolate_crossings(motions, pairs, entries):
    """Earliest threshold crossing per flagged run, by certified zooming.

    Each entry is (row, a, b, h, speed) with distance(a) > h. Intervals
    are re-sampled at shrinking spacing, all rows batched per round. A
    stretch whose samples all clear the Lipschitz slack is certified
    crossing-free and dropped. A sample at or below h brackets a crossing
    and discards everything after it; flagged stretches before the
    bracket keep zooming, since an earlier dip could hide there, until
    they clear or the slack falls under the graze tolerance. Dips that
    approach h closer than that tolerance without provably reaching it
    count as misses, which is below the depth the impulse solve resolves.

    Returns brackets (row, lo, hi, h) with distance(lo) > h >= distance(hi).
    """
    state = [
        {"row": row, "h": h, "speed": speed, "pending": [(a, b)], "bracket": None}
        for row, a, b, h, speed in entries
    ]
    for _ in range(64):
        batch_meta = []
        batch_rows = []
        grids = []
        for i, st in enumerate(state):
            for a, b in st["pending"]:
                batch_meta.append(i)
                batch_rows.append(st["row"])
                grids.append(np.linspace(a, b, _ZOOM_SAMPLES))
            st["pending"] = []
        if not batch_rows:
            break
        rows_flat = [r for r in batch_rows for _ in range(_ZOOM_SAMPLES)]
        fn = _make_batch_fn(motions, pairs, rows_flat)
        dists = fn(np.concatenate(grids)).reshape(len(batch_rows), _ZOOM_SAMPLES)
        for i, grid, d in zip(batch_meta, grids, dists):
            st = state[i]
            if st["bracket"] is not None and grid[0] >= st["bracket"][0]:
                continue  # a crossing earlier than this interval is already bracketed
            h = st["h"]
            slack = 0.5 * st["speed"] * (grid[1] - grid[0])
            cut = _ZOOM_SAMPLES
            below = np.nonzero(d <= h)[0]
            if len(below):
                j = int(below[0])
                lo = float(grid[j - 1]) if j > 0 else float(grid[0])
                st["bracket"] = (lo, float(grid[j]))
                cut = j
            if slack <= _GRAZE_TOL:
                continue
            flags = d[:cut] <= h + slack
            k = 0
            while k < cut:
                if not flags[k]:
                    k += 1
                    continue
                k_end = k
                while k_end + 1 < cut and flags[k_end + 1]:
                    k_end += 1
                sub = (float(grid[max(k - 1, 0)]), float(grid[min(k_end + 1, cut - 1)]))
                if sub[1] > sub[0]:
                    st["pending"].append(sub)
                k = k_end + 1
    return [
        (st["row"], st["bracket"][0], st["bracket"][1], st["h"])
        for st in state
        if st["bracket"] is not None
    ]


def _batched_bisect(fn, lo: np.ndarray, hi: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Row-wise first crossing of h in [lo, hi]; fn(lo) > h >= fn(hi)."""
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        below = fn(mid) <= h
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
    return hi


def _evaluate(motions, pairs, la: int, lb: int, cands, prune_at: float):
    """Sample every candidate's distance over its remaining window.

    Returns per-candidate sample grids, distances, thresholds and speed
    bounds. The screening slack `speed * step / 2` matches the most the
    distance can change between neighbouring samples, so the flag test
    can never miss a crossing, only over-report one.
    """
    n = len(cands)
    pair_idx = np.array([c[0] for c in cands])
    tri_a = np.array([c[1] for c in cands], dtype=int)
    tri_b = np.array([c[2] for c in cands], dtype=int)
    w0 = np.array([c[3] for c in cands])
    h = np.empty(n)
    speed = np.empty(n)
    for k in np.unique(pair_idx):
        mask = pair_idx == k
        ma, mb = motions[pairs[k][0]], motions[pairs[k][1]]
        h[mask] = ma.tree.levels[la].epsilon[tri_a[mask]] + mb.tree.levels[lb].epsilon[tri_b[mask]]
        sp = np.full(int(mask.sum()), float(np.linalg.norm(ma.v - mb.v)))
        if ma.omega > 0.0:
            sp += ma.omega * ma.arm(la)[tri_a[mask]]
        if mb.omega > 0.0:
            sp += mb.omega * mb.arm(lb)[tri_b[mask]]
        speed[mask] = sp

    span = np.maximum(prune_at - w0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.ceil(span * speed / (0.5 * h)).astype(int) + 1
    need[speed == 0.0] = _MIN_SAMPLES
    counts = np.clip(need, _MIN_SAMPLES, _MAX_SAMPLES)
    counts[span == 0.0] = 1
    grids = [
        np.linspace(w0[i], prune_at, counts[i]) if counts[i] > 1 else np.array([w0[i]])
        for i in range(n)
    ]

    lens = counts
    taus = np.concatenate(grids)
    n_rows = len(taus)
    world_a = np.empty((n_rows, 3, 3))
    world_b = np.empty((n_rows, 3, 3))
    for tris, world, lvl, side in ((tri_a, world_a, la, 0), (tri_b, world_b, lb, 1)):
        bids = np.repeat([pairs[k][side] for k in pair_idx], lens)
        tri_rows = np.repeat(tris, lens)
        for bid in np.unique(bids):
            mask = bids == bid
            world[mask] = motions[bid].triangles_at(lvl, tri_rows[mask], taus[mask])
    dists = np.split(_feature_distances(world_a, world_b), np.cumsum(lens)[:-1])
    return grids, dists, h, speed


def _search(motions: dict[int, _Motion], pairs: list[tuple[int, int]], dt: float,
            widen: float, t_base: float, exhaustive: bool = False) -> NarrowResult:
    bound = float(dt)
    history: list[float] = []
    narrowing = 0
    resting: list[tuple[int, int, int, float]] = []
    crossings: list[tuple[float, int, int, int, float]] = []
    buckets: dict[tuple[int, int], list[list]] = {}

    def push(key, item):
        buckets.setdefault(key, []).append(item)

    for k, (bid_a, bid_b) in enumerate(pairs):
        ma, mb = motions[bid_a], motions[bid_b]
        la = 0 if exhaustive else len(ma.tree.levels) - 1
        lb = 0 if exhaustive else len(mb.tree.levels) - 1
        for ia in range(ma.tree.levels[la].size):
            for ib in range(mb.tree.levels[lb].size):
                push((la, lb), [k, ia, ib, 0.0])

    while buckets:
        la, lb = max(buckets, key=lambda key: (max(key), key[0] + key[1]))
        cands = buckets.pop((la, lb))
        prune_at = min(bound * (1.0 + widen), dt)
        cands = [c for c in cands if c[3] <= prune_at]
        if not cands:
            continue
        grids, dists, hs, speeds = _evaluate(motions, pairs, la, lb, cands, prune_at)

        # Refinement worklist: one entry per run of flagged fine samples.
        entries: list[tuple] = []  # (row, a, b, h, speed)
        for c, grid, d, h, speed in zip(cands, grids, dists, hs, speeds):
            k_pair, ia, ib, w0 = c
            fine = la == 0 and lb == 0
            if fine and w0 == 0.0 and d[0] <= h + _REST_SLOP:
                resting.append((k_pair, ia, ib, h))
                continue
            step = float(grid[1] - grid[0]) if len(grid) > 1 else 0.0
            flags = d <= h + 0.5 * speed * step
            if not flags.any():
                continue
            k0 = int(np.argmax(flags))
            if not fine:
                w_child = float(grid[max(k0 - 1, 0)])
                ma, mb = motions[pairs[k_pair][0]], motions[pairs[k_pair][1]]
                if la > 0 and lb > 0:
                    for ca in ma.tree.levels[la].children[ia]:
                        for cb in mb.tree.levels[lb].children[ib]:
                            push((la - 1, lb - 1), [k_pair, int(ca), int(cb), w_child])
                elif la > 0:
                    for ca in ma.tree.levels[la].children[ia]:
                        push((la - 1, 0), [k_pair, int(ca), ib, w_child])
                else:
                    for cb in mb.tree.levels[lb].children[ib]:
                        push((0, lb - 1), [k_pair, ia, int(cb), w_child])
                continue
            # Fine pair: turn each flagged run into a refinement entry.
            n_s = len(grid)
            k = k0
            while k < n_s:
                if not flags[k]:
                    k += 1
                    continue
                k_end = k
                while k_end + 1 < n_s and flags[k_end + 1]:
                    k_end += 1
                lo_i = max(k - 1, 0)
                hi_i = min(k_end + 1, n_s - 1)
                if d[lo_i] <= h:  # defensive: window opens already touching
                    crossings.append((float(grid[lo_i]), k_pair, ia, ib, h))
                elif hi_i > lo_i:
                    entries.append(((k_pair, ia, ib), float(grid[lo_i]),
                                    float(grid[hi_i]), h, speed))
                k = k_end + 1

        prune_at = min(bound * (1.0 + widen), dt)
        entries = [e for e in entries if e[1] <= prune_at]
        brackets = _isolate_crossings(motions, pairs, entries) if entries else []
        if brackets:
            fn = _make_batch_fn(motions, pairs, [b[0] for b in brackets])
            taus = _batched_bisect(
                fn,
                np.array([b[1] for b in brackets]),
                np.array([b[2] for b in brackets]),
                np.array([b[3] for b in brackets]),
            )
            for tau, (row, _, _, h) in sorted(
                (float(tau), b) for tau, b in zip(taus, brackets)
            ):
                if tau > min(bound * (1.0 + widen), dt):
                    continue
                crossings.append((tau, row[0], row[1], row[2], h))
                if tau < bound:
                    bound = tau
                    narrowing += 1
                    history.append(bound)

    collision = bound < dt
    dt_eff = min(dt, bound * (1.0 + widen)) if collision else dt
    contacts: list[ContactPoint] = []
    for k_pair, ia, ib, h in resting:
        ma, mb = motions[pairs[k_pair][0]], motions[pairs[k_pair][1]]
        contacts.append(_make_contact(ma, mb, ia, ib, 0.0, h, t_base))
    for tau, k_pair, ia, ib, h in crossings:
        if tau <= dt_eff:
            ma, mb = motions[pairs[k_pair][0]], motions[pairs[k_pair][1]]
            contacts.append(_make_contact(ma, mb, ia, ib, tau, h, t_base + tau))
    return NarrowResult(
        dt=dt_eff,
        contacts=filter_contacts(contacts),
        narrowing_iters=narrowing,
        bound_history=history,
        collision=collision,
        first_contact=bound if collision else None,
    )


def pair_earliest_contact(body_a, body_b, dt: float, *, widen: float = _WIDEN,
                          exhaustive: bool = False) -> NarrowResult:
    """Earliest-contact search for a single body pair.

    Both bodies move by free flight from their current snapshots over
    [0, dt]; contact stamps are offsets into that window. `exhaustive`
    skips the hierarchy and screens every fine triangle pair directly,
    which is the reference the multiscale walk must agree with.
    """
    ma = _Motion.of_body(body_a)
    mb = _Motion.of_body(body_b)
    return _search({ma.bid: ma, mb.bid: mb}, [(ma.bid, mb.bid)], float(dt),
                   widen, t_base=0.0, exhaustive=exhaustive)


def compute_effective_dt(cluster, particles, statics, pairs, *,
                         widen: float = _WIDEN) -> NarrowResult:
    """Size one consolidated cluster's step against its contact pairs.

    `pairs` lists body id pairs to screen: member pairs joined by graph
    edges plus member-static links (negative ids resolve in `statics`).
    Contact stamps are absolute times. Without any crossing the step is
    the cluster's own dt, bit for bit.
    """
    pairs = list(pairs)
    if not pairs:
        return NarrowResult(dt=cluster.dt, contacts=[], narrowing_iters=0,
                            bound_history=[], collision=False)
    motions: dict[int, _Motion] = {}
    for bid_a, bid_b in pairs:
        for bid in (bid_a, bid_b):
            if bid not in motions:
                body = particles[bid] if bid >= 0 else statics[bid]
                motions[bid] = _Motion.of_body(body)
    return _search(motions, pairs, float(cluster.dt), widen, t_base=cluster.t_current)


def filter_contacts(contacts: list[ContactPoint]) -> list[ContactPoint]:
    """Fuse near-coincident points on the same body pair, canonically.

    Neighbouring triangle pairings at a shared feature (a vertex landing
    in a triangle fan, say) collapse to one point: positions average,
    normals sum, the deepest depth and earliest stamp win. Output order
    is independent of input order.
    """
    groups: dict[tuple[int, int], list[ContactPoint]] = {}
    for c in contacts:
        groups.setdefault((c.body_a, c.body_b), []).append(c)
    fused: list[ContactPoint] = []
    for key in sorted(groups):
        pts = groups[key]
        pts.sort(key=lambda c: (c.t, round(c.position[0], 9), round(c.position[1], 9),
                                round(c.position[2], 9), c.tri_a, c.tri_b))
        parent = list(range(len(pts)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                radius = max(pts[i].threshold, pts[j].threshold)
                if np.linalg.norm(pts[i].position - pts[j].position) <= radius:
                    parent[find(j)] = find(i)
        merged: dict[int, list[ContactPoint]] = {}
        for i in range(len(pts)):
            merged.setdefault(find(i), []).append(pts[i])
        for root in sorted(merged):
            group = merged[root]
            position = np.mean([c.position for c in group], axis=0)
            normal = np.sum([c.normal for c in group], axis=0)
            norm = float(np.linalg.norm(normal))
            normal = normal / norm if norm > 1e-12 else group[0].normal
            rep = min(group, key=lambda c: (c.t, -c.depth))
            fused.append(ContactPoint(
                body_a=rep.body_a,
                body_b=rep.body_b,
                position=position,
                normal=normal,
                depth=max(c.depth for c in group),
                t=min(c.t for c in group),
                tri_a=rep.tri_a,
                tri_b=rep.tri_b,
                threshold=max(c.threshold for c in group),
            ))
    return fused

"""Space-time broad phase: per-particle step bounds and the collision graph.

Two screens gate every pair. Check 1 collapses the time axis: one axis
aligned box per body covering its bounding sphere at the old, current and
extrapolated poses. Check 2 keeps timing: each body becomes a sphere whose
center moves along two linear legs (old to current, current to
extrapolated), both clipped to the joint pair window; the minimum center
distance over that window is found per leg by exact quadratic
minimization. Check 1 boxes contain the Check 2 spheres, so a Check 1 miss
implies a Check 2 miss.

Edges only ever join two dynamic particles. Static geometry is recorded as
per-particle links so immovable bodies never glue clusters together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import Particle, StaticBody
from .state import extrapolate_free_flight


@dataclass
class TimeStepPolicy:
    """Optimistic per-particle step sizing.

    A particle may try at most `growth` times its last completed step,
    capped by `dt_max`. A fresh particle (old and current snapshots
    coincide) gets the full cap, which doubles as the recovery path after
    a zero-length step.
    """

    dt_max: float
    growth: float = 2.0

    def __post_init__(self) -> None:
        if self.dt_max <= 0.0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if self.growth <= 1.0:
            raise ValueError(f"growth must exceed 1, got {self.growth}")


def particle_dt(timeline, policy: TimeStepPolicy) -> float:
    last = timeline.last_dt
    if last == 0.0:
        return policy.dt_max
    return min(policy.growth * last, policy.dt_max)


def pair_window(t1: float, dt1: float, t2: float, dt2: float) -> tuple[float, float]:
    """Joint statement window of two particles at individual time stamps."""
    start = min(t1, t2)
    return start, start + min(dt1, dt2)


@dataclass
class CollisionGraph:
    edges: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    static_links: dict[int, tuple[int, ...]] = field(default_factory=dict)
    dts: dict[int, float] = field(default_factory=dict)

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {}
        for a, b in self.edges:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        return adj


class _Trajectory:
    """Piecewise-linear bounding sphere center: two legs, or constant."""

    __slots__ = ("times", "centers", "radius")

    def __init__(self, times: np.ndarray, centers: np.ndarray, radius: float):
        self.times = times
        self.centers = centers
        self.radius = radius

    @classmethod
    def of_particle(cls, p: Particle, dt: float) -> "_Trajectory":
        tl = p.timeline
        ext = extrapolate_free_flight(tl.current, dt)
        times = np.array([tl.old.t, tl.current.t, ext.t])
        centers = np.stack(
            [
                p.sphere_center_at(tl.old),
                p.sphere_center_at(tl.current),
                p.sphere_center_at(ext),
            ]
        )
        return cls(times, centers, p.sphere.radius)

    @classmethod
    def of_static(cls, s: StaticBody) -> "_Trajectory":
        return cls(np.array([0.0]), s.sphere.center[None, :], s.sphere.radius)

    def at(self, t: float) -> np.ndarray:
        if len(self.times) == 1:
            return self.centers[0]
        t = min(max(t, self.times[0]), self.times[-1])
        if t <= self.times[1]:
            a, b, ta, tb = self.centers[0], self.centers[1], self.times[0], self.times[1]
        else:
            a, b, ta, tb = self.centers[1], self.centers[2], self.times[1], self.times[2]
        span = tb - ta
        if span == 0.0:
            return b
        u = (t - ta) / span
        return (1.0 - u) * a + u * b

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.centers.min(axis=0) - self.radius
        hi = self.centers.max(axis=0) + self.radius
        return lo, hi


def check_spacetime_aabb(traj1: _Trajectory, traj2: _Trajectory) -> bool:
    """Check 1: do the time-collapsed boxes overlap?"""
    lo1, hi1 = traj1.box()
    lo2, hi2 = traj2.box()
    return bool(np.all(lo1 <= hi2) and np.all(lo2 <= hi1))


def _min_distance_over_window(
    traj1: _Trajectory, traj2: _Trajectory, window: tuple[float, float]
) -> float:
    t0, t1 = window
    if t1 < t0:
        return np.inf
    # Breakpoints where either trajectory changes leg.
    knots = {t0, t1}
    for tr in (traj1, traj2):
        for t in tr.times:
            if t0 < t < t1:
                knots.add(float(t))
    knots = sorted(knots)
    best = np.inf
    for ta, tb in zip(knots, knots[1:]):
        d0 = traj1.at(ta) - traj2.at(ta)
        d1 = traj1.at(tb) - traj2.at(tb)
        dd = d1 - d0
        denom = float(dd @ dd)
        s = 0.0 if denom == 0.0 else float(np.clip(-(d0 @ dd) / denom, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(d0 + s * dd)))
    if len(knots) == 1:
        best = float(np.linalg.norm(traj1.at(t0) - traj2.at(t0)))
    return best


def check_spacetime_tube(
    traj1: _Trajectory, traj2: _Trajectory, window: tuple[float, float]
) -> bool:
    """Check 2: do the swept spheres come within touching distance?"""
    return _min_distance_over_window(traj1, traj2, window) <= traj1.radius + traj2.radius


def _hash_candidates(boxes: list[tuple[np.ndarray, np.ndarray]]) -> set[tuple[int, int]]:
    """Uniform spatial hash over boxes; an acceleration only, never a filter.

    Oversized boxes (spanning many cells, e.g. a floor plane) land in a
    global bucket checked against everything, which keeps the cell table
    small without losing pairs.
    """
    n = len(boxes)
    if n <= 1:
        return set()
    spans = np.array([hi - lo for lo, hi in boxes])
    cell = float(np.median(spans.max(axis=1)))
    if cell <= 0.0:
        cell = 1.0
    table: dict[tuple[int, int, int], list[int]] = {}
    oversized: list[int] = []
    pairs: set[tuple[int, int]] = set()
    for i, (lo, hi) in enumerate(boxes):
        lo_cell = np.floor(lo / cell).astype(int)
        hi_cell = np.floor(hi / cell).astype(int)
        if np.any(hi_cell - lo_cell > 8):
            oversized.append(i)
            continue
        for cx in range(lo_cell[0], hi_cell[0] + 1):
            for cy in range(lo_cell[1], hi_cell[1] + 1):
                for cz in range(lo_cell[2], hi_cell[2] + 1):
                    bucket = table.setdefault((cx, cy, cz), [])
                    for j in bucket:
                        pairs.add((min(i, j), max(i, j)))
                    bucket.append(i)
    for i in oversized:
        for j in range(n):
            if j != i:
                pairs.add((min(i, j), max(i, j)))
    return pairs


def build_collision_graph(
    particles: dict[int, Particle],
    statics: dict[int, StaticBody],
    policy: TimeStepPolicy,
    exhaustive: bool = False,
) -> CollisionGraph:
    """Run both checks over all candidate pairs and record survivors.

    With `exhaustive` the spatial hash is bypassed; results are identical,
    the hash only prunes pairs whose boxes cannot overlap.
    """
    graph = CollisionGraph()
    pids = sorted(particles)
    sids = sorted(statics)
    graph.dts = {pid: particle_dt(particles[pid].timeline, policy) for pid in pids}

    trajs: dict[int, _Trajectory] = {
        pid: _Trajectory.of_particle(particles[pid], graph.dts[pid]) for pid in pids
    }
    for sid in sids:
        trajs[sid] = _Trajectory.of_static(statics[sid])

    ids = pids + sids
    if exhaustive:
        candidates = {(i, j) for i in range(len(ids)) for j in range(i + 1, len(ids))}
    else:
        candidates = _hash_candidates([trajs[i].box() for i in ids])

    for i, j in sorted(candidates):
        id_a, id_b = ids[i], ids[j]
        if id_a < 0 and id_b < 0:
            continue  # two statics can never meet
        ta, tb = trajs[id_a], trajs[id_b]
        if not check_spacetime_aabb(ta, tb):
            continue
        if id_a >= 0 and id_b >= 0:
            window = pair_window(
                particles[id_a].timeline.current.t,
                graph.dts[id_a],
                particles[id_b].timeline.current.t,
                graph.dts[id_b],
            )
        else:
            dyn = id_a if id_a >= 0 else id_b
            t_cur = particles[dyn].timeline.current.t
            window = (particles[dyn].timeline.old.t, t_cur + graph.dts[dyn])
        if not check_spacetime_tube(ta, tb, window):
            continue
        if id_a >= 0 and id_b >= 0:
            graph.edges[(id_a, id_b)] = window
        else:
            dyn, st = (id_a, id_b) if id_a >= 0 else (id_b, id_a)
            graph.static_links.setdefault(dyn, ())
            graph.static_links[dyn] = tuple(sorted(set(graph.static_links[dyn]) | {st}))
    return graph

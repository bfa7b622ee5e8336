"""The sweep loop: optimistic local time stepping over rigid clusters.

Each sweep screens all bodies for possible contact, groups them into
clusters sharing one clock, sizes every cluster's step against its
earliest contact, and resolves the contacts it commits to. Commitment is
the optimistic part: a cluster may only advance while its own clock does
not overrun the earliest prospective collision anywhere in the scene,
since that collision could change what reaches it. Clusters held back
keep their computed step in a cache keyed on their members' timeline
versions, so a masked cluster costs almost nothing until it activates.

Global mode runs the same machinery with one shared clock: every sweep
cuts all clusters to the earliest prospective collision time, which is
the classical synchronous baseline the local scheme is measured against.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .broadphase import TimeStepPolicy, build_collision_graph
from .ccd import NarrowResult, compute_effective_dt
from .clustering import Cluster, attach_statics, connected_components, consolidate
from .contacts import SolverConfig, apply_separation, integrate_cluster, solve_impulses
from .state import roll_over


class EngineError(RuntimeError):
    """A run that cannot make progress; the message says where it stood."""


@dataclass
class EngineConfig:
    policy: TimeStepPolicy
    mode: str = "local"
    threads: int = 1
    deterministic: bool = False
    max_sweeps: int = 10_000
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if self.mode not in ("local", "global"):
            raise ValueError(f"mode must be 'local' or 'global', got {self.mode!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")

    @property
    def zero_timings(self) -> bool:
        """Timing columns are zeroed whenever a run must be reproducible."""
        return self.deterministic or self.threads == 1


@dataclass
class SweepRow:
    sweep: int
    global_t_min: float
    n_clusters: int
    n_active: int
    t_collision: float
    rollbacks: int
    phase_broad_us: int
    phase_cluster_us: int
    phase_dt_us: int
    phase_solve_us: int


@dataclass
class ClusterRow:
    sweep: int
    cluster_id: int
    size: int
    t_current: float
    dt_effective: float
    narrowing_iters: int
    n_contacts: int
    picard_iters: int
    solve_us: int


@dataclass
class SweepTrace:
    sweeps: list[SweepRow] = field(default_factory=list)
    cluster_updates: list[ClusterRow] = field(default_factory=list)
    # (sweep, body_a, body_b) for every committed contact.
    contact_events: list[tuple[int, int, int]] = field(default_factory=list)


class World:
    def __init__(self, particles, statics, config: EngineConfig):
        self.particles = {p.pid: p for p in particles}
        self.statics = {s.sid: s for s in statics}
        if len(self.particles) != len(list(particles)):
            raise ValueError("duplicate particle ids")
        if len(self.statics) != len(list(statics)):
            raise ValueError("duplicate static ids")
        self.config = config
        self.sweep = 0
        self.trace = SweepTrace()
        self._cache: dict[tuple, tuple[NarrowResult, object]] = {}

    def min_time(self) -> float:
        return min(p.timeline.current.t for p in self.particles.values())


def _cluster_pairs(cluster: Cluster, graph) -> list[tuple[int, int]]:
    """Body id pairs this cluster must screen, in canonical order."""
    members = set(cluster.members)
    pairs = [e for e in sorted(graph.edges) if e[0] in members and e[1] in members]
    for pid in cluster.members:
        pairs.extend((pid, sid) for sid in graph.static_links.get(pid, ()))
    return pairs


def _cache_key(cluster: Cluster, particles) -> tuple:
    versions = tuple(particles[pid].timeline.version for pid in cluster.members)
    return (cluster.members, cluster.t_current, cluster.dt, cluster.statics, versions)


def mask_clusters(clusters: list[Cluster], results: list[NarrowResult]):
    """Decide which clusters may commit their prospective step.

    The earliest prospective end time anywhere is the horizon no clock
    may overrun: a cluster commits only while its own time stays at or
    under it. The slowest cluster always qualifies, so the scene's
    minimum time never stalls.
    """
    t_collision = min(c.t_current + r.dt for c, r in zip(clusters, results))
    active = [c.t_current <= t_collision for c in clusters]
    return t_collision, active


def _compute_cluster(cluster, particles, statics, pairs, solver):
    t0 = time.perf_counter_ns()
    result = compute_effective_dt(cluster, particles, statics, pairs)
    t1 = time.perf_counter_ns()
    solution = solve_impulses(result.contacts, particles, solver) if result.contacts else None
    t2 = time.perf_counter_ns()
    return result, solution, (t1 - t0) // 1000, (t2 - t1) // 1000


def step(world: World, t_final: float | None = None) -> SweepRow:
    """Run one sweep; returns its trace row after committing updates.

    With `t_final` the steps are clamped so no clock overruns it; every
    particle finishes exactly there. A cluster already at the end keeps
    its place without emitting updates while the rest catch up.
    """
    cfg = world.config
    particles = world.particles

    t0 = time.perf_counter_ns()
    graph = build_collision_graph(particles, world.statics, cfg.policy)
    t1 = time.perf_counter_ns()
    clusters = connected_components(graph, sorted(particles))
    rollbacks = 0
    for cluster in clusters:
        rollbacks += consolidate(cluster, particles, cfg.policy)
        attach_statics(cluster, graph)
        if t_final is not None:
            cluster.dt = min(cluster.dt, max(t_final - cluster.t_current, 0.0))
    t2 = time.perf_counter_ns()

    # Size and solve every cluster's prospective step, reusing cached
    # outcomes for clusters whose inputs did not move since last sweep.
    jobs: list[tuple[int, tuple]] = []
    outcomes: list[tuple | None] = [None] * len(clusters)
    dt_us = [0] * len(clusters)
    solve_us = [0] * len(clusters)
    keys = []
    for i, cluster in enumerate(clusters):
        key = _cache_key(cluster, particles)
        keys.append(key)
        hit = world._cache.get(key)
        if hit is not None:
            outcomes[i] = hit
        else:
            jobs.append((i, _cluster_pairs(cluster, graph)))
    if jobs and cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [
                (i, pool.submit(_compute_cluster, clusters[i], particles,
                                world.statics, pairs, cfg.solver))
                for i, pairs in jobs
            ]
        for i, fut in futures:
            result, solution, dt_t, solve_t = fut.result()
            outcomes[i] = (result, solution)
            dt_us[i], solve_us[i] = dt_t, solve_t
    else:
        for i, pairs in jobs:
            result, solution, dt_t, solve_t = _compute_cluster(
                clusters[i], particles, world.statics, pairs, cfg.solver)
            outcomes[i] = (result, solution)
            dt_us[i], solve_us[i] = dt_t, solve_t
    t3 = time.perf_counter_ns()

    results = [o[0] for o in outcomes]
    t_collision, active = mask_clusters(clusters, results)

    next_cache: dict[tuple, tuple] = {}
    world.sweep += 1
    n_active = 0
    for i, cluster in enumerate(clusters):
        result, solution = outcomes[i]
        if cfg.mode == "global":
            committed = _truncate(result, cluster, t_collision)
            if committed.contacts and (
                solution is None or len(committed.contacts) != len(result.contacts)
            ):
                solution = solve_impulses(committed.contacts, particles, cfg.solver)
        elif active[i]:
            committed = result
        else:
            # Held back: keep the prospective step for the sweeps ahead.
            next_cache[keys[i]] = outcomes[i]
            continue
        if committed.dt == 0.0:
            # Parked at the end of the run; nothing advances.
            next_cache[keys[i]] = outcomes[i]
            continue
        n_active += 1
        integrate_cluster(cluster, particles, committed, solution)
        apply_separation(committed.contacts, particles, cfg.solver.beta)
        for pid in cluster.members:
            roll_over(particles[pid].timeline)
        for c in committed.contacts:
            world.trace.contact_events.append((world.sweep, c.body_a, c.body_b))
        world.trace.cluster_updates.append(ClusterRow(
            sweep=world.sweep,
            cluster_id=cluster.cid,
            size=cluster.size,
            t_current=cluster.t_current,
            dt_effective=committed.dt,
            narrowing_iters=committed.narrowing_iters,
            n_contacts=len(committed.contacts),
            picard_iters=solution.iterations if solution is not None else 0,
            solve_us=0 if cfg.zero_timings else solve_us[i],
        ))
    world._cache = next_cache
    t4 = time.perf_counter_ns()

    zero = cfg.zero_timings
    row = SweepRow(
        sweep=world.sweep,
        global_t_min=world.min_time(),
        n_clusters=len(clusters),
        n_active=n_active,
        t_collision=t_collision,
        rollbacks=rollbacks,
        phase_broad_us=0 if zero else (t1 - t0) // 1000,
        phase_cluster_us=0 if zero else (t2 - t1) // 1000,
        phase_dt_us=0 if zero else (t3 - t2) // 1000,
        phase_solve_us=0 if zero else (t4 - t3) // 1000,
    )
    world.trace.sweeps.append(row)
    return row


def _truncate(result: NarrowResult, cluster: Cluster, t_collision: float) -> NarrowResult:
    """Cut a prospective step at the shared horizon (global mode)."""
    dt_used = t_collision - cluster.t_current
    if dt_used >= result.dt:
        return result
    return replace(
        result,
        dt=dt_used,
        contacts=[c for c in result.contacts if c.t <= t_collision],
    )


def run(world: World, t_final: float, on_sweep=None) -> SweepTrace:
    """Sweep until every particle's clock reaches t_final.

    `on_sweep(world, row)` is called after each committed sweep. Raises
    EngineError if the sweep budget runs out first, which points at a
    scene that stopped making progress.
    """
    while world.min_time() < t_final:
        if world.sweep >= world.config.max_sweeps:
            raise EngineError(
                f"no progress to t={t_final}: {world.sweep} sweeps spent, "
                f"slowest particle at t={world.min_time()}"
            )
        row = step(world, t_final)
        if on_sweep is not None:
            on_sweep(world, row)
    return world.trace


SWEEP_COLUMNS = (
    "sweep", "global_t_min", "n_clusters", "n_active", "t_collision", "rollbacks",
    "phase_broad_us", "phase_cluster_us", "phase_dt_us", "phase_solve_us",
)
CLUSTER_COLUMNS = (
    "sweep", "cluster_id", "size", "t_current", "dt_effective",
    "narrowing_iters", "n_contacts", "picard_iters", "solve_us",
)


def _cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def emit_trace(trace: SweepTrace, out_dir) -> tuple[str, str]:
    """Write sweep.csv and cluster_updates.csv; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    sweep_path = os.path.join(out_dir, "sweep.csv")
    with open(sweep_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in trace.sweeps:
            f.write(",".join(_cell(getattr(row, c)) for c in SWEEP_COLUMNS) + "\n")
    cluster_path = os.path.join(out_dir, "cluster_updates.csv")
    with open(cluster_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(CLUSTER_COLUMNS) + "\n")
        for row in trace.cluster_updates:
            f.write(",".join(_cell(getattr(row, c)) for c in CLUSTER_COLUMNS) + "\n")
    return sweep_path, cluster_path

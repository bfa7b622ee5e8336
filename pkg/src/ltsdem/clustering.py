"""Cluster formation and consolidation.

Connected components of the collision graph advance together. Components
are found by iterative minimum-label propagation: every particle starts
labelled with its own id and repeatedly adopts the smallest label in its
neighborhood until nothing changes. Isolated particles become singleton
clusters. Consolidation then rolls every member back to the youngest
member time stamp so the cluster shares one consistent now.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .broadphase import CollisionGraph, TimeStepPolicy, particle_dt
from .state import rollback


@dataclass
class Cluster:
    members: tuple[int, ...]  # sorted particle ids
    t_current: float = 0.0
    dt: float = 0.0  # min member step bound after consolidation
    statics: tuple[int, ...] = ()
    effective_dt: float | None = None
    contacts: list = field(default_factory=list)

    @property
    def cid(self) -> int:
        return self.members[0]

    @property
    def size(self) -> int:
        return len(self.members)


def connected_components(graph: CollisionGraph, particle_ids) -> list[Cluster]:
    """Minimum-label propagation over the edge set.

    Deterministic: labels only ever decrease and the fixpoint is the
    component minimum, independent of sweep order. Clusters come back
    sorted by their smallest member id.
    """
    labels = {pid: pid for pid in particle_ids}
    adj = graph.neighbors()
    changed = True
    while changed:
        changed = False
        for pid in sorted(labels):
            best = labels[pid]
            for other in adj.get(pid, ()):
                if labels[other] < best:
                    best = labels[other]
            if best < labels[pid]:
                labels[pid] = best
                changed = True
    groups: dict[int, list[int]] = {}
    for pid in sorted(labels):
        groups.setdefault(labels[pid], []).append(pid)
    return [Cluster(members=tuple(sorted(m))) for _, m in sorted(groups.items())]


def consolidate(cluster: Cluster, particles, policy: TimeStepPolicy) -> int:
    """Roll members back to the youngest member time and size the step.

    Returns the number of rollbacks performed. The rollback target is a
    member's own current stamp, so by the masking guarantee it can never
    undercut any member's old snapshot.
    """
    timelines = [particles[pid].timeline for pid in cluster.members]
    t_min = min(tl.current.t for tl in timelines)
    rollbacks = 0
    for tl in timelines:
        if tl.current.t > t_min:
            rollback(tl, t_min)
            rollbacks += 1
    cluster.t_current = t_min
    cluster.dt = min(particle_dt(tl, policy) for tl in timelines)
    return rollbacks


def attach_statics(cluster: Cluster, graph: CollisionGraph) -> None:
    linked: set[int] = set()
    for pid in cluster.members:
        linked.update(graph.static_links.get(pid, ()))
    cluster.statics = tuple(sorted(linked))

"""Per-particle kinematic snapshots and the three-slot timeline.

Each particle carries up to three snapshots: ``old`` at the begin of its
last completed step, ``current`` at its individual time stamp, and ``new``
once a prospective step has been integrated. Positions, velocities and
angular velocities interpolate linearly between snapshots; orientations
interpolate along the shortest arc.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import quaternions


class RollbackBelowSnapshotError(RuntimeError):
    """Raised when a rollback targets a time before the old snapshot.

    A correct sweep never produces this: cluster consolidation only rolls
    members back to the minimum current time stamp within the cluster, and
    the masking step guarantees that minimum never undercuts any member's
    old snapshot.
    """


@dataclass
class ParticleState:
    """Rigid body pose and velocity at one time stamp."""

    position: np.ndarray
    velocity: np.ndarray
    rotation: np.ndarray  # unit quaternion [w, x, y, z]
    angular_velocity: np.ndarray  # world frame, rad per unit time
    t: float

    def copy(self) -> "ParticleState":
        return ParticleState(
            self.position.copy(),
            self.velocity.copy(),
            self.rotation.copy(),
            self.angular_velocity.copy(),
            self.t,
        )


@dataclass
class ParticleTimeline:
    old: ParticleState
    current: ParticleState
    new: ParticleState | None = None
    # Bumped on every mutation so caches keyed on timelines stay honest.
    version: int = field(default=0, compare=False)

    @property
    def last_dt(self) -> float:
        return self.current.t - self.old.t

    def touch(self) -> None:
        self.version += 1


def make_timeline(state: ParticleState) -> ParticleTimeline:
    """Fresh timeline where old and current coincide (first-step setup)."""
    return ParticleTimeline(old=state.copy(), current=state.copy())


def interpolate(a: ParticleState, b: ParticleState, t: float) -> ParticleState:
    """State at time t between two snapshots a and b with a.t <= t <= b.t."""
    if b.t < a.t:
        raise ValueError(f"snapshots out of order: {a.t} > {b.t}")
    if t < a.t or t > b.t:
        raise ValueError(f"time {t} outside snapshot window [{a.t}, {b.t}]")
    span = b.t - a.t
    if span == 0.0:
        return a.copy()
    u = (t - a.t) / span
    return ParticleState(
        position=(1.0 - u) * a.position + u * b.position,
        velocity=(1.0 - u) * a.velocity + u * b.velocity,
        rotation=quaternions.slerp(a.rotation, b.rotation, u),
        angular_velocity=(1.0 - u) * a.angular_velocity + u * b.angular_velocity,
        t=t,
    )


def extrapolate_free_flight(state: ParticleState, dt: float) -> ParticleState:
    """Ballistic continuation: constant velocity, constant spin, no forces."""
    if dt < 0.0:
        raise ValueError(f"free flight requires dt >= 0, got {dt}")
    return ParticleState(
        position=state.position + dt * state.velocity,
        velocity=state.velocity.copy(),
        rotation=quaternions.advance(state.rotation, state.angular_velocity, dt),
        angular_velocity=state.angular_velocity.copy(),
        t=state.t + dt,
    )


def rollback(timeline: ParticleTimeline, t: float) -> None:
    """Move the current snapshot back to time t, discarding any new one.

    t must lie in [old.t, current.t]. The old snapshot is kept, so the
    particle can still report its last completed step size.
    """
    if t > timeline.current.t:
        raise ValueError(f"rollback target {t} is ahead of current {timeline.current.t}")
    if t < timeline.old.t:
        raise RollbackBelowSnapshotError(
            f"rollback target {t} undercuts old snapshot at {timeline.old.t}"
        )
    if t != timeline.current.t:
        timeline.current = interpolate(timeline.old, timeline.current, t)
    timeline.new = None
    timeline.touch()


def roll_over(timeline: ParticleTimeline) -> None:
    """Promote new -> current -> old after a completed step."""
    if timeline.new is None:
        raise ValueError("roll_over requires a new snapshot")
    timeline.old = timeline.current
    timeline.current = timeline.new
    timeline.new = None
    timeline.touch()

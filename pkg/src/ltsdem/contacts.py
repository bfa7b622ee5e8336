"""Implicit contact resolution by relaxed sequential impulses.

All contacts of one consolidated cluster are solved together against the
member velocities at the shared clock. Contacts are ordered into color
classes so that no two contacts in a class touch the same dynamic body,
then normal and friction impulses are swept class by class until the
largest impulse correction, measured both linearly and as torque about
the contact arms, drops under the convergence threshold.

Restitution targets the approach speed each contact had before the
solve; contacts that merely rest against each other get a zero target,
so settled arrangements are held without injected bounce.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ccd import ContactPoint, NarrowResult
from .state import extrapolate_free_flight


@dataclass
class SolverConfig:
    restitution: float = 1.0
    friction: float = 0.3
    relaxation: float = 0.5
    penalty: float = 1.0
    threshold: float = 1e-4
    max_iterations: int = 256
    beta: float = 0.2  # positional correction gain per step

    def __post_init__(self) -> None:
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError(f"restitution must be in [0, 1], got {self.restitution}")
        if self.friction < 0.0:
            raise ValueError(f"friction must be >= 0, got {self.friction}")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError(f"relaxation must be in (0, 1], got {self.relaxation}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class ImpulseSolution:
    """Post-impulse velocities for every dynamic body that was touched."""

    velocities: dict[int, np.ndarray]
    angular_velocities: dict[int, np.ndarray]
    iterations: int
    converged: bool
    normal_impulses: list[float] = field(default_factory=list)
    friction_impulses: list[np.ndarray] = field(default_factory=list)


def color_contact_graph(contacts: list[ContactPoint]) -> list[list[int]]:
    """Greedy color classes: no class reuses a dynamic body.

    Contacts are visited in their given order and take the lowest class
    not already holding one of their dynamic bodies, so the grouping is
    deterministic. Shared static geometry does not conflict; impulses
    never change it.
    """
    classes: list[list[int]] = []
    used: list[set[int]] = []
    for idx, c in enumerate(contacts):
        bodies = {bid for bid in (c.body_a, c.body_b) if bid >= 0}
        for k, taken in enumerate(used):
            if not taken & bodies:
                classes[k].append(idx)
                taken |= bodies
                break
        else:
            classes.append([idx])
            used.append(set(bodies))
    return classes


class _Arm:
    """Per-contact coupling of one body side: arm, mobility, velocity slot."""

    __slots__ = ("pid", "inv_mass", "r", "inv_inertia")

    def __init__(self, pid, inv_mass, r, inv_inertia):
        self.pid = pid
        self.inv_mass = inv_mass
        self.r = r
        self.inv_inertia = inv_inertia

    def mobility(self, direction: np.ndarray) -> float:
        """Inverse effective mass this side contributes along a direction."""
        if self.inv_mass == 0.0:
            return 0.0
        rxd = np.cross(self.r, direction)
        return self.inv_mass + float(direction @ np.cross(self.inv_inertia @ rxd, self.r))


def _contact_arm(bid: int, particles, t: float) -> tuple[_Arm, np.ndarray | None, np.ndarray | None]:
    """Coupling data plus the pre-solve velocity slots for one body side."""
    if bid < 0:
        return _Arm(bid, 0.0, np.zeros(3), np.zeros((3, 3))), None, None
    p = particles[bid]
    s0 = p.timeline.current
    at_contact = extrapolate_free_flight(s0, t - s0.t)
    return (
        _Arm(bid, 1.0 / p.mass.mass, None, p.inverse_inertia_world(at_contact)),
        s0.velocity.copy(),
        s0.angular_velocity.copy(),
    )


def solve_impulses(contacts: list[ContactPoint], particles,
                   config: SolverConfig | None = None) -> ImpulseSolution:
    """Resolve all contacts at once, returning post-impulse velocities.

    Velocities are the only unknowns: each body keeps the single velocity
    it will carry away from its first contact, and every contact is
    evaluated against those shared unknowns, which couples simultaneous
    impacts through common bodies. Normal impulses accumulate clamped to
    be repulsive; friction accumulates per contact and is clamped to the
    cone `|f| <= friction * normal`.
    """
    cfg = config or SolverConfig()
    if not contacts:
        return ImpulseSolution({}, {}, 0, True)

    vel: dict[int, np.ndarray] = {}
    ang: dict[int, np.ndarray] = {}
    arms: list[tuple[_Arm, _Arm]] = []
    k_normal = np.empty(len(contacts))
    bias = np.empty(len(contacts))
    for i, c in enumerate(contacts):
        sides = []
        for bid in (c.body_a, c.body_b):
            arm, v0, w0 = _contact_arm(bid, particles, c.t)
            if bid >= 0:
                s0 = particles[bid].timeline.current
                com = s0.position + (c.t - s0.t) * s0.velocity
                arm.r = c.position - com
                if bid not in vel:
                    vel[bid] = v0
                    ang[bid] = w0
            sides.append(arm)
        a, b = sides
        arms.append((a, b))
        k_normal[i] = a.mobility(c.normal) + b.mobility(c.normal)
        vn0 = float(_relative_velocity(a, b, vel, ang) @ c.normal)
        bias[i] = -cfg.restitution * min(vn0, 0.0)

    classes = color_contact_graph(contacts)
    lam = np.zeros(len(contacts))
    fric = [np.zeros(3) for _ in contacts]
    iterations = 0
    converged = False
    while iterations < cfg.max_iterations and not converged:
        iterations += 1
        worst = 0.0
        for cls in classes:
            for i in cls:
                c = contacts[i]
                a, b = arms[i]
                n = c.normal

                v_rel = _relative_velocity(a, b, vel, ang)
                d_lam = cfg.relaxation * cfg.penalty * (bias[i] - float(v_rel @ n)) / k_normal[i]
                new_lam = max(lam[i] + d_lam, 0.0)
                applied = (new_lam - lam[i]) * n
                lam[i] = new_lam
                _apply(a, b, applied, vel, ang)
                worst = max(worst, _impulse_measure(a, b, applied))

                if cfg.friction > 0.0 and lam[i] > 0.0:
                    v_rel = _relative_velocity(a, b, vel, ang)
                    vt = v_rel - float(v_rel @ n) * n
                    speed = float(np.linalg.norm(vt))
                    if speed > 1e-12:
                        t_dir = vt / speed
                        k_t = a.mobility(t_dir) + b.mobility(t_dir)
                        target = fric[i] - (cfg.relaxation * speed / k_t) * t_dir
                        cap = cfg.friction * lam[i]
                        scale = float(np.linalg.norm(target))
                        if scale > cap:
                            target *= cap / scale
                        applied = target - fric[i]
                        fric[i] = target
                        _apply(a, b, applied, vel, ang)
                        worst = max(worst, _impulse_measure(a, b, applied))
        converged = worst < cfg.threshold
    return ImpulseSolution(
        velocities=vel,
        angular_velocities=ang,
        iterations=iterations,
        converged=converged,
        normal_impulses=[float(x) for x in lam],
        friction_impulses=fric,
    )


def _relative_velocity(a: _Arm, b: _Arm, vel, ang) -> np.ndarray:
    va = vel[a.pid] + np.cross(ang[a.pid], a.r) if a.pid >= 0 else np.zeros(3)
    vb = vel[b.pid] + np.cross(ang[b.pid], b.r) if b.pid >= 0 else np.zeros(3)
    return va - vb


def _apply(a: _Arm, b: _Arm, impulse: np.ndarray, vel, ang) -> None:
    if a.pid >= 0:
        vel[a.pid] += a.inv_mass * impulse
        ang[a.pid] += a.inv_inertia @ np.cross(a.r, impulse)
    if b.pid >= 0:
        vel[b.pid] -= b.inv_mass * impulse
        ang[b.pid] -= b.inv_inertia @ np.cross(b.r, impulse)


def _impulse_measure(a: _Arm, b: _Arm, impulse: np.ndarray) -> float:
    """Largest of the impulse itself and its torque about either arm."""
    m = float(np.linalg.norm(impulse))
    for side in (a, b):
        if side.pid >= 0:
            m = max(m, float(np.linalg.norm(np.cross(side.r, impulse))))
    return m


def integrate_cluster(cluster, particles, result: NarrowResult,
                      solution: ImpulseSolution | None) -> None:
    """Write prospective new snapshots for every cluster member.

    Each body flies freely from the shared clock to its first contact,
    switches to its post-impulse velocity there, and flies on to the end
    of the effective step. Bodies without contacts keep their velocity
    for the whole step. The timelines' new slots are filled but not
    promoted; that is the caller's commit decision.
    """
    t_new = cluster.t_current + result.dt
    first_touch: dict[int, float] = {}
    for c in result.contacts:
        for bid in (c.body_a, c.body_b):
            if bid >= 0:
                t = first_touch.get(bid)
                first_touch[bid] = c.t if t is None else min(t, c.t)
    for pid in cluster.members:
        tl = particles[pid].timeline
        s0 = tl.current
        t_c = first_touch.get(pid)
        if t_c is None or solution is None or pid not in solution.velocities:
            tl.new = extrapolate_free_flight(s0, t_new - s0.t)
        else:
            pre = extrapolate_free_flight(s0, t_c - s0.t)
            pre.velocity = solution.velocities[pid].copy()
            pre.angular_velocity = solution.angular_velocities[pid].copy()
            tl.new = extrapolate_free_flight(pre, t_new - pre.t)
        tl.touch()


def apply_separation(contacts: list[ContactPoint], particles, beta: float) -> None:
    """Push overlapping pairs apart on their new snapshots.

    A fraction `beta` of each pair's depth is split along the normal by
    inverse mass, nudging halos that interpenetrate back toward a clean
    gap over a few steps without injecting momentum. Contacts on the
    same body pair average into one push, so a face-on-face manifold of
    several equal-depth points corrects no harder than a single point.
    """
    pushes: dict[tuple[int, int], list[np.ndarray]] = {}
    for c in contacts:
        if c.depth > 0.0:
            pushes.setdefault((c.body_a, c.body_b), []).append(c.depth * c.normal)
    for (bid_a, bid_b), vecs in sorted(pushes.items()):
        wa = 1.0 / particles[bid_a].mass.mass if bid_a >= 0 else 0.0
        wb = 1.0 / particles[bid_b].mass.mass if bid_b >= 0 else 0.0
        total = wa + wb
        if total == 0.0:
            continue
        push = beta * np.mean(vecs, axis=0)
        if bid_a >= 0:
            tl = particles[bid_a].timeline
            if tl.new is not None:
                tl.new.position = tl.new.position + push * (wa / total)
                tl.touch()
        if bid_b >= 0:
            tl = particles[bid_b].timeline
            if tl.new is not None:
                tl.new.position = tl.new.position - push * (wb / total)
                tl.touch()

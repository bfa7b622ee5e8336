"""Rigid bodies: dynamic particles and immovable static geometry.

Dynamic particles keep their mesh in a body frame whose origin is the
center of mass, so rotations apply directly. Static bodies bake their pose
into world-frame vertices once and never move; they get negative ids so
contact records can name either kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quaternions
from .mesh import BoundingSphere, MassProperties, TriangleMesh, bounding_sphere, mass_properties
from .state import ParticleState, ParticleTimeline, make_timeline
from .surrogate import SurrogateTree, build_surrogate_tree


@dataclass
class Particle:
    pid: int
    mesh: TriangleMesh  # body frame, origin at the center of mass
    tree: SurrogateTree
    epsilon: float
    mass: MassProperties
    sphere: BoundingSphere  # body frame, radius includes epsilon
    timeline: ParticleTimeline

    def corners_at(self, state: ParticleState, level: int = 0) -> np.ndarray:
        """World-frame corner array (k, 3, 3) of one surrogate level."""
        rot = quaternions.to_matrix(state.rotation)
        return self.tree.levels[level].corners @ rot.T + state.position

    def sphere_center_at(self, state: ParticleState) -> np.ndarray:
        return state.position + quaternions.rotate(state.rotation, self.sphere.center)

    def inverse_inertia_world(self, state: ParticleState) -> np.ndarray:
        rot = quaternions.to_matrix(state.rotation)
        return rot @ self.mass.inverse_inertia @ rot.T


@dataclass
class StaticBody:
    sid: int  # negative, disjoint from particle ids
    mesh: TriangleMesh  # world frame, pose baked in
    tree: SurrogateTree
    epsilon: float
    sphere: BoundingSphere

    def corners(self, level: int = 0) -> np.ndarray:
        return self.tree.levels[level].corners


def make_particle(
    pid: int,
    mesh: TriangleMesh,
    epsilon: float,
    state: ParticleState,
    density: float = 1.0,
    fanout: int = 4,
) -> Particle:
    """Assemble a dynamic particle, recentering the mesh on its mass center.

    `state.position` is interpreted as the world position of the center of
    mass; the timeline starts with coinciding old and current snapshots.
    """
    props = mass_properties(mesh, density)
    centered = mesh.translated(-props.com)
    props = MassProperties(mass=props.mass, com=np.zeros(3), inertia=props.inertia)
    tree = build_surrogate_tree(centered, epsilon, fanout=fanout)
    # Pin the sphere at the mass center even if a smaller off-center sphere
    # exists: the center then travels the same piecewise-linear path as the
    # position snapshots, which the swept broad-phase screen assumes.
    radius = float(np.linalg.norm(centered.vertices, axis=1).max()) + epsilon
    return Particle(
        pid=pid,
        mesh=centered,
        tree=tree,
        epsilon=epsilon,
        mass=props,
        sphere=BoundingSphere(center=np.zeros(3), radius=radius),
        timeline=make_timeline(state),
    )


def make_static(sid: int, mesh: TriangleMesh, epsilon: float, fanout: int = 4) -> StaticBody:
    if sid >= 0:
        raise ValueError(f"static ids are negative, got {sid}")
    return StaticBody(
        sid=sid,
        mesh=mesh,
        tree=build_surrogate_tree(mesh, epsilon, fanout=fanout),
        epsilon=epsilon,
        sphere=bounding_sphere(mesh, epsilon),
    )


def initial_state(
    position, velocity=(0.0, 0.0, 0.0), rotation=None, angular_velocity=(0.0, 0.0, 0.0), t=0.0
) -> ParticleState:
    return ParticleState(
        position=np.asarray(position, dtype=float),
        velocity=np.asarray(velocity, dtype=float),
        rotation=np.asarray(
            rotation if rotation is not None else quaternions.IDENTITY, dtype=float
        ),
        angular_velocity=np.asarray(angular_velocity, dtype=float),
        t=float(t),
    )

from __future__ import annotations

import numpy as np
import pytest

from ltsdem.body import initial_state, make_particle, make_static
from ltsdem.broadphase import (
    TimeStepPolicy,
    _Trajectory,
    build_collision_graph,
    check_spacetime_aabb,
    check_spacetime_tube,
    pair_window,
    particle_dt,
)
from ltsdem.mesh import make_cube, make_plane
from ltsdem.state import extrapolate_free_flight, roll_over


def _cube_particle(pid, position, velocity=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0), t=0.0):
    return make_particle(
        pid,
        make_cube((0.0, 0.0, 0.0), 1.0),
        epsilon=0.01,
        state=initial_state(position, velocity=velocity, angular_velocity=omega, t=t),
    )


def _advance(p, dt, new_velocity=None):
    """Complete one free-flight step so the timeline has two distinct legs."""
    tl = p.timeline
    tl.new = extrapolate_free_flight(tl.current, dt)
    roll_over(tl)
    if new_velocity is not None:
        tl.current.velocity = np.asarray(new_velocity, dtype=float)


def test_first_step_gets_full_cap():
    p = _cube_particle(0, (0.0, 0.0, 0.0))
    policy = TimeStepPolicy(dt_max=0.25)
    assert particle_dt(p.timeline, policy) == 0.25


def test_step_bound_doubles_until_cap():
    policy = TimeStepPolicy(dt_max=1.0)
    p = _cube_particle(0, (0.0, 0.0, 0.0))
    _advance(p, 0.1)
    assert particle_dt(p.timeline, policy) == pytest.approx(0.2)
    q = _cube_particle(1, (5.0, 0.0, 0.0))
    _advance(q, 0.7)
    assert particle_dt(q.timeline, policy) == 1.0


def test_policy_rejects_bad_parameters():
    with pytest.raises(ValueError):
        TimeStepPolicy(dt_max=0.0)
    with pytest.raises(ValueError):
        TimeStepPolicy(dt_max=1.0, growth=1.0)


def test_pair_window_starts_at_younger_stamp():
    assert pair_window(1.0, 0.5, 0.8, 0.3) == (0.8, pytest.approx(1.1))
    assert pair_window(0.8, 0.3, 1.0, 0.5) == (0.8, pytest.approx(1.1))


def test_approaching_particles_form_an_edge():
    a = _cube_particle(0, (-2.0, 0.0, 0.0), velocity=(1.0, 0.0, 0.0))
    b = _cube_particle(1, (2.0, 0.0, 0.0), velocity=(-1.0, 0.0, 0.0))
    graph = build_collision_graph({0: a, 1: b}, {}, TimeStepPolicy(dt_max=5.0))
    assert set(graph.edges) == {(0, 1)}
    start, end = graph.edges[(0, 1)]
    assert start == 0.0
    assert end == 5.0


def test_receding_particles_stay_separate():
    a = _cube_particle(0, (-2.0, 0.0, 0.0), velocity=(-1.0, 0.0, 0.0))
    b = _cube_particle(1, (2.0, 0.0, 0.0), velocity=(1.0, 0.0, 0.0))
    graph = build_collision_graph({0: a, 1: b}, {}, TimeStepPolicy(dt_max=5.0))
    assert graph.edges == {}


def test_timing_screen_rejects_what_the_box_screen_cannot():
    # One particle already has history reaching far into the future; the
    # other is fresh with a short bound, so the joint window ends long
    # before the trajectories would meet. The collapsed boxes still
    # overlap, only the timed sweep can tell the pair apart.
    a = _cube_particle(0, (10.0, 0.0, 0.0), velocity=(-3.0, 0.0, 0.0))
    _advance(a, 1.0)
    b = _cube_particle(1, (0.0, 0.0, 0.0))
    policy = TimeStepPolicy(dt_max=4.0)
    dt_a = particle_dt(a.timeline, policy)
    traj_a = _Trajectory.of_particle(a, dt_a)
    traj_b = _Trajectory.of_particle(b, particle_dt(b.timeline, policy))
    assert check_spacetime_aabb(traj_a, traj_b)
    graph = build_collision_graph({0: a, 1: b}, {}, policy)
    assert graph.edges == {}


def test_static_contact_becomes_link_not_edge():
    floor = make_static(-1, make_plane((-5.0, -5.0, 0.0), (5.0, 5.0, 0.0)), epsilon=0.01)
    p = _cube_particle(0, (0.0, 0.0, 2.0), velocity=(0.0, 0.0, -1.0))
    graph = build_collision_graph({0: p}, {-1: floor}, TimeStepPolicy(dt_max=4.0))
    assert graph.edges == {}
    assert graph.static_links == {0: (-1,)}


def test_far_static_not_linked():
    floor = make_static(-1, make_plane((-5.0, -5.0, 0.0), (5.0, 5.0, 0.0)), epsilon=0.01)
    p = _cube_particle(0, (0.0, 0.0, 50.0), velocity=(0.0, 0.0, 1.0))
    graph = build_collision_graph({0: p}, {-1: floor}, TimeStepPolicy(dt_max=1.0))
    assert graph.static_links == {}


def test_two_statics_never_pair():
    a = make_static(-1, make_plane((-1.0, -1.0, 0.0), (1.0, 1.0, 0.0)), epsilon=0.01)
    b = make_static(-2, make_plane((-1.0, -1.0, 0.1), (1.0, 1.0, 0.1)), epsilon=0.01)
    p = _cube_particle(0, (30.0, 0.0, 0.0))
    graph = build_collision_graph({0: p}, {-1: a, -2: b}, TimeStepPolicy(dt_max=0.5))
    assert graph.edges == {}
    assert graph.static_links == {}


def _random_scene(rng, n_particles):
    particles = {}
    for pid in range(n_particles):
        p = _cube_particle(
            pid,
            rng.uniform(0.0, 8.0, size=3),
            velocity=rng.normal(scale=1.5, size=3),
            omega=rng.normal(scale=0.5, size=3),
        )
        if rng.uniform() < 0.5:
            _advance(p, rng.uniform(0.05, 0.4), new_velocity=rng.normal(scale=1.5, size=3))
        particles[pid] = p
    statics = {-1: make_static(-1, make_plane((-20.0, -20.0, -1.0), (20.0, 20.0, -1.0)), 0.01)}
    return particles, statics


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_spatial_hash_is_pure_acceleration(seed):
    # The hash may only prune pairs whose boxes cannot overlap; the
    # resulting graph must be identical to the brute-force one, including
    # the huge floor plane that lands in the oversized bucket.
    rng = np.random.default_rng(seed)
    particles, statics = _random_scene(rng, 24)
    policy = TimeStepPolicy(dt_max=0.6)
    fast = build_collision_graph(particles, statics, policy)
    slow = build_collision_graph(particles, statics, policy, exhaustive=True)
    assert fast.edges == slow.edges
    assert fast.static_links == slow.static_links
    assert fast.dts == slow.dts


def _random_trajectory_pair(rng):
    a = _cube_particle(
        0, rng.uniform(-3.0, 3.0, size=3), velocity=rng.normal(scale=2.0, size=3)
    )
    b = _cube_particle(
        1, rng.uniform(-3.0, 3.0, size=3), velocity=rng.normal(scale=2.0, size=3)
    )
    for p in (a, b):
        if rng.uniform() < 0.6:
            _advance(p, rng.uniform(0.05, 0.5), new_velocity=rng.normal(scale=2.0, size=3))
    policy = TimeStepPolicy(dt_max=float(rng.uniform(0.2, 1.0)))
    dt_a = particle_dt(a.timeline, policy)
    dt_b = particle_dt(b.timeline, policy)
    window = pair_window(a.timeline.current.t, dt_a, b.timeline.current.t, dt_b)
    return _Trajectory.of_particle(a, dt_a), _Trajectory.of_particle(b, dt_b), window


def test_box_screen_contains_timing_screen():
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(300):
        ta, tb, window = _random_trajectory_pair(rng)
        if not check_spacetime_aabb(ta, tb):
            assert not check_spacetime_tube(ta, tb, window)
            hits += 1
    assert hits > 20  # the sample must actually exercise the implication


def test_timing_screen_matches_dense_sampling():
    rng = np.random.default_rng(11)
    disagreements_checked = 0
    for _ in range(250):
        ta, tb, window = _random_trajectory_pair(rng)
        verdict = check_spacetime_tube(ta, tb, window)
        times = np.linspace(window[0], window[1], 4001)
        sampled = min(float(np.linalg.norm(ta.at(t) - tb.at(t))) for t in times)
        touch = ta.radius + tb.radius
        if not verdict:
            # A miss is a guarantee: no sampled instant may come closer.
            assert sampled > touch - 1e-12
            disagreements_checked += 1
        else:
            # A hit only claims the true minimum dips below touching
            # distance; dense sampling sees it up to grid resolution.
            assert sampled <= touch + 5e-3
    assert disagreements_checked > 30


def test_empty_window_means_no_overlap():
    a = _cube_particle(0, (0.0, 0.0, 0.0))
    b = _cube_particle(1, (0.5, 0.0, 0.0))
    ta = _Trajectory.of_particle(a, 0.1)
    tb = _Trajectory.of_particle(b, 0.1)
    assert not check_spacetime_tube(ta, tb, (1.0, 0.5))

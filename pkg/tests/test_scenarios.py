import numpy as np
import pytest
from itertools import combinations

import ltsdem.scenarios as scenarios
from ltsdem import quaternions
from ltsdem.broadphase import build_collision_graph
from ltsdem.ccd import _feature_distances
from ltsdem.engine import run
from ltsdem.mesh import load_mesh
from ltsdem.scenarios import (
    ConfigError,
    ScenarioConfig,
    build_hopper,
    build_particle_pairs,
    build_stacks,
    build_staircase,
    build_tower,
    build_world,
    dump_frame,
    engine_config,
    parse_scenario_config,
)


# --- configuration --------------------------------------------------------


def test_parse_minimal_config():
    cfg = parse_scenario_config("scenario = pairs\n")
    assert cfg.scenario == "pairs"
    assert cfg.epsilon == 1e-2
    assert cfg.mode == "local"
    assert cfg.dt_max == 0.25


def test_parse_full_config_with_comments():
    text = """
    # benchmark sweep
    scenario = stacks   # four towers per row
    rows = 3
    seed = 42
    epsilon = 0.02
    dt_max = 0.125
    t_final = 2.5
    mode = global
    restitution = 0.0
    friction = 0.1
    beta = 0.05
    """
    cfg = parse_scenario_config(text)
    assert cfg.rows == 3
    assert cfg.seed == 42
    assert cfg.mode == "global"
    assert cfg.restitution == 0.0
    assert cfg.beta == 0.05


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("scenario = pairs\nwut = 3\n", "line 2: unknown key 'wut'"),
        ("scenario = pairs\nseed = 1\nseed = 2\n", "line 3: repeated key"),
        ("scenario = pairs\nseed = soon\n", "seed expects an int"),
        ("scenario = pairs\ndt_max = fast\n", "dt_max expects a float"),
        ("scenario = pairs\ndt_max\n", "expected 'key = value'"),
        ("rows = 2\n", "missing required key 'scenario'"),
        ("scenario = blimp\n", "unknown scenario 'blimp'"),
        ("scenario = pairs\nmode = sideways\n", "mode must be"),
        ("scenario = pairs\nepsilon = -1\n", "epsilon must be positive"),
        ("scenario = pairs\nn_pairs = 0\n", "n_pairs must be at least 1"),
    ],
)
def test_parse_rejects(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_scenario_config(text)


def test_engine_config_overrides():
    cfg = ScenarioConfig(scenario="pairs", mode="global", restitution=0.5, dt_max=0.1)
    ec = engine_config(cfg)
    assert ec.mode == "global"
    assert ec.policy.dt_max == 0.1
    assert ec.solver.restitution == 0.5
    forced = engine_config(cfg, mode="local", threads=4, deterministic=True)
    assert forced.mode == "local"
    assert forced.threads == 4
    assert forced.deterministic


def test_build_world_dispatches():
    world = build_world(ScenarioConfig(scenario="pairs", n_pairs=2, seed=1))
    assert len(world.particles) == 4
    world = build_world(ScenarioConfig(scenario="staircase", n_particles=3, seed=1))
    assert len(world.statics) == 20


# --- helpers --------------------------------------------------------------


def _world_triangles(body, state=None):
    mesh = body.mesh
    if state is None:
        return mesh.vertices[mesh.triangles]
    rot = quaternions.to_matrix(state.rotation)
    return (mesh.vertices @ rot.T + state.position)[mesh.triangles]


def _mesh_distance(tris_a, tris_b):
    ia, ib = np.meshgrid(np.arange(len(tris_a)), np.arange(len(tris_b)), indexing="ij")
    return float(_feature_distances(tris_a[ia.ravel()], tris_b[ib.ravel()]).min())


def _min_clearance(world):
    """Smallest surface distance between any close pair of bodies."""
    worst = np.inf
    parts = sorted(world.particles.values(), key=lambda p: p.pid)
    for pa, pb in combinations(parts, 2):
        sa, sb = pa.timeline.current, pb.timeline.current
        if (
            np.linalg.norm(sa.position - sb.position)
            > pa.sphere.radius + pb.sphere.radius
        ):
            continue
        worst = min(worst, _mesh_distance(_world_triangles(pa, sa), _world_triangles(pb, sb)))
    for pa in parts:
        sa = pa.timeline.current
        for static in world.statics.values():
            gap = np.linalg.norm(sa.position - static.sphere.center)
            if gap > pa.sphere.radius + static.sphere.radius:
                continue
            worst = min(
                worst, _mesh_distance(_world_triangles(pa, sa), _world_triangles(static))
            )
    return worst


# --- pairs ----------------------------------------------------------------


def test_pairs_layout_and_partners():
    world = build_particle_pairs(8, seed=3)
    assert len(world.particles) == 16
    assert not world.statics
    for k in range(8):
        left = world.particles[2 * k].timeline.current
        right = world.particles[2 * k + 1].timeline.current
        assert left.position[0] < 0 < right.position[0]
        assert left.velocity[0] > 0 > right.velocity[0]
        assert 0.9 <= left.velocity[0] <= 1.1
        # motion is pure x: rows can never mix
        assert left.velocity[1] == left.velocity[2] == 0.0
    # every sphere's only broad-phase partner is its opposite number
    graph = build_collision_graph(world.particles, world.statics, world.config.policy)
    expected = {(2 * k, 2 * k + 1) for k in range(8)}
    assert set(graph.edges) == expected
    assert all(not links for links in graph.static_links.values())


def test_pairs_sphere_mesh_size():
    world = build_particle_pairs(1, seed=0)
    assert all(len(p.mesh.triangles) == 48 for p in world.particles.values())


def test_pairs_each_collides_once():
    world = build_particle_pairs(4, seed=11)
    run(world, 5.0)
    hits = sorted(set((a, b) for _, a, b in world.trace.contact_events))
    assert hits == [(0, 1), (2, 3), (4, 5), (6, 7)]
    for k in range(4):
        left = world.particles[2 * k].timeline.current
        right = world.particles[2 * k + 1].timeline.current
        # elastic equal-mass exchange: both now receding
        assert left.velocity[0] < 0 < right.velocity[0]


# --- stacks ---------------------------------------------------------------


def test_stacks_population():
    world = build_stacks(2, seed=5)
    assert len(world.particles) == 2 * 4 * 20
    assert len(world.statics) == 1
    floor = world.statics[-1]
    assert len(floor.mesh.triangles) == 2
    assert all(len(p.mesh.triangles) == 12 for p in world.particles.values())


def test_stacks_leftmost_tower_is_plumb():
    world = build_stacks(2, seed=5)
    for row in range(2):
        base = row * 4 * 20
        tower = [world.particles[base + level] for level in range(20)]
        xs = [p.timeline.current.position[0] for p in tower]
        assert max(xs) - min(xs) == 0.0
        assert all(
            np.array_equal(p.timeline.current.velocity, np.zeros(3)) for p in tower
        )


def test_stacks_lean_is_bounded():
    world = build_stacks(1, seed=9)
    pitch = 1.0 + 2.5 * 1e-2
    for col in range(1, 4):
        base = col * 20
        bottom = world.particles[base].timeline.current.position
        top = world.particles[base + 19].timeline.current.position
        lean = np.arctan2(top[0] - bottom[0], top[2] - bottom[2])
        assert 0.0 <= lean <= np.deg2rad(8.0) + 1e-12
        assert top[2] - bottom[2] == pytest.approx(19 * pitch)


def test_stacks_start_clear():
    assert _min_clearance(build_stacks(1, seed=5)) >= 2 * 1e-2


# --- tower ----------------------------------------------------------------


def test_tower_population_and_projectile():
    world = build_tower(3, seed=2)
    assert len(world.particles) == 3 * 32 + 1
    shot = world.particles[3 * 32]
    assert len(shot.mesh.triangles) == 80
    assert shot.timeline.current.velocity[0] > 0
    ring = [world.particles[i] for i in range(3 * 32)]
    assert all(
        np.array_equal(p.timeline.current.velocity, np.zeros(3)) for p in ring
    )


def test_tower_start_clear():
    assert _min_clearance(build_tower(2, seed=2)) >= 2 * 1e-2


# --- hopper and staircase -------------------------------------------------


def test_hopper_population():
    world = build_hopper(10, seed=4)
    assert len(world.particles) == 10
    funnel = world.statics[-1]
    assert len(funnel.mesh.triangles) == 1856
    for p in world.particles.values():
        assert np.array_equal(p.timeline.current.velocity, [0.0, 0.0, -1.0])
        n = len(p.mesh.triangles)
        assert 80 <= n <= 320 and n % 2 == 0
        reach = np.linalg.norm(p.mesh.vertices, axis=1).max()
        assert 0.02 <= reach <= 1.0 * 1.3 + 1e-6


def test_hopper_grains_start_above_rim():
    world = build_hopper(10, seed=4)
    rim_top = world.statics[-1].mesh.vertices[:, 2].max()
    for p in world.particles.values():
        centre = p.timeline.current.position
        assert centre[2] - p.sphere.radius > rim_top
        assert np.hypot(centre[0], centre[1]) < 16.0


def test_hopper_missing_mesh_is_io_error(monkeypatch, tmp_path):
    monkeypatch.setattr(scenarios, "HOPPER_MESH", tmp_path / "gone.obj")
    with pytest.raises(OSError):
        build_hopper(5, seed=0)


def test_staircase_population():
    world = build_staircase(8, seed=6)
    assert sorted(world.statics) == list(range(-20, 0))
    assert all(len(s.mesh.triangles) == 2 for s in world.statics.values())
    tops = [world.statics[-(k + 1)].mesh.vertices[:, 2].max() for k in range(20)]
    assert tops == sorted(tops, reverse=True)
    for p in world.particles.values():
        assert np.array_equal(p.timeline.current.velocity, [0.0, 0.0, -1.0])


def test_grain_scenes_start_clear():
    # centre gap beyond the bounding spheres implies a surface gap of at
    # least 2 * epsilon, since each sphere already carries + epsilon
    for world in (build_hopper(10, seed=4), build_staircase(10, seed=6)):
        parts = sorted(world.particles.values(), key=lambda p: p.pid)
        for pa, pb in combinations(parts, 2):
            gap = np.linalg.norm(
                pa.timeline.current.position - pb.timeline.current.position
            )
            assert gap >= pa.sphere.radius + pb.sphere.radius


# --- frame dumps ----------------------------------------------------------


def test_dump_frame_groups_and_roundtrip(tmp_path):
    world = build_staircase(3, seed=1)
    path = tmp_path / "frame.obj"
    dump_frame(world, path)
    text = path.read_text()
    groups = [line for line in text.splitlines() if line.startswith("g ")]
    assert groups[0] == "g body_-20"
    assert groups[-1] == "g body_2"
    assert len(groups) == 20 + 3
    # the whole frame still parses as one mesh, indices continuing across groups
    merged = load_mesh(path)
    expected_tris = 20 * 2 + sum(
        len(p.mesh.triangles) for p in world.particles.values()
    )
    assert len(merged.triangles) == expected_tris
    assert merged.triangles.min() == 0
    assert merged.triangles.max() == len(merged.vertices) - 1


def test_dump_frame_is_deterministic(tmp_path):
    world = build_particle_pairs(2, seed=8)
    a, b = tmp_path / "a.obj", tmp_path / "b.obj"
    dump_frame(world, a)
    dump_frame(world, b)
    assert a.read_bytes() == b.read_bytes()


def test_dump_frame_tracks_motion(tmp_path):
    world = build_particle_pairs(1, seed=8)
    before = tmp_path / "before.obj"
    after = tmp_path / "after.obj"
    dump_frame(world, before)
    run(world, 1.0)
    dump_frame(world, after)
    assert before.read_bytes() != after.read_bytes()
    # group ordering is unchanged, only coordinates moved
    lines_a = [l for l in before.read_text().splitlines() if l.startswith("g")]
    lines_b = [l for l in after.read_text().splitlines() if l.startswith("g")]
    assert lines_a == lines_b

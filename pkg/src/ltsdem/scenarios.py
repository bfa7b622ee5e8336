"""Benchmark scene builders and the flat key=value run configuration.

Every builder returns a ready-to-run World with non-touching bodies:
all surface gaps start at or above twice the contact tolerance, so the
first sweep never begins inside a contact. Scenes carry their own
motion (seeded initial velocities); nothing here applies gravity.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quaternions
from .body import initial_state, make_particle, make_static
from .broadphase import TimeStepPolicy
from .contacts import SolverConfig
from .engine import EngineConfig, World
from .mesh import TriangleMesh, load_mesh, make_cube, make_noisy_sphere, make_plane

_DATA_DIR = Path(__file__).parent / "data"

SCENARIOS = ("pairs", "stacks", "tower", "hopper", "staircase")
MODES = ("local", "global")


class ConfigError(ValueError):
    """A run configuration that cannot be accepted."""


@dataclass
class ScenarioConfig:
    """One benchmark run, as read from a flat key=value file.

    `scenario` picks the builder; the scale knob that applies to it is
    `n_pairs`, `rows`, `layers`, or `n_particles`. The solver fields map
    straight onto SolverConfig.
    """

    scenario: str
    seed: int = 0
    epsilon: float = 1e-2
    dt_max: float = 0.25
    t_final: float = 5.0
    mode: str = "local"
    n_pairs: int = 8
    rows: int = 1
    layers: int = 6
    n_particles: int = 80
    restitution: float = 1.0
    friction: float = 0.3
    relaxation: float = 0.5
    penalty: float = 1.0
    solver_threshold: float = 1e-4
    max_iterations: int = 256
    beta: float = 0.2
    max_sweeps: int = 10_000

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}, expected one of {', '.join(SCENARIOS)}"
            )
        if self.mode not in MODES:
            raise ConfigError(f"mode must be 'local' or 'global', got {self.mode!r}")
        for name in ("epsilon", "dt_max", "t_final"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("n_pairs", "rows", "layers", "n_particles", "max_sweeps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def parse_scenario_config(text: str) -> ScenarioConfig:
    """Parse `key = value` lines; `#` starts a comment, blank lines skip.

    Unknown and repeated keys are rejected rather than ignored, so a
    typo cannot silently fall back to a default.
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: repeated key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(
                f"line {lineno}: {key} expects {'an int' if kind == 'int' else 'a float'},"
                f" got {value!r}"
            ) from None
    if "scenario" not in values:
        raise ConfigError("missing required key 'scenario'")
    return ScenarioConfig(**values)


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario_config(fh.read())


def engine_config(
    cfg: ScenarioConfig,
    *,
    mode: str | None = None,
    threads: int = 1,
    deterministic: bool = False,
) -> EngineConfig:
    """Assemble the engine settings for a run, with optional overrides."""
    return EngineConfig(
        policy=TimeStepPolicy(dt_max=cfg.dt_max),
        mode=mode if mode is not None else cfg.mode,
        threads=threads,
        deterministic=deterministic,
        max_sweeps=cfg.max_sweeps,
        solver=SolverConfig(
            restitution=cfg.restitution,
            friction=cfg.friction,
            relaxation=cfg.relaxation,
            penalty=cfg.penalty,
            threshold=cfg.solver_threshold,
            max_iterations=cfg.max_iterations,
            beta=cfg.beta,
        ),
    )


def build_world(
    cfg: ScenarioConfig,
    *,
    mode: str | None = None,
    threads: int = 1,
    deterministic: bool = False,
) -> World:
    config = engine_config(cfg, mode=mode, threads=threads, deterministic=deterministic)
    if cfg.scenario == "pairs":
        return build_particle_pairs(cfg.n_pairs, cfg.seed, epsilon=cfg.epsilon, config=config)
    if cfg.scenario == "stacks":
        return build_stacks(cfg.rows, cfg.seed, epsilon=cfg.epsilon, config=config)
    if cfg.scenario == "tower":
        return build_tower(cfg.layers, cfg.seed, epsilon=cfg.epsilon, config=config)
    if cfg.scenario == "hopper":
        return build_hopper(cfg.n_particles, cfg.seed, epsilon=cfg.epsilon, config=config)
    return build_staircase(cfg.n_particles, cfg.seed, epsilon=cfg.epsilon, config=config)


def _default_config() -> EngineConfig:
    return EngineConfig(policy=TimeStepPolicy(dt_max=0.25))


# --- pairs ----------------------------------------------------------------

_PAIR_RADIUS = 0.5
_PAIR_HALF_GAP = 0.7


def build_particle_pairs(
    n_pairs: int, seed: int, *, epsilon: float = 1e-2, config: EngineConfig | None = None
) -> World:
    """Two facing columns of spheres, one head-on collision per pair.

    Pair k sits at height 1.5*k: a left sphere moving +x and a right
    sphere moving -x, with speeds drawn from [0.9, 1.1]. The columns
    start close enough that a sphere's opposite number is already its
    one sphere-tube partner in the first optimistic window, while row
    spacing keeps everyone else out of reach. Motion stays on the x
    axis, so after the elastic exchange the two recede for good.
    """
    if n_pairs < 1:
        raise ValueError(f"need at least one pair, got {n_pairs}")
    rng = np.random.default_rng(seed)
    mesh = make_noisy_sphere(_PAIR_RADIUS, 48, 1.0)
    particles = []
    for k in range(n_pairs):
        z = 1.5 * k
        u_left, u_right = rng.uniform(0.9, 1.1, size=2)
        left = initial_state((-_PAIR_HALF_GAP, 0.0, z), (u_left, 0.0, 0.0))
        right = initial_state((_PAIR_HALF_GAP, 0.0, z), (-u_right, 0.0, 0.0))
        particles.append(make_particle(2 * k, mesh, epsilon, left))
        particles.append(make_particle(2 * k + 1, mesh, epsilon, right))
    return World(particles, [], config or _default_config())


# --- stacks ---------------------------------------------------------------

_STACK_HEIGHT = 20
_STACKS_PER_ROW = 4
# Wide enough that a full 8-degree lean (top offset ~2.74) cannot bring
# neighbouring towers within tube reach of each other.
_STACK_SPACING = 5.0
_MAX_SLANT = np.deg2rad(8.0)


def build_stacks(
    rows: int, seed: int, *, epsilon: float = 1e-2, config: EngineConfig | None = None
) -> World:
    """Rows of four cube towers over a shared floor, most of them leaning.

    Each tower stacks 20 unit cubes with a small clearance between
    levels. The left-most tower of every row stands plumb and still;
    the rest lean by a seeded angle up to 8 degrees (levels shifted
    sideways, cubes kept axis-aligned) and get a slow seeded velocity:
    sideways drift proportional to the lean plus a per-cube downward
    jitter, so neighbours in a tower close their gaps and start
    trading contacts, bottom cubes included via the floor.
    """
    if rows < 1:
        raise ValueError(f"need at least one row, got {rows}")
    rng = np.random.default_rng(seed)
    cube = make_cube((0.0, 0.0, 0.0), 1.0)
    pitch = 1.0 + 2.5 * epsilon
    particles = []
    pid = 0
    for row in range(rows):
        y = _STACK_SPACING * row
        for col in range(_STACKS_PER_ROW):
            slant = 0.0 if col == 0 else rng.uniform(0.0, _MAX_SLANT)
            base_x = _STACK_SPACING * col
            drift = 0.3 * np.sin(slant)
            for level in range(_STACK_HEIGHT):
                x = base_x + np.tan(slant) * pitch * level
                if slant == 0.0:
                    velocity = (0.0, 0.0, 0.0)
                else:
                    velocity = (
                        drift * (1.0 + rng.uniform(-0.3, 0.3)),
                        0.0,
                        -rng.uniform(0.0, 0.008),
                    )
                state = initial_state((x, y, pitch * level), velocity)
                particles.append(make_particle(pid, cube, epsilon, state))
                pid += 1
    floor_z = -0.5 - 2.5 * epsilon
    span_x = _STACK_SPACING * _STACKS_PER_ROW + 8.0
    span_y = _STACK_SPACING * rows + 4.0
    floor = make_plane((-4.0, -4.0, floor_z), (span_x, span_y, floor_z))
    statics = [make_static(-1, floor, epsilon)]
    return World(particles, statics, config or _default_config())


# --- tower ----------------------------------------------------------------

_RING_COUNT = 32
_RING_PITCH = 1.35


def build_tower(
    layers: int, seed: int, *, epsilon: float = 1e-2, config: EngineConfig | None = None
) -> World:
    """Stacked rings of 32 cubes with a sphere shot through the wall.

    Rings alternate a half-slot twist so vertical seams never line up.
    The scene is motionless until the 80-triangle projectile arrives
    from -x at speed 10 and blows a hole in the near side.
    """
    if layers < 1:
        raise ValueError(f"need at least one layer, got {layers}")
    radius = _RING_COUNT * _RING_PITCH / (2.0 * np.pi)
    cube = make_cube((0.0, 0.0, 0.0), 1.0)
    pitch = 1.0 + 2.5 * epsilon
    particles = []
    pid = 0
    for layer in range(layers):
        twist = 0.5 * (layer % 2)
        for slot in range(_RING_COUNT):
            angle = 2.0 * np.pi * (slot + twist) / _RING_COUNT
            pos = (radius * np.cos(angle), radius * np.sin(angle), pitch * layer)
            rot = quaternions.from_axis_angle(np.array([0.0, 0.0, 1.0]), angle)
            particles.append(
                make_particle(pid, cube, epsilon, initial_state(pos, rotation=rot))
            )
            pid += 1
    ball = make_noisy_sphere(1.5, 80, 1.05, seed=seed)
    z_mid = pitch * (layers - 1) / 2.0
    shot = initial_state((-(radius + 12.0), 0.0, z_mid), (10.0, 0.0, 0.0))
    particles.append(make_particle(pid, ball, epsilon, shot))
    floor_z = -0.5 - 2.5 * epsilon
    reach = radius + 16.0
    floor = make_plane((-reach, -reach, floor_z), (reach, reach, floor_z))
    statics = [make_static(-1, floor, epsilon)]
    return World(particles, statics, config or _default_config())


# --- grain sampling shared by hopper and staircase ------------------------


def _grain_meshes(n_particles: int, rng: np.random.Generator) -> list[TriangleMesh]:
    meshes = []
    for _ in range(n_particles):
        radius = rng.uniform(0.025, 1.0)
        n_tris = 2 * int(rng.integers(40, 161))
        eta_r = rng.uniform(1.0, 1.3)
        meshes.append(
            make_noisy_sphere(radius, n_tris, eta_r, seed=int(rng.integers(2**31)))
        )
    return meshes


def _scatter(
    bounds: list[np.ndarray],
    rng: np.random.Generator,
    sample,
    clearance: float,
) -> list[np.ndarray]:
    """Rejection-sample non-overlapping centers for meshes of given reach.

    `bounds[i]` is the farthest vertex distance of mesh i; `sample()`
    draws one candidate center. Raises after too many rejections in a
    row, which means the spawn region is too small for the population.
    """
    centers: list[np.ndarray] = []
    for reach in bounds:
        for attempt in range(1000):
            candidate = sample()
            ok = all(
                np.linalg.norm(candidate - other) >= reach + other_reach + clearance
                for other, other_reach in zip(centers, bounds)
            )
            if ok:
                centers.append(candidate)
                break
        else:
            raise ValueError(
                f"could not place grain {len(centers)} after 1000 tries; "
                "spawn region too crowded"
            )
    return centers


# --- hopper ---------------------------------------------------------------

HOPPER_MESH = _DATA_DIR / "hopper.obj"


def build_hopper(
    n_particles: int, seed: int, *, epsilon: float = 1e-2, config: EngineConfig | None = None
) -> World:
    """Noisy-sphere grains dropped into the bundled funnel.

    Grains spawn on a disc above the rim with a shared straight-down
    velocity. The funnel mesh comes from `data/hopper.obj`; a missing
    or unreadable file surfaces as the usual OSError.
    """
    if n_particles < 1:
        raise ValueError(f"need at least one grain, got {n_particles}")
    funnel = load_mesh(HOPPER_MESH)
    rng = np.random.default_rng(seed)
    meshes = _grain_meshes(n_particles, rng)
    bounds = [float(np.linalg.norm(m.vertices, axis=1).max()) for m in meshes]

    def sample() -> np.ndarray:
        r = 11.0 * np.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * np.pi)
        return np.array(
            [r * np.cos(theta), r * np.sin(theta), rng.uniform(21.0, 36.0)]
        )

    centers = _scatter(bounds, rng, sample, clearance=2.0 * epsilon + 0.05)
    particles = [
        make_particle(pid, mesh, epsilon, initial_state(center, (0.0, 0.0, -1.0)))
        for pid, (mesh, center) in enumerate(zip(meshes, centers))
    ]
    statics = [make_static(-1, funnel, epsilon)]
    return World(particles, statics, config or _default_config())


# --- staircase ------------------------------------------------------------

_N_STEPS = 20
_STEP_RUN = 3.0
_STEP_DROP = 1.5


def build_staircase(
    n_particles: int, seed: int, *, epsilon: float = 1e-2, config: EngineConfig | None = None
) -> World:
    """A descending flight of 20 rectangular steps under falling grains.

    Each step is its own two-triangle static body, so a grain's contact
    graph only ever links it to the step it lands on. Grains spawn
    spread along the full flight, above the top step's height, and all
    share the same downward velocity.
    """
    if n_particles < 1:
        raise ValueError(f"need at least one grain, got {n_particles}")
    statics = []
    for k in range(_N_STEPS):
        z = -_STEP_DROP * k
        step = make_plane(
            (_STEP_RUN * k, -3.0, z), (_STEP_RUN * (k + 1), 3.0, z)
        )
        statics.append(make_static(-(k + 1), step, epsilon))
    rng = np.random.default_rng(seed)
    meshes = _grain_meshes(n_particles, rng)
    bounds = [float(np.linalg.norm(m.vertices, axis=1).max()) for m in meshes]

    def sample() -> np.ndarray:
        return np.array(
            [
                rng.uniform(0.5, _STEP_RUN * _N_STEPS - 0.5),
                rng.uniform(-2.0, 2.0),
                rng.uniform(2.5, 14.0),
            ]
        )

    centers = _scatter(bounds, rng, sample, clearance=2.0 * epsilon + 0.05)
    particles = [
        make_particle(pid, mesh, epsilon, initial_state(center, (0.0, 0.0, -1.0)))
        for pid, (mesh, center) in enumerate(zip(meshes, centers))
    ]
    return World(particles, statics, config or _default_config())


# --- frame dumps ----------------------------------------------------------


def dump_frame(world: World, path: str | Path) -> None:
    """Write every body's world-space mesh as one OBJ group per body.

    Groups are named `body_<id>` and ordered by id (statics first,
    since their ids are negative). Vertex indices continue across
    groups, per the format. Floats are written with repr, so a frame
    re-dumped from the same state is byte-identical.
    """
    lines: list[str] = []
    offset = 1
    for bid in sorted(world.statics):
        offset = _append_group(lines, bid, world.statics[bid].mesh, offset)
    for pid in sorted(world.particles):
        particle = world.particles[pid]
        state = particle.timeline.current
        rot = quaternions.to_matrix(state.rotation)
        moved = TriangleMesh(
            particle.mesh.vertices @ rot.T + state.position, particle.mesh.triangles
        )
        offset = _append_group(lines, pid, moved, offset)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _append_group(lines: list[str], bid: int, mesh: TriangleMesh, offset: int) -> int:
    lines.append(f"g body_{bid}")
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for tri in mesh.triangles:
        lines.append(f"f {tri[0] + offset} {tri[1] + offset} {tri[2] + offset}")
    return offset + len(mesh.vertices)

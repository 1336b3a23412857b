"""Desk-scale ground truth: parametric meshes, a simple granular oracle and the
reflection toy dataset.

The oracle is deliberately simple: gravity, linear-spring repulsion between
overlapping particles and reflective triangle walls.  Wall contacts reflect
the normal velocity component (scaled by the restitution coefficient) and the
position is then re-integrated with the reflected velocity, so stored
positions and velocities stay consistent with semi-implicit Euler.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dynamics import MeshSchedule, Trajectory
from .geometry import closest_points_batch, partial_order_value, ordered_normal_pair
from .graph import neighbor_pairs
from .mesh import TriMesh


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    kind: str = "box"
    # box: extents of [0, sx] x [0, sy] x [0, sz]
    size: tuple = (0.1, 0.1, 0.1)
    # hopper: side walls inclined at angle (deg) to the x-y plane, slot half-width at the bottom
    hopper_angle: float = 135.0
    hopper_hole_radius: float = 0.01
    hopper_height: float = 0.08
    hopper_depth: float = 0.04
    # drum: cylinder about the y axis
    drum_radius: float = 0.05
    drum_length: float = 0.04
    drum_facets: int = 32
    drum_omega: float = 0.0
    n_particles: int = 50
    radius: float = 0.005
    dt: float = 1e-3
    gravity: float = 9.81
    restitution: float = 0.5
    stiffness: float = 2e4  # spring constant per unit mass, 1/s^2
    initial_speed: float = 0.0
    insertion_box: tuple | None = None  # ((x0, y0, z0), (x1, y1, z1))
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("box", "hopper", "drum"):
            raise ValueError(f"unknown mesh kind {self.kind!r}")
        if self.n_particles < 1 or not self.radius > 0 or not self.dt > 0:
            raise ValueError("particle count, radius and dt must be positive")
        if self.kind == "box" and not all(s > 0 for s in self.size):
            raise ValueError("box extents must be positive")
        if self.kind == "hopper" and not 90.0 < self.hopper_angle < 180.0:
            raise ValueError("hopper angle must lie in (90, 180) degrees")
        if self.kind == "hopper" and not (self.hopper_hole_radius > 0 and self.hopper_height > 0 and self.hopper_depth > 0):
            raise ValueError("hopper dimensions must be positive")
        if self.kind == "drum" and (self.drum_facets < 3 or not self.drum_radius > 0 or not self.drum_length > 0):
            raise ValueError("drum needs >= 3 facets and positive dimensions")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


PRESETS = {
    "tiny": SceneSpec(kind="box", n_particles=12, seed=0),
    "box": SceneSpec(kind="box", n_particles=50),
    "hopper": SceneSpec(kind="hopper", n_particles=60, radius=0.004),
    "drum": SceneSpec(kind="drum", n_particles=80, radius=0.004, drum_omega=2.0),
}


def _orient_outward(vertices, faces, interior_point):
    v = vertices
    faces = np.array(faces, dtype=np.int64)
    a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    n = np.cross(b - a, c - a)
    centroid = (a + b + c) / 3.0
    flip = ((centroid - interior_point) * n).sum(axis=1) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


def box_mesh(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> TriMesh:
    sx, sy, sz = size
    o = np.asarray(origin, dtype=np.float64)
    v = o + np.array([[x, y, z] for z in (0.0, sz) for y in (0.0, sy) for x in (0.0, sx)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriMesh(v, _orient_outward(v, faces, o + 0.5 * np.asarray(size)))


def hopper_mesh(angle=135.0, hole_radius=0.01, height=0.08, depth=0.04) -> TriMesh:
    """Open-top wedge hopper.

    The two x walls rise from a closed bottom slot of half-width
    ``hole_radius`` and are inclined at ``angle`` and ``180 - angle`` degrees to
    the x-y plane, i.e. ``angle - 90`` degrees off vertical.  Two vertical
    planes bound the hopper in y.
    """
    h, H, D = hole_radius, height, depth
    w = H * math.tan(math.radians(angle - 90.0))
    v = np.array([
        [-h, -D / 2, 0.0], [h, -D / 2, 0.0], [h, D / 2, 0.0], [-h, D / 2, 0.0],
        [-h - w, -D / 2, H], [h + w, -D / 2, H], [h + w, D / 2, H], [-h - w, D / 2, H],
    ])
    faces = [
        (0, 1, 2), (0, 2, 3),  # closed outlet
        (0, 3, 7), (0, 7, 4),  # -x wall
        (1, 5, 6), (1, 6, 2),  # +x wall
        (0, 4, 5), (0, 5, 1),  # -y wall
        (3, 2, 6), (3, 6, 7),  # +y wall
    ]
    return TriMesh(v, _orient_outward(v, faces, np.array([0.0, 0.0, H / 2])))


def drum_mesh(radius=0.05, length=0.04, facets=32) -> TriMesh:
    """Closed cylinder about the y axis: ``2*facets`` side and ``2*facets`` cap triangles."""
    th = 2.0 * np.pi * np.arange(facets) / facets
    ring = np.stack([radius * np.cos(th), np.zeros(facets), radius * np.sin(th)], axis=1)
    lo = ring + [0.0, -length / 2, 0.0]
    hi = ring + [0.0, length / 2, 0.0]
    v = np.concatenate([lo, hi, [[0.0, -length / 2, 0.0], [0.0, length / 2, 0.0]]])
    c_lo, c_hi = 2 * facets, 2 * facets + 1
    faces = []
    for i in range(facets):
        j = (i + 1) % facets
        faces += [(i, j, facets + j), (i, facets + j, facets + i)]
    for i in range(facets):
        j = (i + 1) % facets
        faces += [(c_lo, j, i), (c_hi, facets + i, facets + j)]
    return TriMesh(v, _orient_outward(v, faces, np.zeros(3)))


def gen_mesh(spec: SceneSpec) -> TriMesh:
    if spec.kind == "box":
        return box_mesh(spec.size)
    if spec.kind == "hopper":
        return hopper_mesh(spec.hopper_angle, spec.hopper_hole_radius, spec.hopper_height, spec.hopper_depth)
    return drum_mesh(spec.drum_radius, spec.drum_length, spec.drum_facets)


def insertion_region(spec: SceneSpec):
    if spec.insertion_box is not None:
        lo, hi = spec.insertion_box
        return np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    r = spec.radius
    if spec.kind == "box":
        s = np.asarray(spec.size, dtype=np.float64)
        return np.array([r, r, 0.3 * s[2]]), s - np.array([r, r, r])
    if spec.kind == "hopper":
        H, D = spec.hopper_height, spec.hopper_depth
        half = spec.hopper_hole_radius + 0.5 * H * math.tan(math.radians(spec.hopper_angle - 90.0))
        return np.array([-half + 2 * r, -D / 2 + r, 0.5 * H]), np.array([half - 2 * r, D / 2 - r, 0.95 * H])
    R, L = spec.drum_radius, spec.drum_length
    a = 0.6 * R
    return np.array([-a, -L / 2 + r, -a]), np.array([a, L / 2 - r, a])


def place_particles(spec: SceneSpec, mesh: TriMesh, rng, max_tries: int = 200) -> np.ndarray:
    """Uniform rejection sampling of non-overlapping particles in the insertion box."""
    lo, hi = insertion_region(spec)
    r = spec.radius
    placed = []
    budget = max_tries * spec.n_particles
    tries = 0
    while len(placed) < spec.n_particles:
        if tries >= budget:
            raise PlacementError(f"placed only {len(placed)} of {spec.n_particles} particles after {tries} tries")
        tries += 1
        p = lo + (hi - lo) * rng.random(3)
        if placed:
            d = np.asarray(placed) - p
            if np.min((d * d).sum(axis=1)) < (2.0 * r) ** 2:
                continue
        _, _, _, dsq = closest_points_batch(p[None], mesh.bases, mesh.edge0s, mesh.edge1s)
        if np.min(dsq) <= r * r:
            continue
        if mesh.is_watertight() and not mesh.contains(p[None])[0]:
            continue
        placed.append(p)
    return np.asarray(placed)


def spring_accelerations(x, radius, stiffness):
    """Linear repulsion ``k * (2r - d)`` along the centre line of overlapping pairs."""
    a = np.zeros_like(x)
    if stiffness == 0.0 or len(x) < 2:
        return a
    pairs = neighbor_pairs(x, 2.0 * radius)
    if not len(pairs):
        return a
    i, j = pairs[:, 0], pairs[:, 1]
    d = x[i] - x[j]
    dist = np.sqrt((d * d).sum(axis=1))
    ok = dist > 0.0
    i, j, d, dist = i[ok], j[ok], d[ok], dist[ok]
    f = (stiffness * (2.0 * radius - dist) / dist)[:, None] * d
    np.add.at(a, i, f)
    np.subtract.at(a, j, f)
    return a


def wall_response(x_prev, v, mesh: TriMesh, radius, restitution, dt):
    """Resolve wall contacts after a free step; returns corrected ``(x, v)``.

    Triangles are processed in index order.  A particle closer than
    ``radius`` to a triangle and moving into it has its velocity reflected
    about the triangle's contact-side normal (scaled by ``restitution``) and
    its position re-integrated; if it still penetrates it is pushed out and
    its velocity set to the effective displacement over ``dt``.
    """
    x = x_prev + dt * v
    if not len(mesh):
        return x, v
    r2 = radius * radius
    _, _, off_all, dsq_all = closest_points_batch(x, mesh.bases, mesh.edge0s, mesh.edge1s)
    speed = np.sqrt((v * v).sum(axis=1)).max() if len(v) else 0.0
    reach = radius + 2.0 * dt * speed + radius
    candidates = np.flatnonzero((dsq_all <= reach * reach).any(axis=0))
    normals = mesh.normal_pairs[:, :3]
    # an unmoved particle keeps its initial distances; a moved one can only
    # reach triangles within radius + displacement of where it started
    x_start = x.copy()
    dist_all = np.sqrt(dsq_all)
    moved = np.zeros(len(x), dtype=bool)
    disp = np.zeros(len(x))
    for tri in candidates:
        near = moved & (dist_all[:, tri] <= (radius + disp) * (1.0 + 1e-9))
        sub = np.flatnonzero((dsq_all[:, tri] < r2) | near)
        if not len(sub):
            continue
        b, e0, e1 = mesh.bases[tri:tri + 1], mesh.edge0s[tri:tri + 1], mesh.edge1s[tri:tri + 1]
        off, dsq = off_all[sub, tri], dsq_all[sub, tri]
        redo = moved[sub]
        if redo.any():
            _, _, o, d = closest_points_batch(x[sub[redo]], b, e0, e1)
            off[redo], dsq[redo] = o[:, 0], d[:, 0]
        inside = np.flatnonzero(dsq < r2)
        if not len(inside):
            continue
        hit = sub[inside]
        off = off[inside]
        n = normals[tri]
        side = -(off @ n)
        prev_side = (x_prev[hit] - (x[hit] + off)) @ n
        side = np.where(side == 0.0, prev_side, side)
        n_out = np.where(side[:, None] < 0.0, -n, n)
        vn = (v[hit] * n_out).sum(axis=1)
        into = vn < 0.0
        idx = hit[into]
        if len(idx):
            v[idx] = v[idx] - ((1.0 + restitution) * vn[into])[:, None] * n_out[into]
            x[idx] = x_prev[idx] + dt * v[idx]
            moved[idx] = True
            disp[idx] = np.sqrt(((x[idx] - x_start[idx]) ** 2).sum(axis=1))
        # push out anything still penetrating this triangle
        if len(idx):
            _, _, off2, dsq2 = closest_points_batch(x[hit], b, e0, e1)
            off2, dsq2 = off2[:, 0], dsq2[:, 0]
        else:
            off2, dsq2 = off, dsq[inside]
        deep = dsq2 < r2
        if deep.any():
            k = hit[deep]
            dist = np.sqrt(dsq2[deep])
            away = np.where(dist[:, None] > 0.0, -off2[deep] / np.where(dist > 0.0, dist, 1.0)[:, None], n_out[deep])
            x[k] = x[k] + (radius - dist)[:, None] * away
            v[k] = (x[k] - x_prev[k]) / dt
            moved[k] = True
            disp[k] = np.sqrt(((x[k] - x_start[k]) ** 2).sum(axis=1))
    return x, v


def oracle_step(x, v, mesh, spec: SceneSpec):
    g = np.array([0.0, 0.0, -spec.gravity])
    a = g + spring_accelerations(x, spec.radius, spec.stiffness)
    v = v + spec.dt * a
    return wall_response(x, v, mesh, spec.radius, spec.restitution, spec.dt)


def oracle_simulate(spec: SceneSpec, steps: int, mesh: TriMesh | None = None,
                    positions0=None, velocities0=None) -> Trajectory:
    """Simulate ``steps`` steps; the trajectory holds ``steps + 1`` frames."""
    mesh = gen_mesh(spec) if mesh is None else mesh
    rng = np.random.default_rng(spec.seed)
    x = place_particles(spec, mesh, rng) if positions0 is None else np.array(positions0, dtype=np.float64)
    if velocities0 is not None:
        v = np.array(velocities0, dtype=np.float64)
    elif spec.initial_speed > 0:
        d = rng.normal(size=x.shape)
        v = spec.initial_speed * d / np.linalg.norm(d, axis=1, keepdims=True)
    else:
        v = np.zeros_like(x)
    schedule = MeshSchedule(omega=spec.drum_omega if spec.kind == "drum" else 0.0,
                            center=(0.0, 0.0, 0.0) if spec.kind == "drum" else None)
    frames = [x.copy()]
    for step in range(steps):
        mesh_t = schedule.mesh_at(mesh, step, spec.dt)
        x, v = oracle_step(x, v, mesh_t, spec)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"oracle produced non-finite positions at step {step}")
        frames.append(x.copy())
    return Trajectory(np.stack(frames), spec.dt, spec.radius, mesh, schedule,
                      {"generator": spec.to_dict()})


# ----------------------------------------------------------- reflection toy

REFLECTION_WALLS = {
    "left": (1.0, 0.0, 0.0),
    "right": (-1.0, 0.0, 0.0),
    "bottom": (0.0, 0.0, 1.0),
    "top": (0.0, 0.0, -1.0),
}
REFLECTION_VARIANTS = ("R1", "R2", "R3", "R4")


def encode_normal(n, variant: str) -> np.ndarray:
    """Wall representation used as network input.

    R1: ``n``; R2: ``(n, -n)``; R3: whichever of ``n, -n`` has the smaller
    partial order value; R4: the ordered pair.
    """
    n = np.asarray(n, dtype=np.float64)
    if variant == "R1":
        return n.copy()
    if variant == "R2":
        return np.concatenate([n, -n])
    if variant == "R3":
        # + 0.0 turns -0.0 into 0.0 so n and -n encode bitwise-equal
        return (n if partial_order_value(n) <= partial_order_value(-n) else -n) + 0.0
    if variant == "R4":
        return ordered_normal_pair(n).as_features()
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class ReflectionSamples:
    normals: np.ndarray  # wall normals as presented (inward, or flipped when inverted)
    rays: np.ndarray
    targets: np.ndarray
    features: np.ndarray  # encoded normal followed by the incident ray
    variant: str
    orientation: str


def gen_reflection_dataset(n_samples: int, variant: str, orientation: str = "same", seed: int = 0) -> ReflectionSamples:
    """Incident unit rays hitting one of four cube walls and their reflections."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if orientation not in ("same", "inverted"):
        raise ValueError("orientation must be 'same' or 'inverted'")
    rng = np.random.default_rng(seed)
    walls = np.array(list(REFLECTION_WALLS.values()))
    inward = walls[rng.integers(0, len(walls), n_samples)]
    v = rng.normal(size=(n_samples, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    dots = (v * inward).sum(axis=1)
    v[dots > 0] *= -1.0  # rays travel towards the wall
    targets = v - 2.0 * (v * inward).sum(axis=1, keepdims=True) * inward
    shown = inward if orientation == "same" else -inward
    enc = np.stack([encode_normal(n, variant) for n in shown])
    return ReflectionSamples(shown, v, targets, np.concatenate([enc, v], axis=1), variant, orientation)


def with_seed(spec: SceneSpec, seed: int) -> SceneSpec:
    return replace(spec, seed=seed)

"""Semi-implicit Euler integration, trajectory files and closed-loop rollout."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import FrameWindow, GraphConfig, build_graph
from .mesh import TriMesh, read_obj, write_obj


class RolloutError(RuntimeError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class IntegratorState:
    positions: np.ndarray
    velocities: np.ndarray
    dt: float


def semi_implicit_euler(state: IntegratorState, accel) -> IntegratorState:
    """``v' = v + dt*a`` then ``x' = x + dt*v'``."""
    a = np.asarray(accel, dtype=np.float64)
    if a.shape != state.velocities.shape:
        raise ValueError(f"acceleration shape {a.shape} != velocity shape {state.velocities.shape}")
    v = state.velocities + state.dt * a
    return IntegratorState(state.positions + state.dt * v, v, state.dt)


def finite_difference_velocities(positions, dt):
    """``v_t = (x_t - x_{t-1}) / dt`` for t >= 1, shape (T-1, n, 3)."""
    x = np.asarray(positions, dtype=np.float64)
    return (x[1:] - x[:-1]) / dt


def target_accelerations(positions, dt):
    """Discrete accelerations ``a_t = (v_{t+1} - v_t) / dt`` for t = 1..T-2.

    Row ``k`` of the result belongs to frame ``t = k + 1``.  Integrating these
    with :func:`semi_implicit_euler` reproduces the positions.
    """
    v = finite_difference_velocities(positions, dt)
    return (v[1:] - v[:-1]) / dt


@dataclass(frozen=True)
class MeshSchedule:
    """Rigid rotation of a mesh about ``axis`` through ``center`` at ``omega`` rad/s."""

    omega: float = 0.0
    axis: tuple = (0.0, 1.0, 0.0)
    center: tuple | None = None

    def mesh_at(self, mesh: TriMesh, step: int, dt: float) -> TriMesh:
        if self.omega == 0.0:
            return mesh
        angle = self.omega * step * dt
        k = np.asarray(self.axis, dtype=np.float64)
        k = k / np.linalg.norm(k)
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)
        center = self.center
        if center is None:
            lo, hi = mesh.bounds()
            center = 0.5 * (lo + hi)
        return mesh.transformed(rotation=R, center=center)

    def to_dict(self):
        return {"omega": self.omega, "axis": list(self.axis), "center": None if self.center is None else list(self.center)}

    @classmethod
    def from_dict(cls, d):
        if not d:
            return cls()
        return cls(float(d.get("omega", 0.0)), tuple(d.get("axis", (0.0, 1.0, 0.0))),
                   None if d.get("center") is None else tuple(d["center"]))


@dataclass
class Trajectory:
    positions: np.ndarray  # (T, n, 3)
    dt: float
    particle_radius: float
    mesh: TriMesh | None = None
    schedule: MeshSchedule = field(default_factory=MeshSchedule)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ValueError("trajectory positions must have shape (T, n, 3)")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    def mesh_at(self, step: int) -> TriMesh:
        return self.schedule.mesh_at(self.mesh, step, self.dt)

    def window(self, t: int, history: int) -> FrameWindow:
        """Frames ``t - history .. t`` as a window."""
        if t < history or t >= self.n_frames:
            raise IndexError(f"frame {t} has no full history of {history}")
        return FrameWindow(self.positions[t - history:t + 1], self.dt, self.particle_radius)

    def stride(self, k: int) -> "Trajectory":
        """Every ``k``-th frame, with ``dt`` scaled accordingly."""
        meta = dict(self.metadata, stride=k * self.metadata.get("stride", 1))
        sched = self.schedule
        return Trajectory(self.positions[::k], self.dt * k, self.particle_radius, self.mesh, sched, meta)


def save_trajectory(traj: Trajectory, directory, history: int | None = None) -> Path:
    """Write ``metadata.json``, ``frames.csv`` and ``mesh.obj`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "dt": traj.dt,
        "particle_radius": traj.particle_radius,
        "n_frames": traj.n_frames,
        "n_particles": traj.n_particles,
        "mesh_file": "mesh.obj" if traj.mesh is not None else None,
        "mesh_schedule": traj.schedule.to_dict(),
        "generator": traj.metadata.get("generator", {}),
        "history": history if history is not None else traj.metadata.get("history"),
    }
    extra = {k: v for k, v in traj.metadata.items() if k not in meta}
    meta.update(extra)
    (d / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    T, n, _ = traj.positions.shape
    frame = np.repeat(np.arange(T), n)
    particle = np.tile(np.arange(n), T)
    with open(d / "frames.csv", "w") as fh:
        fh.write("frame,particle,x,y,z\n")
        rows = traj.positions.reshape(-1, 3).tolist()
        fh.writelines(f"{f},{p},{x!r},{y!r},{z!r}\n" for f, p, (x, y, z) in zip(frame.tolist(), particle.tolist(), rows))
    if traj.mesh is not None:
        write_obj(traj.mesh, d / "mesh.obj")
    return d


def load_trajectory(directory) -> Trajectory:
    d = Path(directory)
    meta = json.loads((d / "metadata.json").read_text())
    data = np.loadtxt(d / "frames.csv", delimiter=",", skiprows=1, ndmin=2)
    frames = data[:, 0].astype(np.int64)
    particles = data[:, 1].astype(np.int64)
    T = int(frames.max()) + 1 if len(frames) else 0
    n = int(particles.max()) + 1 if len(particles) else 0
    pos = np.full((T, n, 3), np.nan)
    pos[frames, particles] = data[:, 2:5]
    if np.isnan(pos).any():
        raise ValueError(f"{d / 'frames.csv'} does not cover every (frame, particle)")
    mesh = read_obj(d / meta["mesh_file"]) if meta.get("mesh_file") else None
    known = {"dt", "particle_radius", "mesh_file", "mesh_schedule", "n_frames", "n_particles"}
    extra = {k: v for k, v in meta.items() if k not in known}
    return Trajectory(pos, float(meta["dt"]), float(meta.get("particle_radius", 0.0)), mesh,
                      MeshSchedule.from_dict(meta.get("mesh_schedule")), extra)


@dataclass(frozen=True)
class RolloutConfig:
    steps: int = 100
    schedule: MeshSchedule = field(default_factory=MeshSchedule)

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"rollout steps must be an integer >= 1, got {self.steps}")


def rollout(model, window0: FrameWindow, mesh: TriMesh, cfg: RolloutConfig, graph_cfg: GraphConfig,
            start_step: int = 0, progress=None) -> Trajectory:
    """Closed-loop prediction for ``cfg.steps`` steps.

    ``model(graph, step)`` returns physical accelerations of the real
    particles, shape (n, 3).  Each step transforms the mesh per the schedule,
    rebuilds the graph, integrates and shifts the window.  The returned
    trajectory starts with the window's current frame (``steps + 1`` frames).
    ``start_step`` is the schedule time of the window's current frame.
    """
    steps = cfg.steps
    schedule = cfg.schedule
    window = window0
    dt = window.dt
    frames = [window.current.copy()]
    for k in range(steps):
        step = start_step + k
        mesh_t = schedule.mesh_at(mesh, step, dt)
        graph = build_graph(window, mesh_t, graph_cfg)
        accel = np.asarray(model(graph, step), dtype=np.float64)
        if accel.shape != window.current.shape or not np.all(np.isfinite(accel)):
            raise RolloutError(step, "model returned non-finite or misshaped accelerations")
        state = IntegratorState(window.current, (window.positions[-1] - window.positions[-2]) / dt, dt)
        state = semi_implicit_euler(state, accel)
        window = window.shifted(state.positions)
        frames.append(state.positions)
        if progress is not None:
            progress(k + 1)
    return Trajectory(np.stack(frames), dt, window0.particle_radius, mesh, schedule,
                      {"history": window0.history, "start_step": start_step})

import json

import numpy as np
import pytest

from bgnn.datagen import PRESETS, box_mesh, oracle_simulate
from bgnn.dynamics import (
    IntegratorState, MeshSchedule, RolloutConfig, RolloutError, Trajectory, load_trajectory, rollout,
    save_trajectory, semi_implicit_euler, target_accelerations,
)
from bgnn.graph import FrameWindow, GraphConfig
from bgnn.net import NetConfig, init_params
from bgnn.train import LearnedSimulator, NormStats

HISTORY = 3
GRAPH = GraphConfig(r_cutoff=0.015, history=HISTORY)


@pytest.fixture(scope="module")
def box_traj():
    return oracle_simulate(PRESETS["box"], 130)


def test_euler_free_drift():
    s = IntegratorState(np.array([[1.0, 2, 3]]), np.array([[0.5, 0, -1]]), 0.25)
    out = semi_implicit_euler(s, np.zeros((1, 3)))
    np.testing.assert_array_equal(out.velocities, s.velocities)
    np.testing.assert_array_equal(out.positions, s.positions + 0.25 * s.velocities)


def test_euler_one_step_closed_form():
    s = IntegratorState(np.array([[0.0, 0, 1]]), np.zeros((1, 3)), 1.0)
    out = semi_implicit_euler(s, [[0, 0, -9.81]])
    np.testing.assert_array_equal(out.velocities, [[0, 0, -9.81]])
    np.testing.assert_array_equal(out.positions, [[0, 0, 1 - 9.81]])


def test_euler_shape_mismatch():
    s = IntegratorState(np.zeros((2, 3)), np.zeros((2, 3)), 0.1)
    with pytest.raises(ValueError):
        semi_implicit_euler(s, np.zeros((3, 3)))


def test_integrator_round_trip(box_traj):
    x = box_traj.positions
    dt = box_traj.dt
    acc = target_accelerations(x, dt)
    state = IntegratorState(x[1], (x[1] - x[0]) / dt, dt)
    worst = 0.0
    for t in range(1, 121):
        state = semi_implicit_euler(state, acc[t - 1])
        worst = max(worst, float(np.abs(state.positions - x[t + 1]).max()))
    assert worst <= 1e-10


def _replay_model(acc):
    def model(graph, step):
        return acc[step - 1]
    return model


def test_rollout_replays_oracle(box_traj):
    acc = target_accelerations(box_traj.positions, box_traj.dt)
    out = rollout(_replay_model(acc), box_traj.window(HISTORY, HISTORY), box_traj.mesh,
                  RolloutConfig(steps=100), GRAPH, start_step=HISTORY)
    assert out.n_frames == 101
    np.testing.assert_allclose(out.positions, box_traj.positions[HISTORY:HISTORY + 101], rtol=0, atol=1e-10)


def test_rollout_zero_model_is_inertial():
    x0 = np.array([[0.05, 0.05, 0.05], [0.02, 0.07, 0.04]])
    v = np.array([[0.01, 0.0, -0.02], [0.0, 0.03, 0.0]])
    dt = 1e-3
    window = FrameWindow(np.stack([x0 - dt * v, x0]), dt, 0.005)
    out = rollout(lambda g, s: np.zeros((2, 3)), window, box_mesh((0.1, 0.1, 0.1)), RolloutConfig(steps=5), GraphConfig(history=1))
    for k in range(6):
        np.testing.assert_allclose(out.positions[k], x0 + k * dt * v, rtol=0, atol=1e-15)


def test_rollout_single_step_calls_model_once():
    calls = []

    def model(graph, step):
        calls.append(step)
        return np.zeros((1, 3))

    window = FrameWindow(np.full((2, 1, 3), 0.05), 1e-3)
    out = rollout(model, window, box_mesh((0.1, 0.1, 0.1)), RolloutConfig(steps=1), GraphConfig(history=1))
    assert calls == [0] and out.n_frames == 2


def test_rollout_steps_validated():
    with pytest.raises(ValueError):
        RolloutConfig(steps=0)


def test_rollout_nan_aborts_with_step():
    def model(graph, step):
        return np.full((1, 3), np.nan if step == 3 else 0.0)

    window = FrameWindow(np.full((2, 1, 3), 0.05), 1e-3)
    with pytest.raises(RolloutError) as err:
        rollout(model, window, box_mesh((0.1, 0.1, 0.1)), RolloutConfig(steps=10), GraphConfig(history=1))
    assert err.value.step == 3


def _random_simulator(window, mesh, seed=0):
    from bgnn.graph import build_graph
    g = build_graph(window, mesh, GRAPH)
    params = init_params(NetConfig(layers=2, node_width=16, edge_width=16, seed=seed), g.node_features.shape[1], g.edge_features.shape[1])
    nw, ew = g.node_features.shape[1], g.edge_features.shape[1]
    stats = NormStats(np.zeros(nw), np.full(nw, 0.1), np.zeros(ew), np.full(ew, 0.01),
                      np.zeros(3), np.full(3, 0.5), 3 * HISTORY)
    return LearnedSimulator(params, stats, exact=True)


def test_static_schedule_equals_static_mesh(box_traj):
    window = box_traj.window(HISTORY, HISTORY)
    model = _random_simulator(window, box_traj.mesh)
    a = rollout(model, window, box_traj.mesh, RolloutConfig(steps=15), GRAPH)
    b = rollout(model, window, box_traj.mesh,
                RolloutConfig(steps=15, schedule=MeshSchedule(omega=0.0, center=(0.05, 0.05, 0.05))), GRAPH)
    assert a.positions.tobytes() == b.positions.tobytes()


def test_translated_rollout(box_traj):
    shift = np.array([0.3, -0.2, 0.55])
    window = box_traj.window(HISTORY, HISTORY)
    model = _random_simulator(window, box_traj.mesh, seed=2)
    a = rollout(model, window, box_traj.mesh, RolloutConfig(steps=30), GRAPH)
    moved = FrameWindow(window.positions + shift, window.dt, window.particle_radius)
    b = rollout(model, moved, box_traj.mesh.transformed(translation=shift), RolloutConfig(steps=30), GRAPH)
    assert np.abs(a.positions + shift - b.positions).max() <= 1e-6


def test_rotating_schedule_moves_mesh():
    mesh = box_mesh((1.0, 1.0, 1.0))
    sched = MeshSchedule(omega=np.pi / 2, center=(0.5, 0.5, 0.5))
    rotated = sched.mesh_at(mesh, 1, 1.0)
    # a quarter turn about y maps the cube onto itself
    np.testing.assert_allclose(np.sort(rotated.vertices, axis=0), np.sort(mesh.vertices, axis=0), atol=1e-14)
    assert not np.allclose(rotated.vertices, mesh.vertices)


def test_save_load_round_trip(tmp_path, box_traj):
    traj = box_traj.stride(10)
    save_trajectory(traj, tmp_path / "t", history=HISTORY)
    meta = json.loads((tmp_path / "t" / "metadata.json").read_text())
    meta["some_future_key"] = {"nested": [1, 2]}
    (tmp_path / "t" / "metadata.json").write_text(json.dumps(meta))
    back = load_trajectory(tmp_path / "t")
    assert back.positions.tobytes() == traj.positions.tobytes()
    assert back.dt == traj.dt and back.particle_radius == traj.particle_radius
    assert back.mesh.vertices.tobytes() == traj.mesh.vertices.tobytes()
    assert back.metadata["history"] == HISTORY


def test_load_rejects_incomplete_frames(tmp_path):
    traj = Trajectory(np.zeros((2, 2, 3)), 0.1, 0.01)
    save_trajectory(traj, tmp_path / "t")
    lines = (tmp_path / "t" / "frames.csv").read_text().splitlines()
    (tmp_path / "t" / "frames.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError):
        load_trajectory(tmp_path / "t")

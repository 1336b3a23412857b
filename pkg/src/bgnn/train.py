"""Normalization statistics, Adam and the one-step training loop."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import Trajectory, target_accelerations
from .graph import BoundaryGraph, FrameWindow, GraphConfig, build_graph, sample_boundary, BoundaryMode
from .net import ModelParams, NetConfig, backward, forward, init_params

STD_FLOOR = 1e-8


class TrainingDivergedError(RuntimeError):
    pass


# ------------------------------------------------------------ exact sums

def _expansion(values: list) -> list:
    """Non-overlapping float terms whose exact sum equals ``sum(values)``."""
    terms = []
    while True:
        r = math.fsum(values + [-t for t in terms])
        if r == 0.0:
            return terms
        terms.append(r)


class CompensatedSum:
    """Column-wise running sum with no rounding error.

    The running total of each column is kept as a short expansion of
    non-overlapping doubles (a compensated sum carried to exactness), so the
    final value is the correctly rounded sum no matter how the input was split
    into chunks.
    """

    def __init__(self, width: int):
        self.terms = [[] for _ in range(width)]
        self.count = 0

    def add(self, block) -> None:
        block = np.asarray(block, dtype=np.float64).reshape(-1, len(self.terms))
        if not np.all(np.isfinite(block)):
            raise ValueError("non-finite values in statistics input")
        for c in range(len(self.terms)):
            self.terms[c] = _expansion(block[:, c].tolist() + self.terms[c])
        self.count += len(block)

    def total(self) -> np.ndarray:
        return np.array([math.fsum(t) for t in self.terms])


def _mean_std(blocks, width):
    acc = CompensatedSum(width)
    for b in blocks:
        acc.add(b)
    if acc.count == 0:
        return np.zeros(width), np.ones(width), 0
    mean = acc.total() / acc.count
    sq = CompensatedSum(width)
    for b in blocks:
        d = np.asarray(b, dtype=np.float64).reshape(-1, width) - mean
        sq.add(d * d)
    std = np.maximum(np.sqrt(sq.total() / acc.count), STD_FLOOR)
    return mean, std, acc.count


@dataclass
class NormStats:
    """Per-dimension mean/std of node features, edge features and targets.

    Only the velocity-history columns of real nodes are standardized; the
    type indicator and normal columns are already O(1) and pass through
    unchanged, as do the zero velocity slots of virtual nodes.
    """

    node_mean: np.ndarray
    node_std: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    velocity_columns: int

    def normalize_nodes(self, feats, is_virtual) -> np.ndarray:
        out = np.array(feats, dtype=np.float64, copy=True)
        k = self.velocity_columns
        real = ~np.asarray(is_virtual)
        out[real, :k] = (out[real, :k] - self.node_mean[:k]) / self.node_std[:k]
        return out

    def normalize_edges(self, feats) -> np.ndarray:
        return (np.asarray(feats, dtype=np.float64) - self.edge_mean) / self.edge_std

    def normalize_targets(self, a) -> np.ndarray:
        return (np.asarray(a, dtype=np.float64) - self.target_mean) / self.target_std

    def denormalize_targets(self, a) -> np.ndarray:
        return np.asarray(a, dtype=np.float64) * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d) -> "NormStats":
        kw = {k: (np.asarray(v, dtype=np.float64) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


# --------------------------------------------------------------- samples

@dataclass(eq=False)
class FrameSample:
    """One training frame: its graph and the raw acceleration targets."""

    trajectory: int
    time: int
    graph: BoundaryGraph
    target: np.ndarray  # (n, 3)


def frame_indices(traj: Trajectory, history: int) -> range:
    """Frames with a full history and one future frame."""
    return range(history, traj.n_frames - 1)


def make_samples(dataset, graph_cfg: GraphConfig, noise_std: float = 0.0, rng=None, frames=None) -> list[FrameSample]:
    """Graphs and targets for every usable frame (or the given ``(traj, t)`` list)."""
    out = []
    samples_cache = {}
    if frames is None:
        frames = [(k, t) for k, tr in enumerate(dataset) for t in frame_indices(tr, graph_cfg.history)]
    accel_cache = {}
    for k, t in frames:
        tr = dataset[k]
        if tr.n_frames < graph_cfg.history + 2:
            raise ValueError(f"trajectory {k} has {tr.n_frames} frames, need >= {graph_cfg.history + 2}")
        window = tr.window(t, graph_cfg.history)
        if noise_std > 0.0:
            window, target = noisy_window(window, tr.positions[t + 1], noise_std, rng)
        else:
            if k not in accel_cache:
                accel_cache[k] = target_accelerations(tr.positions, tr.dt)
            target = accel_cache[k][t - 1]
        mesh = tr.mesh_at(t)
        samples = None
        if graph_cfg.boundary_mode is BoundaryMode.SAMPLED:
            key = (k, t) if tr.schedule.omega else k
            if key not in samples_cache:
                samples_cache[key] = sample_boundary(mesh, graph_cfg.sample_spacing)
            samples = samples_cache[key]
        out.append(FrameSample(k, t, build_graph(window, mesh, graph_cfg, samples), target))
    return out


def noisy_window(window: FrameWindow, next_positions, noise_std: float, rng):
    """Random-walk position noise on the window; the target is re-derived so
    integrating it from the noisy state lands on the true next frame."""
    C = window.history
    steps = rng.normal(0.0, noise_std / math.sqrt(C), size=(C,) + window.current.shape)
    walk = np.concatenate([np.zeros((1,) + window.current.shape), np.cumsum(steps, axis=0)])
    pos = window.positions + walk
    dt = window.dt
    v_last = (pos[-1] - pos[-2]) / dt
    v_next = (np.asarray(next_positions) - pos[-1]) / dt
    return FrameWindow(pos, dt, window.particle_radius), (v_next - v_last) / dt


def compute_norm_stats(samples, graph_cfg: GraphConfig) -> NormStats:
    """Statistics over a list of :class:`FrameSample` (or trajectories)."""
    if not samples:
        raise ValueError("cannot compute statistics of an empty dataset")
    if isinstance(samples[0], Trajectory):
        samples = make_samples(samples, graph_cfg)
    k = 3 * graph_cfg.history
    width = graph_cfg.node_width
    vel = [s.graph.node_features[~s.graph.is_virtual, :k] for s in samples]
    edges = [s.graph.edge_features for s in samples]
    targets = [s.target for s in samples]
    vm, vs, _ = _mean_std(vel, k)
    em, es, ne = _mean_std(edges, graph_cfg.edge_width)
    tm, ts, _ = _mean_std(targets, 3)
    node_mean = np.zeros(width)
    node_std = np.ones(width)
    node_mean[:k], node_std[:k] = vm, vs
    return NormStats(node_mean, node_std, em, es, tm, ts, k)


# ------------------------------------------------------------------ Adam

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_frames: int = 8
    epochs: int = 20
    max_steps: int | None = None
    noise_std: float = 0.0
    seed: int = 0
    validation_fraction: float = 0.1
    exact_forward: bool = False

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_frames < 1 or self.epochs < 1:
            raise ValueError("batch_frames and epochs must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: ModelParams, grads: dict, state: AdamState, lr: float = 1e-3,
              betas=(0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """In-place bias-corrected Adam update of ``params.arrays``."""
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.arrays.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    params.version += 1
    return state


# -------------------------------------------------------------- training

@dataclass(eq=False)
class Prepared:
    """Normalized arrays of one frame, ready for batching."""

    graph: BoundaryGraph
    node_features: np.ndarray
    edge_features: np.ndarray
    target: np.ndarray


def prepare(samples, stats: NormStats) -> list[Prepared]:
    return [Prepared(s.graph, stats.normalize_nodes(s.graph.node_features, s.graph.is_virtual),
                     stats.normalize_edges(s.graph.edge_features), stats.normalize_targets(s.target))
            for s in samples]


def _batch(items: list[Prepared]):
    graph = BoundaryGraph.concatenate([it.graph for it in items])
    xn = np.concatenate([it.node_features for it in items])
    xe = np.concatenate([it.edge_features for it in items])
    target = np.concatenate([it.target for it in items])
    # per-node weight so the loss is a mean over nodes per frame, then over frames
    weight = np.concatenate([np.full(len(it.target), 1.0 / (3 * len(it.target) * len(items))) for it in items])
    return graph, xn, xe, target, weight


def loss_and_grads(params, items, exact=False, need_grad=True):
    graph, xn, xe, target, weight = _batch(items)
    pred, cache = forward(graph, params, xn, xe, exact=exact)
    err = pred - target
    loss = float((weight[:, None] * err * err).sum())
    if not need_grad:
        return loss, None
    grads, _, _ = backward(cache, 2.0 * weight[:, None] * err)
    return loss, grads


def evaluate(params, items, batch_frames=16, exact=False) -> float:
    """Mean over frames of the per-frame normalized MSE."""
    if not items:
        return float("nan")
    total = 0.0
    for i in range(0, len(items), batch_frames):
        chunk = items[i:i + batch_frames]
        loss, _ = loss_and_grads(params, chunk, exact, need_grad=False)
        total += loss * len(chunk)
    return total / len(items)


@dataclass
class TrainResult:
    params: ModelParams
    stats: NormStats
    log: list  # dicts with step, train_loss, val_loss, wall_seconds
    best_val: float


def split_dataset(dataset, fraction: float, seed: int):
    """Trajectory-level train/validation split."""
    n = len(dataset)
    n_val = int(round(fraction * n)) if n > 1 else 0
    if fraction > 0 and n > 1:
        n_val = max(1, n_val)
    order = np.random.default_rng(seed).permutation(n)
    val = sorted(order[:n_val].tolist())
    trn = sorted(order[n_val:].tolist())
    return [dataset[i] for i in trn], [dataset[i] for i in val]


def train(dataset, net_cfg: NetConfig, graph_cfg: GraphConfig, train_cfg: TrainConfig,
          val_dataset=None, on_epoch=None, clock=time.perf_counter) -> TrainResult:
    """Minimize the one-step MSE of normalized accelerations over real nodes.

    The parameters with the best validation loss are returned.  ``on_epoch``
    receives each log row as it is produced.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if val_dataset is None:
        dataset, val_dataset = split_dataset(dataset, train_cfg.validation_fraction, train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    start = clock()

    base_samples = make_samples(dataset, graph_cfg)
    stats = compute_norm_stats(base_samples, graph_cfg)
    train_items = prepare(base_samples, stats) if train_cfg.noise_std == 0.0 else None
    val_items = prepare(make_samples(val_dataset, graph_cfg), stats) if val_dataset else []
    frames = [(s.trajectory, s.time) for s in base_samples]

    params = init_params(net_cfg, graph_cfg.node_width, graph_cfg.edge_width)
    state = AdamState()
    best = params.copy()
    best_val = math.inf
    log = []
    step = 0
    last_loss = None
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(frames))
        if train_cfg.noise_std > 0.0:
            noisy = make_samples(dataset, graph_cfg, train_cfg.noise_std, rng, frames)
            items = prepare(noisy, stats)
        else:
            items = train_items
        running = 0.0
        seen = 0
        for i in range(0, len(order), train_cfg.batch_frames):
            chunk = [items[j] for j in order[i:i + train_cfg.batch_frames]]
            loss, grads = loss_and_grads(params, chunk, train_cfg.exact_forward)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at step {step} (epoch {epoch}); last finite loss {last_loss}")
            last_loss = loss
            adam_step(params, grads, state, train_cfg.learning_rate, train_cfg.betas, train_cfg.adam_eps)
            running += loss * len(chunk)
            seen += len(chunk)
            step += 1
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                break
        train_loss = running / max(seen, 1)
        val_loss = evaluate(params, val_items) if val_items else train_loss
        if val_loss < best_val or not math.isfinite(best_val):
            best_val = val_loss
            best = params.copy()
        row = {"step": step, "train_loss": train_loss, "val_loss": val_loss, "wall_seconds": clock() - start}
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
            break
    return TrainResult(best, stats, log, best_val)


def write_metrics_csv(log, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "train_loss", "val_loss", "wall_seconds"])
        for row in log:
            w.writerow([row["step"], repr(row["train_loss"]), repr(row["val_loss"]), repr(row["wall_seconds"])])


class LearnedSimulator:
    """Callable for :func:`bgnn.dynamics.rollout`: graph in, physical accelerations out."""

    def __init__(self, params: ModelParams, stats: NormStats, exact: bool = True):
        self.params = params
        self.stats = stats
        self.exact = exact

    def __call__(self, graph, step=None):
        xn = self.stats.normalize_nodes(graph.node_features, graph.is_virtual)
        xe = self.stats.normalize_edges(graph.edge_features)
        pred, _ = forward(graph, self.params, xn, xe, exact=self.exact)
        return self.stats.denormalize_targets(pred)

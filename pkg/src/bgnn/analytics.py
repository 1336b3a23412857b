"""Evaluation metrics: mixing entropy, flow profiles, EMD, containment and edge growth."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .graph import FrameWindow, GraphConfig, build_graph, edge_growth

EMD_CAP = 512


@dataclass(frozen=True)
class EntropyGrid:
    """Axis-aligned grid with fixed per-particle class labels (+1 / -1)."""

    lo: np.ndarray
    hi: np.ndarray
    cells: tuple
    labels: np.ndarray

    def __post_init__(self):
        if len(self.cells) != 3 or min(self.cells) < 1:
            raise ValueError("cells must be three positive integers")
        if np.any(np.asarray(self.hi) <= np.asarray(self.lo)):
            raise ValueError("grid box must have positive extent")

    @classmethod
    def from_initial_frame(cls, frame, lo, hi, cells=(10, 10, 10), axis: int = 2) -> "EntropyGrid":
        """Label particles above the median coordinate +1, the rest -1."""
        x = np.asarray(frame, dtype=np.float64)
        med = np.median(x[:, axis])
        labels = np.where(x[:, axis] > med, 1, -1)
        return cls(np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64), tuple(int(c) for c in cells), labels)

    def cell_index(self, frame) -> np.ndarray:
        """Flat cell id per particle; points outside the box go to the nearest boundary cell."""
        x = np.asarray(frame, dtype=np.float64)
        cells = np.asarray(self.cells)
        ijk = np.floor((x - self.lo) / (self.hi - self.lo) * cells).astype(np.int64)
        ijk = np.clip(ijk, 0, cells - 1)
        return np.ravel_multi_index(ijk.T, self.cells)


def mixing_entropy(frame, grid: EntropyGrid) -> float:
    """Particle-weighted mean over cells of the binary class entropy (nats)."""
    cell = grid.cell_index(frame)
    if len(cell) != len(grid.labels):
        raise ValueError("frame and labels have different particle counts")
    n_cells = int(np.prod(grid.cells))
    pos = np.bincount(cell[grid.labels > 0], minlength=n_cells).astype(np.float64)
    tot = np.bincount(cell, minlength=n_cells).astype(np.float64)
    occ = tot > 0
    f = pos[occ] / tot[occ]
    h = np.zeros_like(f)
    mixed = (f > 0) & (f < 1)
    fm = f[mixed]
    h[mixed] = -(fm * np.log(fm) + (1 - fm) * np.log(1 - fm))
    return float(np.dot(tot[occ], h) / tot[occ].sum())


def entropy_series(positions, grid: EntropyGrid) -> np.ndarray:
    return np.array([mixing_entropy(f, grid) for f in positions])


@dataclass(frozen=True)
class FlowProfile:
    mean_position: np.ndarray  # (T, 3)
    mean_velocity: np.ndarray  # (T, 3)


def flow_profile(positions, dt: float) -> FlowProfile:
    """Particle-averaged positions and their time derivative.

    Interior frames use central differences of the stored means and the two
    end frames one-sided differences, so every frame gets a value.
    """
    x = np.asarray(positions, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError("positions must be a non-empty (T, n, 3) array")
    # correctly rounded sums, independent of particle order
    mean = np.array([[math.fsum(col) for col in frame.T] for frame in x]) / x.shape[1]
    if len(mean) < 2:
        return FlowProfile(mean, np.zeros_like(mean))
    return FlowProfile(mean, np.gradient(mean, dt, axis=0))


def emd(a, b, cap: int = EMD_CAP, seed: int = 0) -> float:
    """Mean Euclidean cost of the optimal perfect matching between two
    equal-size point sets.

    Sets larger than ``cap`` are both subsampled to ``cap`` points with a
    seeded generator; pass ``cap=None`` to forbid subsampling (then an
    oversize input is an error).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) != len(b):
        raise ValueError(f"point sets differ in size: {len(a)} vs {len(b)}")
    if len(a) == 0:
        return 0.0
    if cap is not None and len(a) > cap:
        rng = np.random.default_rng(seed)
        a = a[np.sort(rng.choice(len(a), cap, replace=False))]
        b = b[np.sort(rng.choice(len(b), cap, replace=False))]
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def emd_checked(a, b, cap: int = EMD_CAP) -> float:
    """Like :func:`emd` but rejects inputs above ``cap`` instead of subsampling."""
    if len(a) > cap:
        raise ValueError(f"{len(a)} points exceed the EMD cap of {cap}")
    return emd(a, b, cap=None)


def geometric_schedule(n_frames: int) -> list[int]:
    """Frames 1, 2, 4, ... below ``n_frames``."""
    out = []
    k = 1
    while k < n_frames:
        out.append(k)
        k *= 2
    return out


def emd_series(pred, truth, frames=None, cap: int = EMD_CAP, seed: int = 0):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    T = min(len(pred), len(truth))
    frames = geometric_schedule(T) if frames is None else frames
    return [(t, emd(pred[t], truth[t], cap, seed)) for t in frames]


def containment_fraction(frame, mesh) -> float:
    """Fraction of particle centers strictly inside a watertight mesh."""
    pts = np.asarray(frame, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return 1.0
    return float(mesh.contains(pts).mean())


def containment_series(trajectory) -> np.ndarray:
    return np.array([containment_fraction(f, trajectory.mesh_at(t)) for t, f in enumerate(trajectory.positions)])


def edge_growth_series(trajectory, graph_cfg: GraphConfig, frames=None) -> list[dict]:
    """Edge counts per frame (``t`` added to each row); frames default to all."""
    frames = range(trajectory.n_frames) if frames is None else frames
    out = []
    for t in frames:
        # counts depend only on current positions, so a stationary window suffices
        window = FrameWindow(np.repeat(trajectory.positions[t][None], graph_cfg.history + 1, axis=0),
                             trajectory.dt, trajectory.particle_radius)
        row = edge_growth(build_graph(window, trajectory.mesh_at(t), graph_cfg))
        row["t"] = t
        out.append(row)
    return out


def representative_frame(rows: list[dict]) -> dict:
    """Row with the largest boundary-to-particle edge ratio (first on ties).

    Frames without particle-particle edges have no ratio and are only
    considered when no frame has one; then the row with the most boundary
    edges is returned.
    """
    defined = [r for r in rows if r["n_real_edges"] > 0]
    if not defined:
        return max(rows, key=lambda r: r["n_boundary_edges"])
    best = defined[0]
    for r in defined[1:]:
        if r["n_boundary_edges"] * best["n_real_edges"] > best["n_boundary_edges"] * r["n_real_edges"]:
            best = r
    return best


def edge_growth_stats(trajectories, graph_cfg: GraphConfig, frames=None) -> dict:
    """Table-style summary: per trajectory the frame with the largest relative
    edge increase, then mean and std of |V|, |E~| and percent increase.

    ``percent_increase`` is ``None`` for a frame without particle-particle
    edges; such frames are left out of its mean and std.
    """
    reps = []
    for tr in trajectories:
        row = dict(representative_frame(edge_growth_series(tr, graph_cfg, frames)))
        if row["n_real_edges"] == 0:
            row["percent_increase"] = None
        reps.append(row)
    summary = {"per_trajectory": reps}
    for key in ("n_real", "n_boundary_edges", "percent_increase"):
        vals = np.array([r[key] for r in reps if r[key] is not None], dtype=np.float64)
        summary[key] = ({"mean": float(vals.mean()), "std": float(vals.std())} if len(vals)
                        else {"mean": None, "std": None})
    return summary


def write_scalar_csv(rows, path) -> None:
    """``t,value`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in rows:
            w.writerow([int(t), repr(float(v))])


def write_vector_csv(series, path) -> None:
    """``t,x,y,z`` rows, one per frame."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z"])
        for t, row in enumerate(np.asarray(series, dtype=np.float64)):
            w.writerow([t, *map(repr, row.tolist())])

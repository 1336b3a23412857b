"""Per-step construction of boundary graphs.

Real particles become nodes connected by bidirectional edges when they are
within ``r_cutoff`` of each other.  For every (particle, triangle) pair whose
closest-point distance is within ``r_tilde_cutoff`` a virtual node is placed at
the closest point on the triangle, connected to the particle by a single
virtual-to-real edge.  Distance tests everywhere compare squared distances,
``dx*dx + dy*dy + dz*dz <= r*r``, so the boundary case is inclusive.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .geometry import closest_points_batch
from .mesh import TriMesh

DISTANCE_FLOOR = 1e-9


class EdgeFeatureLaw(str, enum.Enum):
    PLAIN = "plain"
    INVERSE_FIRST = "inverse_first"
    INVERSE_SQUARE = "inverse_square"


class BoundaryMode(str, enum.Enum):
    VIRTUAL_PER_PAIR = "virtual_per_pair"
    SUPER_NODE_PER_TRIANGLE = "super_node_per_triangle"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class GraphConfig:
    r_cutoff: float = 0.015
    r_tilde_cutoff: float | None = None  # defaults to r_cutoff
    history: int = 5
    edge_feature_law: EdgeFeatureLaw = EdgeFeatureLaw.PLAIN
    boundary_mode: BoundaryMode = BoundaryMode.VIRTUAL_PER_PAIR
    sample_spacing: float | None = None
    bidirectional_boundary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "edge_feature_law", EdgeFeatureLaw(self.edge_feature_law))
        object.__setattr__(self, "boundary_mode", BoundaryMode(self.boundary_mode))
        if self.r_tilde_cutoff is None:
            object.__setattr__(self, "r_tilde_cutoff", self.r_cutoff)
        if not (self.r_cutoff > 0 and self.r_tilde_cutoff > 0):
            raise ValueError("cutoff radii must be positive")
        if self.history < 1:
            raise ValueError("history must be >= 1")
        if self.boundary_mode is BoundaryMode.SAMPLED and not (self.sample_spacing and self.sample_spacing > 0):
            raise ValueError("sampled boundary mode needs a positive sample_spacing")

    @property
    def node_width(self) -> int:
        return 3 * self.history + 7

    @property
    def edge_width(self) -> int:
        return 4

    def to_dict(self) -> dict:
        return {
            "r_cutoff": self.r_cutoff,
            "r_tilde_cutoff": self.r_tilde_cutoff,
            "history": self.history,
            "edge_feature_law": self.edge_feature_law.value,
            "boundary_mode": self.boundary_mode.value,
            "sample_spacing": self.sample_spacing,
            "bidirectional_boundary": self.bidirectional_boundary,
        }


@dataclass(frozen=True)
class FrameWindow:
    """Current frame plus ``C`` previous frames, oldest first: shape (C+1, n, 3)."""

    positions: np.ndarray
    dt: float
    particle_radius: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValueError(f"window positions must have shape (C+1, n, 3), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("window needs at least two frames (C >= 1)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("window contains non-finite positions")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "positions", pos)

    @property
    def history(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def current(self) -> np.ndarray:
        return self.positions[-1]

    def velocities(self) -> np.ndarray:
        """Finite-difference velocities, shape (n, C, 3), most recent first."""
        v = (self.positions[1:] - self.positions[:-1]) / self.dt
        return v[::-1].transpose(1, 0, 2)

    def shifted(self, new_positions) -> "FrameWindow":
        pos = np.concatenate([self.positions[1:], np.asarray(new_positions, dtype=np.float64)[None]])
        return FrameWindow(pos, self.dt, self.particle_radius)


@dataclass(eq=False)
class BoundaryGraph:
    """Node/edge arrays of one graph (or a disjoint union of several).

    Edges point from ``senders`` to ``receivers``; messages are aggregated at
    receivers.
    """

    positions: np.ndarray  # (N, 3)
    is_virtual: np.ndarray  # (N,) bool
    node_features: np.ndarray  # (N, 3C+7)
    senders: np.ndarray  # (E,)
    receivers: np.ndarray  # (E,)
    edge_is_virtual: np.ndarray  # (E,) bool, True for edges touching a virtual node
    edge_features: np.ndarray  # (E, 4)
    source_triangle: np.ndarray = field(default=None)  # (N,) -1 for real nodes
    target_particle: np.ndarray = field(default=None)  # (N,) -1 for real / shared nodes

    def __post_init__(self):
        n = len(self.positions)
        if self.source_triangle is None:
            self.source_triangle = np.full(n, -1, dtype=np.int64)
        if self.target_particle is None:
            self.target_particle = np.full(n, -1, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def n_real(self) -> int:
        return int((~self.is_virtual).sum())

    @property
    def n_virtual(self) -> int:
        return int(self.is_virtual.sum())

    @property
    def n_edges(self) -> int:
        return len(self.senders)

    @property
    def real_index(self) -> np.ndarray:
        return np.flatnonzero(~self.is_virtual)

    def adjacency(self) -> list[np.ndarray]:
        """Incoming edge ids per node."""
        order = np.argsort(self.receivers, kind="stable")
        bounds = np.searchsorted(self.receivers[order], np.arange(self.n_nodes + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.n_nodes)]

    def edge_counts(self) -> dict:
        """(|V|, |E|, |E~|) with real edges counted per direction."""
        real_edges = int((~self.edge_is_virtual).sum())
        virtual_to_real = int((self.edge_is_virtual & self.is_virtual[self.senders]).sum())
        return {"n_real": self.n_real, "n_real_edges": real_edges, "n_boundary_edges": virtual_to_real}

    @classmethod
    def concatenate(cls, graphs) -> "BoundaryGraph":
        offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
        return cls(
            positions=np.concatenate([g.positions for g in graphs]),
            is_virtual=np.concatenate([g.is_virtual for g in graphs]),
            node_features=np.concatenate([g.node_features for g in graphs]),
            senders=np.concatenate([g.senders + o for g, o in zip(graphs, offsets)]),
            receivers=np.concatenate([g.receivers + o for g, o in zip(graphs, offsets)]),
            edge_is_virtual=np.concatenate([g.edge_is_virtual for g in graphs]),
            edge_features=np.concatenate([g.edge_features for g in graphs]),
            source_triangle=np.concatenate([g.source_triangle for g in graphs]),
            target_particle=np.concatenate([g.target_particle for g in graphs]),
        )


def edge_features(delta, law=EdgeFeatureLaw.PLAIN) -> np.ndarray:
    """Edge attributes from ``delta = x_receiver - x_sender``, shape (E, 4).

    plain: ``[|d|^2, d]``; inverse_first: ``[1/|d|, d/|d|^2]``;
    inverse_square: ``[1/|d|^2, d/|d|^3]``.  Inverse laws clamp ``|d|`` at
    ``DISTANCE_FLOOR``.
    """
    d = np.asarray(delta, dtype=np.float64).reshape(-1, 3)
    sq = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    law = EdgeFeatureLaw(law)
    if law is EdgeFeatureLaw.PLAIN:
        return np.concatenate([sq[:, None], d], axis=1)
    r = np.maximum(np.sqrt(sq), DISTANCE_FLOOR)
    if law is EdgeFeatureLaw.INVERSE_FIRST:
        return np.concatenate([(1.0 / r)[:, None], d / (r * r)[:, None]], axis=1)
    return np.concatenate([(1.0 / (r * r))[:, None], d / (r * r * r)[:, None]], axis=1)


def node_features(velocity_history, virtual: bool = False, normal_pair=None) -> np.ndarray:
    """Single node feature vector ``[C*3 velocities | type | 6 normal pair]``."""
    vh = np.asarray(velocity_history, dtype=np.float64).reshape(-1)
    out = np.zeros(len(vh) + 7)
    if virtual:
        out[len(vh)] = 1.0
        out[len(vh) + 1:] = np.asarray(normal_pair, dtype=np.float64).reshape(6)
    else:
        out[:len(vh)] = vh
    return out


def neighbor_pairs(positions, radius: float) -> np.ndarray:
    """All pairs ``i < j`` within ``radius``, via a uniform cell list.

    Returns an int array of shape (k, 2) sorted lexicographically.
    """
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if len(x) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    r2 = radius * radius
    cells = np.floor((x - x.min(axis=0)) / radius).astype(np.int64) + 1
    dims = cells.max(axis=0) + 2
    if float(dims[0]) * float(dims[1]) * float(dims[2]) > 2.0 ** 62:
        # cloud too sparse for integer cell keys; fall back to all pairs
        ii, jj = np.triu_indices(len(x), 1)
        return _filter_pairs(x, ii, jj, r2)
    keys = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    found = []
    for off in product((-1, 0, 1), repeat=3):
        shifted = keys + (off[0] * dims[1] + off[1]) * dims[2] + off[2]
        lo = np.searchsorted(sorted_keys, shifted, "left")
        counts = np.searchsorted(sorted_keys, shifted, "right") - lo
        total = int(counts.sum())
        if not total:
            continue
        ii = np.repeat(np.arange(len(x)), counts)
        starts = np.repeat(lo - (np.cumsum(counts) - counts), counts)
        jj = order[starts + np.arange(total)]
        keep = ii < jj
        found.append(_filter_pairs(x, ii[keep], jj[keep], r2))
    pairs = np.concatenate(found) if found else np.zeros((0, 2), dtype=np.int64)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def _filter_pairs(x, ii, jj, r2):
    d = x[jj] - x[ii]
    sq = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    hit = sq <= r2
    return np.stack([ii[hit], jj[hit]], axis=1).astype(np.int64)


def sample_boundary(mesh: TriMesh, spacing: float):
    """Deterministic barycentric lattice on each triangle.

    Each triangle is split into ``k = ceil(longest edge / spacing)`` steps per
    side, so neighbouring lattice points are at most ``spacing`` apart.

    Returns
    -------
    points : array, shape (p, 3)
    triangle_ids : array, shape (p,)
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts, ids = [], []
    for f in range(len(mesh)):
        b, e0, e1 = mesh.bases[f], mesh.edge0s[f], mesh.edge1s[f]
        longest = max(np.linalg.norm(e0), np.linalg.norm(e1), np.linalg.norm(e1 - e0))
        k = max(1, math.ceil(longest / spacing))
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        keep = (i + j) <= k
        u0 = i[keep] / k
        u1 = j[keep] / k
        pts.append(b + u0[:, None] * e0 + u1[:, None] * e1)
        ids.append(np.full(len(u0), f, dtype=np.int64))
    if not pts:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    return np.concatenate(pts), np.concatenate(ids)


def build_graph(window: FrameWindow, mesh: TriMesh, cfg: GraphConfig, samples=None) -> BoundaryGraph:
    """Boundary graph for the current frame of ``window``.

    ``samples`` may carry a precomputed ``sample_boundary`` result for the
    sampled boundary mode.
    """
    if window.history != cfg.history:
        raise ValueError(f"window has {window.history} history frames, config expects {cfg.history}")
    x = window.current
    n = len(x)
    vel = window.velocities().reshape(n, -1)
    width = cfg.node_width
    hw = 3 * cfg.history

    pairs = neighbor_pairs(x, cfg.r_cutoff) if n else np.zeros((0, 2), dtype=np.int64)
    real_s = np.concatenate([pairs[:, 0], pairs[:, 1]])
    real_r = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((real_s, real_r))
    real_s, real_r = real_s[order], real_r[order]
    real_delta = x[real_r] - x[real_s]

    rt2 = cfg.r_tilde_cutoff * cfg.r_tilde_cutoff
    mode = cfg.boundary_mode
    if mode is BoundaryMode.SAMPLED:
        if samples is None:
            samples = sample_boundary(mesh, cfg.sample_spacing)
        spts, sids = samples
        d = spts[None, :, :] - x[:, None, :]  # (n, p, 3), sample minus particle
        sq = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        pi, si = np.nonzero(sq <= rt2)
        used, local = np.unique(si, return_inverse=True)
        v_pos = spts[used]
        v_tri = sids[used]
        v_target = np.full(len(used), -1, dtype=np.int64)
        e_virtual = local
        e_particle = pi
        e_offset = d[pi, si]
    elif len(mesh) and n:
        _, _, offset, dist_sq = closest_points_batch(x, mesh.bases, mesh.edge0s, mesh.edge1s)
        pi, ti = np.nonzero(dist_sq <= rt2)  # particle-major order
        e_particle = pi
        e_offset = offset[pi, ti]
        if mode is BoundaryMode.VIRTUAL_PER_PAIR:
            v_pos = x[pi] + e_offset
            v_tri = ti
            v_target = pi.copy()
            e_virtual = np.arange(len(pi))
        else:
            used, local = np.unique(ti, return_inverse=True)
            v_pos = mesh.bases[used] + (mesh.edge0s[used] + mesh.edge1s[used]) / 3.0
            v_tri = used
            v_target = np.full(len(used), -1, dtype=np.int64)
            e_virtual = local
    else:
        v_pos = np.zeros((0, 3))
        v_tri = v_target = e_virtual = e_particle = np.zeros(0, dtype=np.int64)
        e_offset = np.zeros((0, 3))

    nv = len(v_pos)
    feats = np.zeros((n + nv, width))
    feats[:n, :hw] = vel
    feats[n:, hw] = 1.0
    if nv:
        feats[n:, hw + 1:] = mesh.normal_pairs[v_tri]

    vs = n + np.asarray(e_virtual, dtype=np.int64)
    senders = [real_s, vs]
    receivers = [real_r, e_particle]
    # particle minus closest point, negated offset keeps exact translation invariance
    deltas = [real_delta, -e_offset]
    kinds = [np.zeros(len(real_s), bool), np.ones(len(vs), bool)]
    if cfg.bidirectional_boundary:
        senders.append(e_particle)
        receivers.append(vs)
        deltas.append(e_offset + 0.0)
        kinds.append(np.ones(len(vs), bool))
    senders = np.concatenate(senders).astype(np.int64)
    receivers = np.concatenate(receivers).astype(np.int64)
    delta = np.concatenate(deltas).reshape(-1, 3)

    return BoundaryGraph(
        positions=np.concatenate([x, v_pos.reshape(-1, 3)]),
        is_virtual=np.concatenate([np.zeros(n, bool), np.ones(nv, bool)]),
        node_features=feats,
        senders=senders,
        receivers=receivers,
        edge_is_virtual=np.concatenate(kinds),
        edge_features=edge_features(delta, cfg.edge_feature_law),
        source_triangle=np.concatenate([np.full(n, -1, np.int64), np.asarray(v_tri, np.int64)]),
        target_particle=np.concatenate([np.full(n, -1, np.int64), np.asarray(v_target, np.int64)]),
    )


def edge_growth(graph: BoundaryGraph) -> dict:
    """|V|, |E~| and the relative edge increase |E~| / |E| in percent."""
    c = graph.edge_counts()
    e = c["n_real_edges"]
    return {
        "n_real": c["n_real"],
        "n_real_edges": e,
        "n_boundary_edges": c["n_boundary_edges"],
        "percent_increase": 100.0 * c["n_boundary_edges"] / e if e else math.inf if c["n_boundary_edges"] else 0.0,
    }


def write_graph_csv(graph: BoundaryGraph, path) -> None:
    """Debug dump with a NODES section followed by an EDGES section."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["NODES"])
        w.writerow(["id", "kind", "x", "y", "z"] + [f"f{k}" for k in range(graph.node_features.shape[1])])
        for i in range(graph.n_nodes):
            kind = "virtual" if graph.is_virtual[i] else "real"
            w.writerow([i, kind, *map(repr, graph.positions[i].tolist()), *map(repr, graph.node_features[i].tolist())])
        w.writerow(["EDGES"])
        w.writerow(["sender", "receiver", "kind"] + [f"a{k}" for k in range(graph.edge_features.shape[1])])
        for k in range(graph.n_edges):
            kind = "virtual_to_real" if graph.edge_is_virtual[k] and graph.is_virtual[graph.senders[k]] else (
                "real_to_virtual" if graph.edge_is_virtual[k] else "real_real")
            w.writerow([int(graph.senders[k]), int(graph.receivers[k]), kind, *map(repr, graph.edge_features[k].tolist())])


def read_graph_csv(path) -> dict:
    """Parse a dump written by :func:`write_graph_csv` into plain arrays."""
    nodes, edges, section = [], [], None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row in (["NODES"], ["EDGES"]):
                section = row[0]
                header = True
                continue
            if header:
                header = False
                continue
            (nodes if section == "NODES" else edges).append(row)
    return {
        "kinds": [r[1] for r in nodes],
        "positions": np.array([[float(v) for v in r[2:5]] for r in nodes]).reshape(-1, 3),
        "node_features": np.array([[float(v) for v in r[5:]] for r in nodes]),
        "senders": np.array([int(r[0]) for r in edges], dtype=np.int64),
        "receivers": np.array([int(r[1]) for r in edges], dtype=np.int64),
        "edge_kinds": [r[2] for r in edges],
        "edge_features": np.array([[float(v) for v in r[3:]] for r in edges]),
    }

"""Triangle meshes: derived per-face frames, OBJ subset I/O, watertightness and
inside/outside queries."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DEGENERACY_TOL, DegenerateTriangleError, Triangle, ordered_normal_pairs


class ObjParseError(ValueError):
    pass


class NotWatertightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulated boundary surface.

    ``faces`` keep the winding they were given.  The derived frames
    (``bases``, ``edge0s``, ``edge1s``) are built from each face's vertex
    indices in ascending order, so reordering a face's vertices never changes
    any closest-point arithmetic.
    """

    vertices: np.ndarray
    faces: np.ndarray
    bases: np.ndarray = field(init=False, repr=False)
    edge0s: np.ndarray = field(init=False, repr=False)
    edge1s: np.ndarray = field(init=False, repr=False)
    normal_pairs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex coordinates")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        canon = np.sort(f, axis=1)
        b = v[canon[:, 0]]
        e0 = v[canon[:, 1]] - b
        e1 = v[canon[:, 2]] - b
        cross = np.cross(e0, e1)
        cross_norm = np.sqrt((cross * cross).sum(axis=1))
        scale = np.maximum((e0 * e0).sum(axis=1), (e1 * e1).sum(axis=1))
        bad = ~(cross_norm >= DEGENERACY_TOL * scale) | (scale == 0.0)
        if np.any(bad):
            raise DegenerateTriangleError(f"degenerate faces: {np.flatnonzero(bad).tolist()}")
        object.__setattr__(self, "bases", b)
        object.__setattr__(self, "edge0s", e0)
        object.__setattr__(self, "edge1s", e1)
        object.__setattr__(self, "normal_pairs", ordered_normal_pairs(cross) if len(f) else np.zeros((0, 6)))

    def __len__(self):
        return len(self.faces)

    def triangle(self, i: int) -> Triangle:
        return Triangle(self.bases[i], self.edge0s[i], self.edge1s[i])

    def winding_normals(self) -> np.ndarray:
        """Unit normals following each face's stored vertex order."""
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(np.cross(self.edge0s, self.edge1s), axis=1)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, rotation=None, translation=None, center=None) -> "TriMesh":
        v = self.vertices
        if rotation is not None:
            c = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64)
            v = (v - c) @ np.asarray(rotation, dtype=np.float64).T + c
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriMesh(v, self.faces)

    def boundary_edges(self) -> list[tuple[int, int]]:
        """Undirected edges not shared by exactly two faces."""
        counts = Counter()
        for a, b, c in self.faces.tolist():
            for e in ((a, b), (b, c), (c, a)):
                counts[(min(e), max(e))] += 1
        return sorted(e for e, k in counts.items() if k != 2)

    def is_watertight(self) -> bool:
        return len(self.faces) > 0 and not self.boundary_edges()

    def require_watertight(self):
        edges = self.boundary_edges()
        if edges or not len(self.faces):
            raise NotWatertightError(f"mesh is not watertight: {len(edges)} boundary edges, e.g. {edges[:5]}")

    def contains(self, points) -> np.ndarray:
        """Strict inside test by ray parity; requires a watertight mesh."""
        self.require_watertight()
        return points_inside(self, points)


# fixed, irrational-looking ray directions; later ones are used when an
# earlier ray grazes an edge, a vertex or lies in a face plane
_RAY_DIRECTIONS = np.array([
    [0.5773502691896258, 0.5773502691896257, 0.5773502691896259],
    [0.2672612419124244, 0.5345224838248488, 0.8017837257372732],
    [-0.4082482904638631, 0.8164965809277261, 0.4082482904638629],
    [0.7071067811865476, -0.1000000000000000, 0.6999999999999999],
    [-0.3015113445777636, -0.3015113445777636, 0.9045340337332909],
    [0.1961161351381840, -0.9805806756909202, 0.0000000000000001],
])
_RAY_EPS = 1e-10


def _ray_hits(origins, direction, mesh):
    """Crossing counts per origin and a flag for numerically ambiguous rays."""
    a = mesh.vertices[mesh.faces[:, 0]]
    e1 = mesh.vertices[mesh.faces[:, 1]] - a
    e2 = mesh.vertices[mesh.faces[:, 2]] - a
    pvec = np.cross(direction, e2)
    det = (e1 * pvec).sum(axis=1)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    parallel = np.abs(det) <= _RAY_EPS * scale
    safe_det = np.where(parallel, 1.0, det)
    tvec = origins[:, None, :] - a[None]
    u = (tvec * pvec[None]).sum(axis=2) / safe_det
    qvec = np.cross(tvec, e1[None])
    w = (qvec * direction).sum(axis=2) / safe_det
    t = (qvec * e2[None]).sum(axis=2) / safe_det
    ext = np.sqrt(scale)
    on_plane = (np.abs(t) <= _RAY_EPS * ext) & (u >= -_RAY_EPS) & (w >= -_RAY_EPS) & (u + w <= 1 + _RAY_EPS)
    near_edge = ((np.abs(u) <= _RAY_EPS) | (np.abs(w) <= _RAY_EPS) | (np.abs(u + w - 1) <= _RAY_EPS))
    candidate = (u >= -_RAY_EPS) & (w >= -_RAY_EPS) & (u + w <= 1 + _RAY_EPS) & (t > 0)
    ambiguous = (~parallel[None] & candidate & near_edge).any(axis=1)
    # a ray parallel to a face can only matter if it runs inside that face's plane
    coplanar = parallel[None] & (np.abs((tvec * np.cross(e1, e2)[None]).sum(axis=2)) <= _RAY_EPS * scale[None] * ext[None])
    ambiguous |= coplanar.any(axis=1)
    hit = ~parallel[None] & (u > 0) & (w > 0) & (u + w < 1) & (t > 0)
    on_surface = (~parallel[None] & on_plane).any(axis=1)
    return hit.sum(axis=1), ambiguous, on_surface


def points_inside(mesh: TriMesh, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    lo, hi = mesh.bounds()
    inside = np.zeros(len(pts), dtype=bool)
    todo = np.flatnonzero(np.all((pts > lo) & (pts < hi), axis=1))
    for direction in _RAY_DIRECTIONS:
        if not len(todo):
            break
        count, ambiguous, on_surface = _ray_hits(pts[todo], direction, mesh)
        settled = ~ambiguous | on_surface
        inside[todo[settled]] = (count[settled] % 2 == 1) & ~on_surface[settled]
        todo = todo[~settled]
    if len(todo):
        raise RuntimeError(f"ray parity undecided for {len(todo)} points")
    return inside


def read_obj(path) -> TriMesh:
    """Read ``v x y z`` and ``f i j k`` lines (1-based, triangles only)."""
    vertices, faces = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise ObjParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(x) for x in rest[:3]])
            except ValueError as exc:
                raise ObjParseError(f"line {lineno}: {exc}") from None
        elif tag == "f":
            if len(rest) != 3:
                raise ObjParseError(f"line {lineno}: only triangular faces are supported, got {len(rest)} vertices")
            try:
                idx = [int(tok.split("/")[0]) for tok in rest]
            except ValueError as exc:
                raise ObjParseError(f"line {lineno}: {exc}") from None
            if min(idx) < 1 or max(idx) > len(vertices):
                raise ObjParseError(f"line {lineno}: face index out of range")
            faces.append([i - 1 for i in idx])
    return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriMesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")

"""Exact point/triangle geometry.

Triangles are parameterized as ``t(u0, u1) = b + u0*e0 + u1*e1`` with
``u0 >= 0``, ``u1 >= 0`` and ``u0 + u1 <= 1``.  The closest point is found by
classifying where the unconstrained minimizer of the squared distance falls
relative to the parameter triangle and clamping with exact one-dimensional
sub-minimizations (Eberly's construction).

Two implementations are provided: :func:`closest_point_on_triangle` works on
a single pair with plain Python floats and reports the active constraint
region; :func:`closest_points_batch` evaluates many pairs at once with numpy.
Both perform the same floating point operations in the same order, so their
results agree bitwise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

DEGENERACY_TOL = 1e-12


class DegenerateTriangleError(ValueError):
    """Raised when a triangle's edge vectors are (numerically) parallel."""


class Region(enum.IntEnum):
    """Active constraint set of the minimizer in barycentric parameters."""

    INTERIOR = 0
    EDGE01 = 1  # u0 + u1 = 1
    EDGE0 = 2  # u1 = 0, segment along e0
    EDGE1 = 3  # u0 = 0, segment along e1
    VERTEX_B = 4
    VERTEX_E0END = 5
    VERTEX_E1END = 6


@dataclass(frozen=True)
class Triangle:
    base: np.ndarray
    edge0: np.ndarray
    edge1: np.ndarray

    @classmethod
    def from_vertices(cls, a, b, c) -> "Triangle":
        a = np.asarray(a, dtype=np.float64)
        return cls(a, np.asarray(b, dtype=np.float64) - a, np.asarray(c, dtype=np.float64) - a)

    def point(self, u0: float, u1: float) -> np.ndarray:
        return self.base + u0 * self.edge0 + u1 * self.edge1

    def vertices(self) -> np.ndarray:
        return np.array([self.base, self.base + self.edge0, self.base + self.edge1])


@dataclass(frozen=True)
class ClosestPointResult:
    u0p: float
    u1p: float
    point: np.ndarray
    dist_sq: float
    region: Region
    offset: np.ndarray  # point - query, accumulated without forming ``point`` first


@dataclass(frozen=True)
class OrderedNormalPair:
    first: np.ndarray
    second: np.ndarray

    def as_features(self) -> np.ndarray:
        return np.concatenate([self.first, self.second])


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def check_nondegenerate(e0, e1) -> None:
    c = _cross(e0, e1)
    cross_norm = math.sqrt(float(_dot3(c, c)))
    scale = max(float(_dot3(e0, e0)), float(_dot3(e1, e1)))
    if not cross_norm >= DEGENERACY_TOL * scale or scale == 0.0:
        raise DegenerateTriangleError(
            f"degenerate triangle: |e0 x e1| = {cross_norm:.3e}, max |e|^2 = {scale:.3e}")


def _solve_st(a00, a01, a11, b0, b1):
    """Clamped minimizer (s, t) of the barycentric quadratic, scalar branchy form."""
    det = abs(a00 * a11 - a01 * a01)
    s = a01 * b1 - a11 * b0
    t = a01 * b0 - a00 * b1
    if s + t <= det:
        if s < 0.0:
            if t < 0.0:
                # vertex-b region: minimum on edge t=0 or edge s=0
                if b0 < 0.0:
                    t = 0.0
                    s = 1.0 if -b0 >= a00 else -b0 / a00
                else:
                    s = 0.0
                    t = 0.0 if b1 >= 0.0 else (1.0 if -b1 >= a11 else -b1 / a11)
            else:
                s = 0.0
                t = 0.0 if b1 >= 0.0 else (1.0 if -b1 >= a11 else -b1 / a11)
        elif t < 0.0:
            t = 0.0
            s = 0.0 if b0 >= 0.0 else (1.0 if -b0 >= a00 else -b0 / a00)
        else:
            s = s / det
            t = t / det
            if s + t > 1.0:
                t = 1.0 - s
    else:
        if s < 0.0:
            tmp0 = a01 + b0
            tmp1 = a11 + b1
            if tmp1 > tmp0:
                numer = tmp1 - tmp0
                denom = a00 - 2.0 * a01 + a11
                if numer >= denom:
                    s, t = 1.0, 0.0
                else:
                    s = numer / denom
                    t = 1.0 - s
            else:
                s = 0.0
                t = 1.0 if tmp1 <= 0.0 else (0.0 if b1 >= 0.0 else -b1 / a11)
        elif t < 0.0:
            tmp0 = a01 + b1
            tmp1 = a00 + b0
            if tmp1 > tmp0:
                numer = tmp1 - tmp0
                denom = a00 - 2.0 * a01 + a11
                if numer >= denom:
                    s, t = 0.0, 1.0
                else:
                    t = numer / denom
                    s = 1.0 - t
            else:
                t = 0.0
                s = 1.0 if tmp1 <= 0.0 else (0.0 if b0 >= 0.0 else -b0 / a00)
        else:
            numer = a11 + b1 - a01 - b0
            if numer <= 0.0:
                s, t = 0.0, 1.0
            else:
                denom = a00 - 2.0 * a01 + a11
                if numer >= denom:
                    s, t = 1.0, 0.0
                else:
                    s = numer / denom
                    t = 1.0 - s
    return s, t


def classify_region(s: float, t: float) -> Region:
    if t == 0.0:
        if s == 0.0:
            return Region.VERTEX_B
        return Region.VERTEX_E0END if s == 1.0 else Region.EDGE0
    if s == 0.0:
        return Region.VERTEX_E1END if t == 1.0 else Region.EDGE1
    if s + t >= 1.0:
        return Region.EDGE01
    return Region.INTERIOR


def closest_point_on_triangle(p, tri: Triangle) -> ClosestPointResult:
    """Closest point of ``tri`` to ``p`` and the active constraint region.

    Raises
    ------
    DegenerateTriangleError
        If ``|e0 x e1| < 1e-12 * max(|e0|, |e1|)**2``.
    """
    b = [float(v) for v in tri.base]
    e0 = [float(v) for v in tri.edge0]
    e1 = [float(v) for v in tri.edge1]
    q = [float(v) for v in p]
    if not all(math.isfinite(v) for v in q):
        raise ValueError("query point must be finite")
    check_nondegenerate(e0, e1)
    d = [b[0] - q[0], b[1] - q[1], b[2] - q[2]]
    a00 = _dot3(e0, e0)
    a01 = _dot3(e0, e1)
    a11 = _dot3(e1, e1)
    b0 = _dot3(d, e0)
    b1 = _dot3(d, e1)
    s, t = _solve_st(a00, a01, a11, b0, b1)
    off = np.array([d[k] + s * e0[k] + t * e1[k] for k in range(3)])
    dist_sq = float(_dot3(off, off))
    point = np.array(q) + off
    return ClosestPointResult(s, t, point, dist_sq, classify_region(s, t), off)


def closest_points_batch(points, bases, edge0s, edge1s):
    """Vectorized closest points for all (point, triangle) combinations.

    Parameters
    ----------
    points : array, shape (n, 3)
    bases, edge0s, edge1s : array, shape (m, 3)
        Triangle frames; assumed non-degenerate.

    Returns
    -------
    s, t : arrays, shape (n, m)
        Minimizing barycentric parameters.
    offset : array, shape (n, m, 3)
        Closest point minus query point.
    dist_sq : array, shape (n, m)
    """
    P = np.asarray(points, dtype=np.float64)[:, None, :]
    B = np.asarray(bases, dtype=np.float64)[None]
    E0 = np.asarray(edge0s, dtype=np.float64)[None]
    E1 = np.asarray(edge1s, dtype=np.float64)[None]
    d = B - P
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    e0x, e0y, e0z = E0[..., 0], E0[..., 1], E0[..., 2]
    e1x, e1y, e1z = E1[..., 0], E1[..., 1], E1[..., 2]
    a00 = e0x * e0x + e0y * e0y + e0z * e0z
    a01 = e0x * e1x + e0y * e1y + e0z * e1z
    a11 = e1x * e1x + e1y * e1y + e1z * e1z
    b0 = dx * e0x + dy * e0y + dz * e0z
    b1 = dx * e1x + dy * e1y + dz * e1z
    a00, a01, a11 = np.broadcast_arrays(a00, a01, a11)
    a00 = np.broadcast_to(a00, b0.shape)
    a01 = np.broadcast_to(a01, b0.shape)
    a11 = np.broadcast_to(a11, b0.shape)

    with np.errstate(divide="ignore", invalid="ignore"):
        det = np.abs(a00 * a11 - a01 * a01)
        s0 = a01 * b1 - a11 * b0
        t0 = a01 * b0 - a00 * b1

        # clamped 1D minimizers on the three edges
        s_e0 = np.where(b0 >= 0.0, 0.0, np.where(-b0 >= a00, 1.0, -b0 / a00))  # t = 0
        t_e1 = np.where(b1 >= 0.0, 0.0, np.where(-b1 >= a11, 1.0, -b1 / a11))  # s = 0
        denom = a00 - 2.0 * a01 + a11

        s = np.empty_like(b0)
        t = np.empty_like(b0)
        inside = s0 + t0 <= det

        # vertex-b region
        m4 = inside & (s0 < 0.0) & (t0 < 0.0)
        m4a = m4 & (b0 < 0.0)
        m4b = m4 & ~(b0 < 0.0)
        s[m4a] = np.where(-b0 >= a00, 1.0, -b0 / a00)[m4a]
        t[m4a] = 0.0
        s[m4b] = 0.0
        t[m4b] = t_e1[m4b]
        # s = 0 edge region
        m3 = inside & (s0 < 0.0) & ~(t0 < 0.0)
        s[m3] = 0.0
        t[m3] = t_e1[m3]
        # t = 0 edge region
        m5 = inside & ~(s0 < 0.0) & (t0 < 0.0)
        s[m5] = s_e0[m5]
        t[m5] = 0.0
        # interior
        m0 = inside & ~(s0 < 0.0) & ~(t0 < 0.0)
        si = s0 / det
        ti = t0 / det
        ti = np.where(si + ti > 1.0, 1.0 - si, ti)
        s[m0] = si[m0]
        t[m0] = ti[m0]

        out = ~inside
        # region 2: beyond the e1 end
        m2 = out & (s0 < 0.0)
        tmp0 = a01 + b0
        tmp1 = a11 + b1
        numer = tmp1 - tmp0
        m2a = m2 & (tmp1 > tmp0)
        m2a1 = m2a & (numer >= denom)
        m2a2 = m2a & ~(numer >= denom)
        s[m2a1] = 1.0
        t[m2a1] = 0.0
        s2 = numer / denom
        s[m2a2] = s2[m2a2]
        t[m2a2] = (1.0 - s2)[m2a2]
        m2b = m2 & ~(tmp1 > tmp0)
        s[m2b] = 0.0
        t[m2b] = np.where(tmp1 <= 0.0, 1.0, np.where(b1 >= 0.0, 0.0, -b1 / a11))[m2b]
        # region 6: beyond the e0 end
        m6 = out & ~(s0 < 0.0) & (t0 < 0.0)
        tmp0 = a01 + b1
        tmp1 = a00 + b0
        numer = tmp1 - tmp0
        m6a = m6 & (tmp1 > tmp0)
        m6a1 = m6a & (numer >= denom)
        m6a2 = m6a & ~(numer >= denom)
        s[m6a1] = 0.0
        t[m6a1] = 1.0
        t6 = numer / denom
        t[m6a2] = t6[m6a2]
        s[m6a2] = (1.0 - t6)[m6a2]
        m6b = m6 & ~(tmp1 > tmp0)
        t[m6b] = 0.0
        s[m6b] = np.where(tmp1 <= 0.0, 1.0, np.where(b0 >= 0.0, 0.0, -b0 / a00))[m6b]
        # region 1: beyond the hypotenuse
        m1 = out & ~(s0 < 0.0) & ~(t0 < 0.0)
        numer = a11 + b1 - a01 - b0
        m1a = m1 & (numer <= 0.0)
        s[m1a] = 0.0
        t[m1a] = 1.0
        m1b = m1 & ~(numer <= 0.0) & (numer >= denom)
        s[m1b] = 1.0
        t[m1b] = 0.0
        m1c = m1 & ~(numer <= 0.0) & ~(numer >= denom)
        s1 = numer / denom
        s[m1c] = s1[m1c]
        t[m1c] = (1.0 - s1)[m1c]

    ox = dx + s * e0x + t * e1x
    oy = dy + s * e0y + t * e1y
    oz = dz + s * e0z + t * e1z
    offset = np.stack([ox, oy, oz], axis=-1)
    dist_sq = ox * ox + oy * oy + oz * oz
    return s, t, offset, dist_sq


def triangle_normal(tri: Triangle) -> np.ndarray:
    check_nondegenerate(tri.edge0, tri.edge1)
    c = np.array(_cross(tri.edge0, tri.edge1), dtype=np.float64)
    return c / math.sqrt(float(_dot3(c, c)))


def partial_order_value(n) -> int:
    """Sign-pattern score ``sum_i 3**i * (sgn(n_i) + 1)`` in ``[0, 26]``."""
    return sum(3 ** i * (int(np.sign(float(c))) + 1) for i, c in enumerate(n))


def ordered_normal_pair(n) -> OrderedNormalPair:
    """Normalize ``n`` and return ``(n, -n)`` sorted by :func:`partial_order_value`.

    The result is identical for ``n`` and ``-n``.
    """
    n = np.asarray(n, dtype=np.float64)
    norm = math.sqrt(float(_dot3(n, n)))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("normal must be a finite nonzero vector")
    # + 0.0 maps -0.0 to +0.0 so both orientations produce the same bits
    unit = n / norm + 0.0
    neg = -unit + 0.0
    if partial_order_value(unit) <= partial_order_value(neg):
        return OrderedNormalPair(unit, neg)
    return OrderedNormalPair(neg, unit)


def ordered_normal_pairs(normals) -> np.ndarray:
    """Vectorized :func:`ordered_normal_pair` over rows, shape (m, 6)."""
    n = np.asarray(normals, dtype=np.float64)
    norm = np.sqrt(n[:, 0] * n[:, 0] + n[:, 1] * n[:, 1] + n[:, 2] * n[:, 2])
    if np.any(norm == 0.0):
        raise ValueError("zero normal")
    unit = n / norm[:, None] + 0.0
    neg = -unit + 0.0
    weights = np.array([1, 3, 9])
    fo_pos = ((np.sign(unit).astype(int) + 1) * weights).sum(axis=1)
    fo_neg = ((np.sign(neg).astype(int) + 1) * weights).sum(axis=1)
    swap = (fo_pos > fo_neg)[:, None]
    first = np.where(swap, neg, unit)
    second = np.where(swap, unit, neg)
    return np.concatenate([first, second], axis=1)


def reflect(v, n) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    nn = float(n @ n)
    if nn == 0.0:
        raise ValueError("cannot reflect about a zero normal")
    return v - 2.0 * float(v @ n) / nn * n

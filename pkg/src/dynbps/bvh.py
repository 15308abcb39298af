"""BVH construction, closest-surface-point queries, and point containment.

The Bvh is plain arrays (boxes plus child/leaf links) consumed by either
kernel backend; see dynbps._kernels for the backend contract. Everything
here is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import get_kernels
from .errors import ContainmentError
from .mesh import TriangleMesh

LEAF_SIZE = 4
ON_SURFACE_DIST = 1e-12  # closer than this to the surface counts as inside


def _build_ray_directions(count: int = 64) -> np.ndarray:
    """Deterministic unit directions for parity ray casts.

    The first is a fixed irrational-slope direction; the rest are seeded
    Gaussian draws. Components are kept away from zero so the slab tests
    never divide by zero.
    """
    base = np.array([1.0, 0.6180339887498949, 0.41421356237309515])
    dirs = [base / np.linalg.norm(base)]
    rng = np.random.default_rng(0xBA5E)
    while len(dirs) < count:
        v = rng.standard_normal(3)
        norm = np.linalg.norm(v)
        if norm < 1e-6:
            continue
        v = v / norm
        if np.abs(v).min() < 0.05:
            continue
        dirs.append(v)
    out = np.array(dirs)
    out.flags.writeable = False
    return out


RAY_DIRECTIONS = _build_ray_directions()


@dataclass(frozen=True)
class SurfacePoint:
    """Closest point on a surface: where, how far, and on which triangle."""

    point: np.ndarray
    distance: float
    triangle_id: int


@dataclass(frozen=True)
class Bvh:
    """Binary bounding-box tree over a mesh's triangles.

    Node arrays are index-aligned: entry i describes node i, the root is
    node 0, and a node is a leaf iff count[i] > 0 (then leaf_tris[start:
    start+count] are its triangle ids); otherwise left/right hold child
    node ids. tri_bmin/tri_bmax are per-triangle boxes in original id order.
    """

    mesh: TriangleMesh
    node_bmin: np.ndarray
    node_bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    leaf_tris: np.ndarray
    tri_bmin: np.ndarray
    tri_bmax: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.left)

    def check_invariants(self) -> None:
        """Raise ValueError if the tree structure is inconsistent."""
        seen = []
        for i in range(self.num_nodes):
            if self.count[i] > 0:
                ids = self.leaf_tris[self.start[i]:self.start[i] + self.count[i]]
                seen.extend(int(t) for t in ids)
                for t in ids:
                    if np.any(self.tri_bmin[t] < self.node_bmin[i] - 1e-12) or \
                       np.any(self.tri_bmax[t] > self.node_bmax[i] + 1e-12):
                        raise ValueError(f"leaf {i} does not contain triangle {t}")
            else:
                for child in (self.left[i], self.right[i]):
                    if np.any(self.node_bmin[child] < self.node_bmin[i] - 1e-12) or \
                       np.any(self.node_bmax[child] > self.node_bmax[i] + 1e-12):
                        raise ValueError(f"node {i} does not contain child {child}")
        if sorted(seen) != list(range(self.mesh.num_triangles)):
            raise ValueError("leaf triangle lists do not partition the mesh")


def build_bvh(mesh: TriangleMesh) -> Bvh:
    """Median-split BVH: longest centroid axis, stable order, leaves <= 4.

    Construction is deterministic for a given mesh (stable argsort breaks
    centroid ties by triangle id).
    """
    tp = mesh.triangle_points
    n = len(tp)
    if n == 0:
        raise ValueError("cannot build a BVH over an empty mesh")
    tri_bmin = np.ascontiguousarray(tp.min(axis=1))
    tri_bmax = np.ascontiguousarray(tp.max(axis=1))
    centroids = (tp[:, 0] + tp[:, 1] + tp[:, 2]) / 3.0
    perm = np.arange(n, dtype=np.int32)

    bmin_l, bmax_l = [], []
    left_l, right_l, start_l, count_l = [], [], [], []

    def build(lo: int, hi: int) -> int:
        seg = perm[lo:hi]
        idx = len(left_l)
        bmin_l.append(tri_bmin[seg].min(axis=0))
        bmax_l.append(tri_bmax[seg].max(axis=0))
        left_l.append(-1)
        right_l.append(-1)
        start_l.append(0)
        count_l.append(0)
        if hi - lo <= LEAF_SIZE:
            start_l[idx] = lo
            count_l[idx] = hi - lo
            return idx
        cen = centroids[seg]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        perm[lo:hi] = seg[np.argsort(cen[:, axis], kind="stable")]
        mid = lo + (hi - lo) // 2
        left_l[idx] = build(lo, mid)
        right_l[idx] = build(mid, hi)
        return idx

    build(0, n)

    arrays = dict(
        node_bmin=np.ascontiguousarray(bmin_l, dtype=np.float64),
        node_bmax=np.ascontiguousarray(bmax_l, dtype=np.float64),
        left=np.ascontiguousarray(left_l, dtype=np.int32),
        right=np.ascontiguousarray(right_l, dtype=np.int32),
        start=np.ascontiguousarray(start_l, dtype=np.int32),
        count=np.ascontiguousarray(count_l, dtype=np.int32),
        leaf_tris=perm,
        tri_bmin=tri_bmin,
        tri_bmax=tri_bmax,
    )
    for arr in arrays.values():
        arr.flags.writeable = False
    return Bvh(mesh=mesh, **arrays)


def _as_queries(points) -> np.ndarray:
    q = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if q.ndim != 2 or q.shape[1] != 3:
        raise ValueError(f"expected (n, 3) query points, got shape {q.shape}")
    return q


def closest_points(bvh: Bvh, points, method: str = "bvh"):
    """Batched closest-surface query: (triangle ids, points (n,3), distances).

    method="bvh" traverses the tree; "brute" scans every triangle. Both
    return bit-identical results (the brute path is the testing oracle and
    the benchmark baseline).
    """
    q = _as_queries(points)
    kern = get_kernels()
    tp = bvh.mesh.triangle_points
    if method == "bvh":
        tids, pts, sqd = kern.bvh_closest(tp, bvh.node_bmin, bvh.node_bmax,
                                          bvh.left, bvh.right, bvh.start, bvh.count,
                                          bvh.leaf_tris, q)
    elif method == "brute":
        tids, pts, sqd = kern.brute_closest(tp, q)
    else:
        raise ValueError(f"method must be 'bvh' or 'brute', got {method!r}")
    return tids, pts, np.sqrt(sqd)


def closest_point_on_mesh(bvh: Bvh, p) -> SurfacePoint:
    tids, pts, dists = closest_points(bvh, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return SurfacePoint(point=pts[0], distance=float(dists[0]), triangle_id=int(tids[0]))


def closest_point_on_triangle(p, a, b, c) -> SurfacePoint:
    """Closest point on one triangle; triangle_id is always 0."""
    tri = np.ascontiguousarray(np.array([[a, b, c]], dtype=np.float64))
    cross = np.cross(tri[0, 1] - tri[0, 0], tri[0, 2] - tri[0, 0])
    if 0.5 * np.linalg.norm(cross) < 1e-12:
        raise ValueError("degenerate triangle (area below 1e-12)")
    kern = get_kernels()
    tids, pts, sqd = kern.brute_closest(tri, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return SurfacePoint(point=pts[0], distance=float(np.sqrt(sqd[0])), triangle_id=0)


def barycentric_coordinates(a, b, c, p) -> np.ndarray:
    """(u, v, w) with p projected as u*a + v*b + w*c."""
    a = np.asarray(a, dtype=np.float64)
    v0 = np.asarray(b, dtype=np.float64) - a
    v1 = np.asarray(c, dtype=np.float64) - a
    v2 = np.asarray(p, dtype=np.float64) - a
    d00 = v0 @ v0
    d01 = v0 @ v1
    d11 = v1 @ v1
    d20 = v2 @ v0
    d21 = v2 @ v1
    denom = d00 * d11 - d01 * d01
    if denom <= 0.0:
        raise ValueError("degenerate triangle")
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.array([1.0 - v - w, v, w])


def _parity_inside(bvh: Bvh, points: np.ndarray, distances: np.ndarray,
                   method: str) -> np.ndarray:
    """Ray-parity containment given precomputed surface distances."""
    kern = get_kernels()
    tp = bvh.mesh.triangle_points
    inside = distances < ON_SURFACE_DIST
    idx = np.flatnonzero(~inside)
    for direction in RAY_DIRECTIONS:
        if idx.size == 0:
            break
        origins = np.ascontiguousarray(points[idx])
        if method == "bvh":
            counts, unsafe = kern.bvh_crossings(tp, bvh.node_bmin, bvh.node_bmax,
                                                bvh.left, bvh.right, bvh.start,
                                                bvh.count, bvh.leaf_tris,
                                                bvh.tri_bmin, bvh.tri_bmax,
                                                origins, direction)
        else:
            counts, unsafe = kern.brute_crossings(tp, bvh.tri_bmin, bvh.tri_bmax,
                                                  origins, direction)
        settled = ~unsafe
        inside[idx[settled]] = (counts[settled] % 2) == 1
        idx = idx[unsafe]
    if idx.size:
        raise ContainmentError(
            f"containment ambiguous for {idx.size} point(s) after "
            f"{len(RAY_DIRECTIONS)} ray directions; mesh may be borderline degenerate")
    return inside


def contains_points(bvh: Bvh, points, method: str = "bvh") -> np.ndarray:
    """Boolean containment per point. Requires a watertight mesh.

    A point within 1e-12 m of the surface counts as inside, matching the
    encoder's zero-vector rule for surface contact. Rays whose crossings
    are numerically borderline are re-cast along the next fixed direction.
    """
    if not bvh.mesh.watertight:
        raise ContainmentError(
            "containment needs a watertight mesh; run mesh.validate() or "
            "encode with interior='skip'")
    q = _as_queries(points)
    _, _, dists = closest_points(bvh, q, method=method)
    return _parity_inside(bvh, q, dists, method)


def contains_point(bvh: Bvh, p) -> bool:
    return bool(contains_points(bvh, np.asarray(p, dtype=np.float64).reshape(1, 3))[0])

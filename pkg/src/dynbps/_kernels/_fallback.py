"""Pure numpy reference kernels.

This module and the compiled twin (_core.pyx) implement the same four
queries and must stay bit-identical: every float expression is written in
the exact operation order the scalar C code uses (dot products expanded
left-associative, no sum()/einsum reductions, divisions kept as written).
Do not simplify arithmetic here without changing _core.pyx to match.

Geometry conventions: triangles as (T, 3, 3) corner arrays, BVH node arrays
as produced by dynbps.bvh.build_bvh, ray directions unit-norm with all
components nonzero.
"""

from __future__ import annotations

import numpy as np

# closest-point: tie-break on equal squared distance goes to the lowest
# triangle id; BVH pruning is strict (>) so exact ties are never lost.

# ray parity: a crossing is counted only when clearly interior to a facet
# and clearly in front of the origin; anything within the margins below is
# reported unsafe so the caller can re-cast along another direction.
DET_EPS = 1e-8    # |Moller-Trumbore determinant| below this: unreliable
BARY_EPS = 1e-6   # barycentric margin around edges/vertices
T_EPS = 1e-7      # ray-parameter margin around the origin
NODE_PAD = 1e-7   # slab-test padding for BVH node boxes
TRI_PAD = 1e-6    # slab-test padding for per-triangle boxes


def closest_on_triangles(tri: np.ndarray, q) -> tuple:
    """Closest point to q on each triangle: (points (m,3), sqdist (m,)).

    Region cascade over the Voronoi regions of the triangle (vertex A, B,
    edge AB, vertex C, edge AC, edge BC, face), evaluated branch-free with
    exclusion masks. Region denominators are nonzero for nondegenerate
    triangles (each reduces to a squared edge length or to twice the
    squared triangle area).
    """
    q = np.asarray(q, dtype=np.float64)
    a = tri[:, 0]
    b = tri[:, 1]
    c = tri[:, 2]
    ab = b - a
    ac = c - a
    ap = q - a
    d1 = ab[:, 0] * ap[:, 0] + ab[:, 1] * ap[:, 1] + ab[:, 2] * ap[:, 2]
    d2 = ac[:, 0] * ap[:, 0] + ac[:, 1] * ap[:, 1] + ac[:, 2] * ap[:, 2]
    bp = q - b
    d3 = ab[:, 0] * bp[:, 0] + ab[:, 1] * bp[:, 1] + ab[:, 2] * bp[:, 2]
    d4 = ac[:, 0] * bp[:, 0] + ac[:, 1] * bp[:, 1] + ac[:, 2] * bp[:, 2]
    cp = q - c
    d5 = ab[:, 0] * cp[:, 0] + ab[:, 1] * cp[:, 1] + ab[:, 2] * cp[:, 2]
    d6 = ac[:, 0] * cp[:, 0] + ac[:, 1] * cp[:, 1] + ac[:, 2] * cp[:, 2]
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    d43 = d4 - d3
    d56 = d5 - d6

    pts = np.empty_like(a)
    remain = np.ones(len(tri), dtype=bool)

    def claim(cond, value):
        sel = remain & cond
        pts[sel] = value[sel]
        remain[sel] = False

    with np.errstate(divide="ignore", invalid="ignore"):
        claim((d1 <= 0.0) & (d2 <= 0.0), a)
        claim((d3 >= 0.0) & (d4 <= d3), b)
        v_ab = d1 / (d1 - d3)
        claim((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), a + v_ab[:, None] * ab)
        claim((d6 >= 0.0) & (d5 <= d6), c)
        w_ac = d2 / (d2 - d6)
        claim((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), a + w_ac[:, None] * ac)
        w_bc = d43 / (d43 + d56)
        claim((va <= 0.0) & (d43 >= 0.0) & (d56 >= 0.0), b + w_bc[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v_f = vb * denom
        w_f = vc * denom
        pts[remain] = (a + ab * v_f[:, None] + ac * w_f[:, None])[remain]

    diff = pts - q
    sq = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    return pts, sq


def brute_closest(tri_pts, queries):
    n = len(queries)
    tids = np.empty(n, dtype=np.int64)
    pts = np.empty((n, 3), dtype=np.float64)
    sqd = np.empty(n, dtype=np.float64)
    for i in range(n):
        p, s = closest_on_triangles(tri_pts, queries[i])
        m = s.min()
        j = int(np.flatnonzero(s == m)[0])
        tids[i] = j
        pts[i] = p[j]
        sqd[i] = s[j]
    return tids, pts, sqd


def _box_sqdist(bmin_row, bmax_row, q) -> float:
    d = 0.0
    for axis in range(3):
        qa = q[axis]
        if qa < bmin_row[axis]:
            e = bmin_row[axis] - qa
        elif qa > bmax_row[axis]:
            e = qa - bmax_row[axis]
        else:
            continue
        d += e * e
    return d


def bvh_closest(tri_pts, bmin, bmax, left, right, start, count, leaf_tris, queries):
    n = len(queries)
    tids = np.empty(n, dtype=np.int64)
    pts = np.empty((n, 3), dtype=np.float64)
    sqd = np.empty(n, dtype=np.float64)
    for i in range(n):
        q = queries[i]
        best_sq = np.inf
        best_tid = -1
        best_pt = None
        stack = [(0, _box_sqdist(bmin[0], bmax[0], q))]
        while stack:
            node, dist = stack.pop()
            if dist > best_sq:  # strict: equal-distance boxes may hold ties
                continue
            if count[node] > 0:
                ids = leaf_tris[start[node]:start[node] + count[node]]
                p, s = closest_on_triangles(tri_pts[ids], q)
                for j in range(len(ids)):
                    sj = float(s[j])
                    tj = int(ids[j])
                    if sj < best_sq or (sj == best_sq and tj < best_tid):
                        best_sq = sj
                        best_tid = tj
                        best_pt = p[j]
            else:
                ln, rn = int(left[node]), int(right[node])
                ld = _box_sqdist(bmin[ln], bmax[ln], q)
                rd = _box_sqdist(bmin[rn], bmax[rn], q)
                if ld <= rd:  # nearer child on top of the stack
                    stack.append((rn, rd))
                    stack.append((ln, ld))
                else:
                    stack.append((ln, ld))
                    stack.append((rn, rd))
        tids[i] = best_tid
        pts[i] = best_pt
        sqd[i] = best_sq
    return tids, pts, sqd


def _ray_hits_boxes(bmin, bmax, o, d, pad):
    """Vectorized padded slab test for the ray (o, d), t >= 0, over (m,3) boxes."""
    t0 = np.zeros(len(bmin))
    t1 = np.full(len(bmin), np.inf)
    # axis-aligned rays give inv = inf on purpose; the C kernel divides the
    # same way silently, so suppress the warning rather than branch
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in range(3):
            inv = 1.0 / d[axis]
            ta = (bmin[:, axis] - pad - o[axis]) * inv
            tb = (bmax[:, axis] + pad - o[axis]) * inv
            if inv < 0.0:
                ta, tb = tb, ta
            t0 = np.maximum(t0, ta)
            t1 = np.minimum(t1, tb)
    return t0 <= t1


def _ray_hits_box(bmin_row, bmax_row, o, d, pad) -> bool:
    t0 = 0.0
    t1 = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in range(3):
            inv = 1.0 / d[axis]
            ta = (bmin_row[axis] - pad - o[axis]) * inv
            tb = (bmax_row[axis] + pad - o[axis]) * inv
            if inv < 0.0:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0 <= t1


def _crossings_in_set(tri, near_box, o, d):
    """Per-triangle parity contributions for triangles with near_box True.

    Returns (hit bool array, unsafe bool array) over the subset. A triangle
    whose padded box the ray misses contributes nothing: the ray provably
    misses the triangle itself, so skipping it keeps parity exact.
    """
    a = tri[:, 0]
    b = tri[:, 1]
    c = tri[:, 2]
    e1 = b - a
    e2 = c - a
    dx, dy, dz = float(d[0]), float(d[1]), float(d[2])
    hx = dy * e2[:, 2] - dz * e2[:, 1]
    hy = dz * e2[:, 0] - dx * e2[:, 2]
    hz = dx * e2[:, 1] - dy * e2[:, 0]
    det = e1[:, 0] * hx + e1[:, 1] * hy + e1[:, 2] * hz
    parallel = np.abs(det) < DET_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        sx = o[0] - a[:, 0]
        sy = o[1] - a[:, 1]
        sz = o[2] - a[:, 2]
        u = (sx * hx + sy * hy + sz * hz) * inv
        qx = sy * e1[:, 2] - sz * e1[:, 1]
        qy = sz * e1[:, 0] - sx * e1[:, 2]
        qz = sx * e1[:, 1] - sy * e1[:, 0]
        v = (dx * qx + dy * qy + dz * qz) * inv
        t = (e2[:, 0] * qx + e2[:, 1] * qy + e2[:, 2] * qz) * inv
        w = 1.0 - u - v
        potential = (u > -BARY_EPS) & (v > -BARY_EPS) & (w > -BARY_EPS) & (t > -T_EPS)
        border = (u < BARY_EPS) | (v < BARY_EPS) | (w < BARY_EPS) | (t < T_EPS)
    ok = near_box & ~parallel
    unsafe = near_box & (parallel | (ok & potential & border))
    hit = ok & potential & ~border
    return hit, unsafe


def brute_crossings(tri_pts, tri_bmin, tri_bmax, origins, direction):
    n = len(origins)
    counts = np.zeros(n, dtype=np.int64)
    unsafe = np.zeros(n, dtype=bool)
    d = np.asarray(direction, dtype=np.float64)
    for i in range(n):
        o = origins[i]
        near = _ray_hits_boxes(tri_bmin, tri_bmax, o, d, TRI_PAD)
        hit, uns = _crossings_in_set(tri_pts, near, o, d)
        counts[i] = int(hit.sum())
        unsafe[i] = bool(uns.any())
    return counts, unsafe


def bvh_crossings(tri_pts, bmin, bmax, left, right, start, count, leaf_tris,
                  tri_bmin, tri_bmax, origins, direction):
    n = len(origins)
    counts = np.zeros(n, dtype=np.int64)
    unsafe = np.zeros(n, dtype=bool)
    d = np.asarray(direction, dtype=np.float64)
    for i in range(n):
        o = origins[i]
        total = 0
        uns = False
        stack = [0]
        while stack:
            node = stack.pop()
            if not _ray_hits_box(bmin[node], bmax[node], o, d, NODE_PAD):
                continue
            if count[node] > 0:
                ids = leaf_tris[start[node]:start[node] + count[node]]
                near = _ray_hits_boxes(tri_bmin[ids], tri_bmax[ids], o, d, TRI_PAD)
                hit, uflags = _crossings_in_set(tri_pts[ids], near, o, d)
                total += int(hit.sum())
                uns = uns or bool(uflags.any())
            else:
                stack.append(int(right[node]))
                stack.append(int(left[node]))
        counts[i] = total
        unsafe[i] = uns
    return counts, unsafe

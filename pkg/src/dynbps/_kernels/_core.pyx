# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled scalar kernels: the bit-identical twin of dynbps._kernels._fallback.

Every floating-point expression here mirrors the fallback's operation order
(see that module's docstring for the contract). The extension is compiled
with -ffp-contract=off so a*b+c never fuses into fma, which would round
differently than numpy's separate multiply and add.

All query loops run without the GIL; callers may fan work out across
threads over disjoint output slots.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef double INF = float("inf")

cdef double DET_EPS = 1e-8
cdef double BARY_EPS = 1e-6
cdef double T_EPS = 1e-7
cdef double NODE_PAD = 1e-7
cdef double TRI_PAD = 1e-6

# traversal stacks are fixed C arrays of 128 entries; median splits halve the
# triangle range per level, so depth stays far below that for any real mesh


cdef inline double _closest_on_tri(const double* tri, const double* q, double* out) nogil:
    """Closest point on one triangle (9 doubles a,b,c) to q; returns sqdist."""
    cdef double a0 = tri[0], a1 = tri[1], a2 = tri[2]
    cdef double b0 = tri[3], b1 = tri[4], b2 = tri[5]
    cdef double c0 = tri[6], c1 = tri[7], c2 = tri[8]
    cdef double ab0 = b0 - a0, ab1 = b1 - a1, ab2 = b2 - a2
    cdef double ac0 = c0 - a0, ac1 = c1 - a1, ac2 = c2 - a2
    cdef double ap0 = q[0] - a0, ap1 = q[1] - a1, ap2 = q[2] - a2
    cdef double d1 = ab0 * ap0 + ab1 * ap1 + ab2 * ap2
    cdef double d2 = ac0 * ap0 + ac1 * ap1 + ac2 * ap2
    cdef double bp0, bp1, bp2, cp0, cp1, cp2
    cdef double d3, d4, d5, d6, vc, vb, va, d43, d56, v, w, denom
    cdef double p0, p1, p2, dx, dy, dz
    cdef bint done = False

    if d1 <= 0.0 and d2 <= 0.0:
        p0 = a0; p1 = a1; p2 = a2
        done = True
    if not done:
        bp0 = q[0] - b0; bp1 = q[1] - b1; bp2 = q[2] - b2
        d3 = ab0 * bp0 + ab1 * bp1 + ab2 * bp2
        d4 = ac0 * bp0 + ac1 * bp1 + ac2 * bp2
        if d3 >= 0.0 and d4 <= d3:
            p0 = b0; p1 = b1; p2 = b2
            done = True
    if not done:
        vc = d1 * d4 - d3 * d2
        if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            v = d1 / (d1 - d3)  # d1 - d3 = |ab|^2 > 0 in this region
            p0 = a0 + v * ab0; p1 = a1 + v * ab1; p2 = a2 + v * ab2
            done = True
    if not done:
        cp0 = q[0] - c0; cp1 = q[1] - c1; cp2 = q[2] - c2
        d5 = ab0 * cp0 + ab1 * cp1 + ab2 * cp2
        d6 = ac0 * cp0 + ac1 * cp1 + ac2 * cp2
        if d6 >= 0.0 and d5 <= d6:
            p0 = c0; p1 = c1; p2 = c2
            done = True
    if not done:
        vb = d5 * d2 - d1 * d6
        if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            w = d2 / (d2 - d6)  # = |ac|^2 > 0 here
            p0 = a0 + w * ac0; p1 = a1 + w * ac1; p2 = a2 + w * ac2
            done = True
    if not done:
        va = d3 * d6 - d5 * d4
        d43 = d4 - d3
        d56 = d5 - d6
        if va <= 0.0 and d43 >= 0.0 and d56 >= 0.0:
            w = d43 / (d43 + d56)  # = |bc|^2 > 0 here
            p0 = b0 + w * (c0 - b0); p1 = b1 + w * (c1 - b1); p2 = b2 + w * (c2 - b2)
            done = True
    if not done:
        denom = 1.0 / (va + vb + vc)  # = |ab x ac|^2 > 0 for nondegenerate tris
        v = vb * denom
        w = vc * denom
        p0 = a0 + ab0 * v + ac0 * w
        p1 = a1 + ab1 * v + ac1 * w
        p2 = a2 + ab2 * v + ac2 * w

    out[0] = p0; out[1] = p1; out[2] = p2
    dx = p0 - q[0]; dy = p1 - q[1]; dz = p2 - q[2]
    return dx * dx + dy * dy + dz * dz


cdef inline double _box_sqdist(const double* bmin_row, const double* bmax_row,
                               const double* q) nogil:
    cdef double dd = 0.0
    cdef double e
    cdef int axis
    for axis in range(3):
        if q[axis] < bmin_row[axis]:
            e = bmin_row[axis] - q[axis]
        elif q[axis] > bmax_row[axis]:
            e = q[axis] - bmax_row[axis]
        else:
            continue
        dd += e * e
    return dd


cdef inline bint _ray_box(const double* bmin_row, const double* bmax_row,
                          const double* o, const double* d, double pad) nogil:
    cdef double t0 = 0.0
    cdef double t1 = INF
    cdef double inv, ta, tb, tmp
    cdef int axis
    for axis in range(3):
        inv = 1.0 / d[axis]  # direction components are guaranteed nonzero
        ta = (bmin_row[axis] - pad - o[axis]) * inv
        tb = (bmax_row[axis] + pad - o[axis]) * inv
        if inv < 0.0:
            tmp = ta; ta = tb; tb = tmp
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    return t0 <= t1


cdef inline int _tri_parity(const double* tri, const double* tb_min, const double* tb_max,
                            const double* o, const double* d) nogil:
    """One triangle's parity contribution: 0 none, 1 crossing, 2 unsafe."""
    cdef double a0, a1, a2
    cdef double e1x, e1y, e1z, e2x, e2y, e2z
    cdef double hx, hy, hz, det, inv, sx, sy, sz
    cdef double u, v, t, w, qx, qy, qz

    if not _ray_box(tb_min, tb_max, o, d, TRI_PAD):
        return 0  # ray provably misses the triangle: parity unaffected
    a0 = tri[0]; a1 = tri[1]; a2 = tri[2]
    e1x = tri[3] - a0; e1y = tri[4] - a1; e1z = tri[5] - a2
    e2x = tri[6] - a0; e2y = tri[7] - a1; e2z = tri[8] - a2
    hx = d[1] * e2z - d[2] * e2y
    hy = d[2] * e2x - d[0] * e2z
    hz = d[0] * e2y - d[1] * e2x
    det = e1x * hx + e1y * hy + e1z * hz
    if fabs(det) < DET_EPS:
        return 2
    inv = 1.0 / det
    sx = o[0] - a0; sy = o[1] - a1; sz = o[2] - a2
    u = (sx * hx + sy * hy + sz * hz) * inv
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    w = 1.0 - u - v
    if u > -BARY_EPS and v > -BARY_EPS and w > -BARY_EPS and t > -T_EPS:
        if u < BARY_EPS or v < BARY_EPS or w < BARY_EPS or t < T_EPS:
            return 2
        return 1
    return 0


def brute_closest(const double[:, :, ::1] tri_pts, const double[:, ::1] queries):
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t nt = tri_pts.shape[0]
    tids_arr = np.empty(nq, dtype=np.int64)
    pts_arr = np.empty((nq, 3), dtype=np.float64)
    sqd_arr = np.empty(nq, dtype=np.float64)
    cdef cnp.int64_t[::1] tids = tids_arr
    cdef double[:, ::1] pts = pts_arr
    cdef double[::1] sqd = sqd_arr
    cdef Py_ssize_t i, t, best_t
    cdef double best_sq, sq
    cdef double ptbuf[3]
    cdef double best_pt[3]

    with nogil:
        for i in range(nq):
            best_sq = INF
            best_t = -1
            for t in range(nt):
                sq = _closest_on_tri(&tri_pts[t, 0, 0], &queries[i, 0], ptbuf)
                if sq < best_sq or (sq == best_sq and t < best_t):
                    best_sq = sq
                    best_t = t
                    best_pt[0] = ptbuf[0]; best_pt[1] = ptbuf[1]; best_pt[2] = ptbuf[2]
            tids[i] = best_t
            pts[i, 0] = best_pt[0]; pts[i, 1] = best_pt[1]; pts[i, 2] = best_pt[2]
            sqd[i] = best_sq
    return tids_arr, pts_arr, sqd_arr


def bvh_closest(const double[:, :, ::1] tri_pts,
                const double[:, ::1] bmin, const double[:, ::1] bmax,
                const cnp.int32_t[::1] left, const cnp.int32_t[::1] right,
                const cnp.int32_t[::1] start, const cnp.int32_t[::1] count,
                const cnp.int32_t[::1] leaf_tris,
                const double[:, ::1] queries):
    cdef Py_ssize_t nq = queries.shape[0]
    tids_arr = np.empty(nq, dtype=np.int64)
    pts_arr = np.empty((nq, 3), dtype=np.float64)
    sqd_arr = np.empty(nq, dtype=np.float64)
    cdef cnp.int64_t[::1] tids = tids_arr
    cdef double[:, ::1] pts = pts_arr
    cdef double[::1] sqd = sqd_arr
    cdef int stack_nodes[128]
    cdef double stack_dists[128]
    cdef int top, node, ln, rn
    cdef Py_ssize_t i, j, tid, best_t
    cdef double best_sq, sq, dist, ld, rd
    cdef double ptbuf[3]
    cdef double best_pt[3]

    with nogil:
        for i in range(nq):
            best_sq = INF
            best_t = -1
            stack_nodes[0] = 0
            stack_dists[0] = _box_sqdist(&bmin[0, 0], &bmax[0, 0], &queries[i, 0])
            top = 1
            while top > 0:
                top -= 1
                node = stack_nodes[top]
                dist = stack_dists[top]
                if dist > best_sq:  # strict: equal-distance boxes may hold ties
                    continue
                if count[node] > 0:
                    for j in range(start[node], start[node] + count[node]):
                        tid = leaf_tris[j]
                        sq = _closest_on_tri(&tri_pts[tid, 0, 0], &queries[i, 0], ptbuf)
                        if sq < best_sq or (sq == best_sq and tid < best_t):
                            best_sq = sq
                            best_t = tid
                            best_pt[0] = ptbuf[0]; best_pt[1] = ptbuf[1]; best_pt[2] = ptbuf[2]
                else:
                    ln = left[node]
                    rn = right[node]
                    ld = _box_sqdist(&bmin[ln, 0], &bmax[ln, 0], &queries[i, 0])
                    rd = _box_sqdist(&bmin[rn, 0], &bmax[rn, 0], &queries[i, 0])
                    if ld <= rd:  # nearer child on top of the stack
                        stack_nodes[top] = rn; stack_dists[top] = rd; top += 1
                        stack_nodes[top] = ln; stack_dists[top] = ld; top += 1
                    else:
                        stack_nodes[top] = ln; stack_dists[top] = ld; top += 1
                        stack_nodes[top] = rn; stack_dists[top] = rd; top += 1
            tids[i] = best_t
            pts[i, 0] = best_pt[0]; pts[i, 1] = best_pt[1]; pts[i, 2] = best_pt[2]
            sqd[i] = best_sq
    return tids_arr, pts_arr, sqd_arr


def brute_crossings(const double[:, :, ::1] tri_pts,
                    const double[:, ::1] tri_bmin, const double[:, ::1] tri_bmax,
                    const double[:, ::1] origins, const double[::1] direction):
    cdef Py_ssize_t nq = origins.shape[0]
    cdef Py_ssize_t nt = tri_pts.shape[0]
    counts_arr = np.zeros(nq, dtype=np.int64)
    unsafe_arr = np.zeros(nq, dtype=np.uint8)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef cnp.uint8_t[::1] unsafe = unsafe_arr
    cdef Py_ssize_t i, t
    cdef int code
    cdef cnp.int64_t total
    cdef bint uns

    with nogil:
        for i in range(nq):
            total = 0
            uns = False
            for t in range(nt):
                code = _tri_parity(&tri_pts[t, 0, 0], &tri_bmin[t, 0], &tri_bmax[t, 0],
                                   &origins[i, 0], &direction[0])
                if code == 1:
                    total += 1
                elif code == 2:
                    uns = True  # keep scanning: counts must match the fallback's
            counts[i] = total
            unsafe[i] = uns
    return counts_arr, unsafe_arr.view(np.bool_)


def bvh_crossings(const double[:, :, ::1] tri_pts,
                  const double[:, ::1] bmin, const double[:, ::1] bmax,
                  const cnp.int32_t[::1] left, const cnp.int32_t[::1] right,
                  const cnp.int32_t[::1] start, const cnp.int32_t[::1] count,
                  const cnp.int32_t[::1] leaf_tris,
                  const double[:, ::1] tri_bmin, const double[:, ::1] tri_bmax,
                  const double[:, ::1] origins, const double[::1] direction):
    cdef Py_ssize_t nq = origins.shape[0]
    counts_arr = np.zeros(nq, dtype=np.int64)
    unsafe_arr = np.zeros(nq, dtype=np.uint8)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef cnp.uint8_t[::1] unsafe = unsafe_arr
    cdef int stack[128]
    cdef int top, node
    cdef Py_ssize_t i, j, tid
    cdef int code
    cdef cnp.int64_t total
    cdef bint uns

    with nogil:
        for i in range(nq):
            total = 0
            uns = False
            stack[0] = 0
            top = 1
            while top > 0:
                top -= 1
                node = stack[top]
                if not _ray_box(&bmin[node, 0], &bmax[node, 0],
                                &origins[i, 0], &direction[0], NODE_PAD):
                    continue
                if count[node] > 0:
                    for j in range(start[node], start[node] + count[node]):
                        tid = leaf_tris[j]
                        code = _tri_parity(&tri_pts[tid, 0, 0], &tri_bmin[tid, 0],
                                           &tri_bmax[tid, 0], &origins[i, 0], &direction[0])
                        if code == 1:
                            total += 1
                        elif code == 2:
                            uns = True
                else:
                    stack[top] = right[node]; top += 1
                    stack[top] = left[node]; top += 1
            counts[i] = total
            unsafe[i] = uns
    return counts_arr, unsafe_arr.view(np.bool_)

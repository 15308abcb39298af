"""Procedural watertight meshes used by demos, benchmarks, and tests."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh, validate

# 12 triangles of a unit box with outward CCW winding, on the canonical
# vertex order (x + 2y + 4z bit pattern over corners of {0,1}^3)
_BOX_TRIS = np.array([
    [0, 2, 1], [1, 2, 3],  # z = 0 (normal -z)
    [4, 5, 6], [5, 7, 6],  # z = 1 (normal +z)
    [0, 1, 4], [1, 5, 4],  # y = 0 (normal -y)
    [2, 6, 3], [3, 6, 7],  # y = 1 (normal +y)
    [0, 4, 2], [2, 4, 6],  # x = 0 (normal -x)
    [1, 3, 5], [3, 7, 5],  # x = 1 (normal +x)
], dtype=np.int64)


def make_box(extents=(0.1, 0.1, 0.1), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with the given full extents, 12 triangles."""
    ext = np.asarray(extents, dtype=np.float64)
    ctr = np.asarray(center, dtype=np.float64)
    if ext.shape != (3,) or np.any(ext <= 0):
        raise ValueError(f"extents must be 3 positive lengths, got {extents!r}")
    corners = np.array([[(i >> a) & 1 for a in range(3)] for i in range(8)], dtype=np.float64)
    verts = (corners - 0.5) * ext + ctr
    return TriangleMesh(verts, _BOX_TRIS.copy(), watertight=True)


def make_icosphere(radius: float = 0.1, subdivisions: int = 3,
                   center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Icosahedron subdivided and projected to a sphere.

    Triangle count is 20 * 4**subdivisions (5120 at the default 3).
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    if subdivisions < 0 or subdivisions > 7:
        raise ValueError(f"subdivisions must be in [0, 7], got {subdivisions!r}")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    tris = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)

    verts = list(verts / np.linalg.norm(verts[0]))
    for _ in range(subdivisions):
        midpoint = {}

        def midpoint_index(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = 0.5 * (verts[a] + verts[b])
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        next_tris = []
        for a, b, c in tris:
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            next_tris += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        tris = np.array(next_tris, dtype=np.int64)

    pts = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(pts, tris, watertight=True)


def make_lblock(size: float = 0.1, thickness: float = 0.04,
                center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """An L-shaped prism: a box with one quadrant notched out.

    Nonconvex, watertight, asymmetric under all nontrivial rotations, which
    makes it a good probe for pose recovery without symmetry ambiguity.
    L cross-section in xy, extruded along z with the given thickness.
    """
    if not (0 < thickness and 0 < size):
        raise ValueError("size and thickness must be positive")
    s, h = size / 2.0, thickness / 2.0
    # L outline, CCW in the xy plane
    outline = np.array([
        [-s, -s], [s, -s], [s, 0.0], [0.0, 0.0], [0.0, s], [-s, s],
    ], dtype=np.float64)
    n = len(outline)
    bottom = np.column_stack([outline, np.full(n, -h)])
    top = np.column_stack([outline, np.full(n, h)])
    verts = np.vstack([bottom, top]) + np.asarray(center, dtype=np.float64)

    # caps via a fan from vertex 0; the L outline is star-shaped from there
    tris = []
    for i in range(1, n - 1):
        tris.append([0, i + 1, i])          # bottom, normal -z
        tris.append([n, n + i, n + i + 1])  # top, normal +z
    for i in range(n):
        j = (i + 1) % n
        tris.append([i, j, n + j])
        tris.append([i, n + j, n + i])
    mesh = TriangleMesh(verts, np.array(tris, dtype=np.int64))
    report = validate(mesh)
    assert report.watertight, "L-block construction must be watertight"
    return report.mesh

"""Shared fixtures: the mesh corpus and independent geometric oracles.

Oracles here deliberately avoid the library's own algorithms: the closest
point oracle uses plane projection plus edge segments instead of the region
cascade, and random meshes come from scipy's convex hull rather than our
own builders.
"""

import numpy as np
import pytest

from dynbps import TriangleMesh, build_bvh, make_box, make_grid, make_icosphere, make_lblock, validate


def random_hull_mesh(rng: np.random.Generator, n_points: int = 40,
                     scale: float = 0.06) -> TriangleMesh:
    """Random convex polytope, outward-oriented and watertight."""
    from scipy.spatial import ConvexHull

    raw = rng.normal(size=(n_points, 3))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    raw *= scale * rng.uniform(0.6, 1.0, (n_points, 1))
    hull = ConvexHull(raw)
    remap = {old: new for new, old in enumerate(hull.vertices)}
    verts = raw[hull.vertices]
    tris = np.array([[remap[i] for i in simp] for simp in hull.simplices])

    # qhull does not promise consistent winding; flip any face whose normal
    # points at the centroid
    center = verts.mean(axis=0)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    normals = np.cross(b - a, c - a)
    inward = np.einsum("ij,ij->i", normals, (a + b + c) / 3.0 - center) < 0
    tris[inward] = tris[inward][:, [0, 2, 1]]

    report = validate(TriangleMesh(verts, tris))
    assert report.watertight
    return report.mesh


def closest_point_oracle(mesh: TriangleMesh, q: np.ndarray) -> float:
    """Min distance from q to the surface, by a method independent of the
    region cascade: plane projection when the foot lies inside the triangle,
    else the best of the three edge segments."""
    best = np.inf
    for a, b, c in mesh.triangle_points:
        n = np.cross(b - a, c - a)
        nn = float(n @ n)
        if nn > 0:
            foot = q - (float((q - a) @ n) / nn) * n
            # barycentric via least squares against the two edge vectors
            m = np.column_stack([b - a, c - a])
            uv, *_ = np.linalg.lstsq(m, foot - a, rcond=None)
            if uv[0] >= 0 and uv[1] >= 0 and uv.sum() <= 1:
                best = min(best, float(np.linalg.norm(q - foot)))
        for p0, p1 in ((a, b), (b, c), (c, a)):
            d = p1 - p0
            t = float(np.clip((q - p0) @ d / (d @ d), 0.0, 1.0))
            best = min(best, float(np.linalg.norm(q - (p0 + t * d))))
    return best


@pytest.fixture(scope="session")
def cube():
    return make_box((0.1, 0.1, 0.1))


@pytest.fixture(scope="session")
def cuboid():
    return make_box((0.05, 0.05, 0.08))


@pytest.fixture(scope="session")
def sphere():
    return make_icosphere(0.06, 2)


@pytest.fixture(scope="session")
def lblock():
    return make_lblock(0.08, 0.03)


@pytest.fixture(scope="session")
def mesh_corpus(cube, cuboid, sphere, lblock):
    """Ten meshes: the four fixed shapes plus six random convex hulls."""
    rng = np.random.default_rng(0xC0FFEE)
    return [cube, cuboid, sphere, lblock] + [random_hull_mesh(rng) for _ in range(6)]


@pytest.fixture(scope="session")
def corpus_trees(mesh_corpus):
    return [build_bvh(m) for m in mesh_corpus]


@pytest.fixture(scope="session")
def grid():
    return make_grid()

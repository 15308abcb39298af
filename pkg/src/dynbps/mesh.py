"""Triangle mesh type, OBJ/STL parsing, and validation.

All geometry is in meters. Meshes are immutable after construction and can
be shared freely across worker threads.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshParseError

# triangles with area below this are degenerate and removed by validate()
MIN_TRIANGLE_AREA = 1e-12

_TOKEN_RE = re.compile(rb"\S+")


@dataclass(frozen=True)
class TriangleMesh:
    """An indexed triangle surface in its canonical placement.

    vertices: (V, 3) float64, meters.
    triangles: (T, 3) int64 vertex indices.
    watertight: set by validate(); False until then.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    watertight: bool = False

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {verts.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError(f"triangles must be (T, 3), got {tris.shape}")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertex coordinates must be finite")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValueError("triangle index out of range")
        verts.flags.writeable = False
        tris.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        # corner coordinates gathered once; this is what the kernels consume
        tri_pts = np.ascontiguousarray(verts[tris]) if tris.size else np.zeros((0, 3, 3))
        tri_pts.flags.writeable = False
        object.__setattr__(self, "_tri_pts", tri_pts)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def triangle_points(self) -> np.ndarray:
        """(T, 3, 3) corner coordinates, one row of three points per triangle."""
        return self._tri_pts

    def triangle_areas(self) -> np.ndarray:
        tp = self._tri_pts
        cross = np.cross(tp[:, 1] - tp[:, 0], tp[:, 2] - tp[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def max_vertex_radius(self) -> float:
        """Largest vertex distance from the origin (Lipschitz bound helper)."""
        if not len(self.vertices):
            return 0.0
        return float(np.sqrt((self.vertices**2).sum(axis=1).max()))

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "TriangleMesh":
        """A new mesh with vertices mapped through R @ v + t."""
        verts = self.vertices @ np.asarray(rotation, dtype=np.float64).T
        verts = verts + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(verts, self.triangles.copy(), watertight=self.watertight)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(): the cleaned mesh plus diagnostics.

    Degenerate triangles are removed from the returned mesh; duplicates are
    reported but kept. Edge lists hold (vertex, vertex) index pairs.
    """

    mesh: TriangleMesh
    degenerate_triangles: list = field(default_factory=list)
    duplicate_triangles: list = field(default_factory=list)
    boundary_edges: list = field(default_factory=list)
    nonmanifold_edges: list = field(default_factory=list)
    watertight: bool = False


def validate(mesh: TriangleMesh) -> ValidationReport:
    """Remove degenerate triangles and diagnose mesh topology.

    The report's mesh has its watertight flag set to True iff every edge of
    the cleaned surface is shared by exactly two triangles with opposite
    winding direction.
    """
    areas = mesh.triangle_areas()
    degenerate = np.flatnonzero(areas < MIN_TRIANGLE_AREA)
    keep = np.setdiff1d(np.arange(mesh.num_triangles), degenerate)
    tris = mesh.triangles[keep]

    duplicates = []
    seen = {}
    for row, tri_id in zip(tris, keep):
        key = tuple(sorted(row.tolist()))
        if key in seen:
            duplicates.append(int(tri_id))
        else:
            seen[key] = int(tri_id)

    directed = {}
    for row in tris:
        a, b, c = (int(v) for v in row)
        for edge in ((a, b), (b, c), (c, a)):
            directed[edge] = directed.get(edge, 0) + 1

    boundary = []
    nonmanifold = []
    seen_undirected = set()
    watertight = len(tris) > 0
    for (u, v), n_fwd in directed.items():
        und = (u, v) if u < v else (v, u)
        if und in seen_undirected:
            continue
        seen_undirected.add(und)
        n_rev = directed.get((v, u), 0)
        total = n_fwd + n_rev
        if total != 2 or n_fwd != 1 or n_rev != 1:
            watertight = False
        if total == 1:
            boundary.append(und)
        elif total > 2 or max(n_fwd, n_rev) > 1:
            nonmanifold.append(und)

    cleaned = TriangleMesh(mesh.vertices, tris, watertight=watertight)
    return ValidationReport(
        mesh=cleaned,
        degenerate_triangles=[int(i) for i in degenerate],
        duplicate_triangles=duplicates,
        boundary_edges=sorted(boundary),
        nonmanifold_edges=sorted(nonmanifold),
        watertight=watertight,
    )


def _as_bytes(data) -> bytes:
    if isinstance(data, bytes):
        return data
    if isinstance(data, str):
        return data.encode("utf-8")
    if hasattr(data, "read"):
        raw = data.read()
        return raw if isinstance(raw, bytes) else raw.encode("utf-8")
    raise TypeError(f"expected bytes, str, or a readable stream, got {type(data)!r}")


def parse_obj(data) -> TriangleMesh:
    """Parse the geometry subset of Wavefront OBJ.

    Only ``v`` and ``f`` records are honored; everything else (normals,
    textures, materials, groups) is ignored. Faces may be triangles or
    convex polygons, which are fan-triangulated. Negative indices count
    back from the vertices defined so far; positive indices are validated
    against the final vertex count. Texture/normal sub-indices (``f 1/2/3``)
    are ignored.
    """
    raw = _as_bytes(data)
    vertices = []
    faces = []  # (indices, line_no) with 0-based indices, negatives resolved

    for line_no, line in enumerate(raw.splitlines(), start=1):
        tokens = list(_TOKEN_RE.finditer(line))
        if not tokens or tokens[0].group().startswith(b"#"):
            continue
        rec = tokens[0].group()
        if rec == b"v":
            if len(tokens) < 4:
                raise MeshParseError("vertex record needs 3 coordinates", line_no,
                                     tokens[-1].end() + 1)
            coords = []
            for tok in tokens[1:4]:
                try:
                    coords.append(float(tok.group()))
                except ValueError:
                    raise MeshParseError(
                        f"bad vertex coordinate {tok.group().decode(errors='replace')!r}",
                        line_no, tok.start() + 1) from None
            if not all(np.isfinite(coords)):
                raise MeshParseError("non-finite vertex coordinate", line_no,
                                     tokens[1].start() + 1)
            vertices.append(coords)
        elif rec == b"f":
            if len(tokens) < 4:
                raise MeshParseError("face record needs at least 3 vertices", line_no,
                                     tokens[-1].end() + 1)
            idx = []
            for tok in tokens[1:]:
                head = tok.group().split(b"/")[0]
                try:
                    ref = int(head)
                except ValueError:
                    raise MeshParseError(
                        f"bad face index {tok.group().decode(errors='replace')!r}",
                        line_no, tok.start() + 1) from None
                if ref == 0:
                    raise MeshParseError("face index 0 is not allowed", line_no,
                                         tok.start() + 1)
                if ref < 0:
                    ref = len(vertices) + ref
                    if ref < 0:
                        raise MeshParseError("negative face index out of range",
                                             line_no, tok.start() + 1)
                else:
                    ref -= 1
                idx.append((ref, tok.start() + 1))
            for i in range(1, len(idx) - 1):
                faces.append(((idx[0], idx[i], idx[i + 1]), line_no))

    n_verts = len(vertices)
    triangles = []
    for (tri, line_no) in faces:
        for ref, col in tri:
            if ref >= n_verts:
                raise MeshParseError(f"face index {ref + 1} out of range "
                                     f"(mesh has {n_verts} vertices)", line_no, col)
        triangles.append([tri[0][0], tri[1][0], tri[2][0]])

    if n_verts < 4 or len(triangles) < 4:
        raise MeshParseError(f"mesh too small: {n_verts} vertices, "
                             f"{len(triangles)} triangles (need at least 4 of each)")
    return TriangleMesh(np.array(vertices), np.array(triangles))


def parse_stl(data) -> TriangleMesh:
    """Parse binary or ASCII STL, auto-detected.

    ASCII is assumed iff the payload starts with "solid" and parses as
    ASCII; otherwise the binary layout (80-byte header, uint32 facet count,
    50-byte facets) is used. Vertices are deduplicated by exact coordinate
    match; the triangle count is preserved.
    """
    raw = _as_bytes(data)
    if raw.lstrip()[:5] == b"solid":
        try:
            return _parse_stl_ascii(raw)
        except MeshParseError as ascii_err:
            # binary headers often start with "solid" too, so try that
            # layout; when both fail, the ASCII diagnosis is the useful one
            try:
                return _parse_stl_binary(raw)
            except MeshParseError:
                raise ascii_err from None
    return _parse_stl_binary(raw)


def _dedup_mesh(facet_pts: np.ndarray) -> TriangleMesh:
    flat = facet_pts.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriangleMesh(uniq, inverse.reshape(-1, 3))


def _parse_stl_binary(raw: bytes) -> TriangleMesh:
    if len(raw) < 84:
        raise MeshParseError(f"binary STL too short ({len(raw)} bytes, need >= 84)")
    (count,) = struct.unpack_from("<I", raw, 80)
    expected = 84 + 50 * count
    if len(raw) < expected:
        held = (len(raw) - 84) // 50
        raise MeshParseError(f"truncated binary STL: header declares {count} facets, "
                             f"payload holds {held}")
    if len(raw) > expected:
        raise MeshParseError(f"binary STL size mismatch: header declares {count} facets "
                             f"but {len(raw) - expected} extra bytes follow")
    if count == 0:
        raise MeshParseError("binary STL declares 0 facets")
    rec = np.frombuffer(raw, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)),
                                             ("attr", "<u2")]), count=count, offset=84)
    facet_pts = rec["v"].astype(np.float64)
    if not np.all(np.isfinite(facet_pts)):
        raise MeshParseError("non-finite vertex coordinate in binary STL")
    return _dedup_mesh(facet_pts)


def _parse_stl_ascii(raw: bytes) -> TriangleMesh:
    facets = []
    current = None
    for line_no, line in enumerate(raw.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        head = tokens[0].lower()
        if head == b"solid" or head == b"endsolid":
            continue
        if head == b"facet":
            if current is not None:
                raise MeshParseError("nested facet", line_no)
            current = []
        elif head == b"vertex":
            if current is None:
                raise MeshParseError("vertex outside facet", line_no)
            if len(tokens) != 4:
                raise MeshParseError("vertex record needs 3 coordinates", line_no)
            try:
                current.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise MeshParseError("bad vertex coordinate", line_no) from None
        elif head == b"endfacet":
            if current is None or len(current) != 3:
                raise MeshParseError("facet does not hold exactly 3 vertices", line_no)
            facets.append(current)
            current = None
        elif head in (b"outer", b"endloop"):
            continue
        else:
            raise MeshParseError(f"unexpected record {head.decode(errors='replace')!r}",
                                 line_no)
    if current is not None:
        raise MeshParseError("unterminated facet at end of file")
    if not facets:
        raise MeshParseError("ASCII STL holds no facets")
    return _dedup_mesh(np.array(facets, dtype=np.float64))


def load_mesh(path, validated: bool = True) -> TriangleMesh:
    """Load and (by default) validate a mesh from an .obj or .stl file."""
    path = Path(path)
    raw = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        mesh = parse_obj(raw)
    elif suffix == ".stl":
        mesh = parse_stl(raw)
    else:
        raise MeshParseError(f"unsupported mesh format {suffix!r} (expected .obj or .stl)")
    return validate(mesh).mesh if validated else mesh


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write a geometry-only OBJ file (v/f records)."""
    # repr of the Python float round-trips exactly; numpy scalar repr does not
    lines = [f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
             for v in mesh.vertices]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")

"""Basis point grids and static/dynamic surface encodings.

An encoding holds, per basis point, the vector to the nearest point of the
(optionally posed) surface; points inside a watertight surface get a zero
vector. Posed queries are evaluated by pulling the basis points back into
the canonical frame (query at R'(p - x), map results out by R), so one BVH
serves every pose.
"""

from __future__ import annotations

import csv
import io
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bvh import Bvh, _parity_inside, build_bvh, closest_points
from .errors import ContainmentError, GridMismatchError
from .mesh import TriangleMesh
from .rotations import Pose

DEFAULT_GRID_N = 4
DEFAULT_HALF_EXTENT = 0.07

THREADS_ENV = "DYNBPS_THREADS"


@dataclass(frozen=True)
class BasisPointSet:
    """A fixed, ordered set of 3D basis points.

    Grid-built sets keep their construction parameters; ad-hoc point sets
    have n_per_axis/half_extent as None. Index order for grids runs x
    fastest, then y, then z.
    """

    points: np.ndarray
    n_per_axis: int | None = None
    half_extent: float | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise ValueError(f"points must be a nonempty (N, 3) array, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("basis points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def num_points(self) -> int:
        return len(self.points)

    def grid_metadata(self) -> dict:
        return {
            "n_per_axis": self.n_per_axis,
            "half_extent": self.half_extent,
            "num_points": self.num_points,
        }


def make_grid(n_per_axis: int = DEFAULT_GRID_N,
              half_extent: float = DEFAULT_HALF_EXTENT) -> BasisPointSet:
    """Cubic grid of n^3 points spanning [-h, h]^3, endpoints included.

    Spacing is 2h/(n-1). Flat index k = ix + n*iy + n^2*iz.
    """
    if n_per_axis < 2:
        raise ValueError(f"n_per_axis must be >= 2, got {n_per_axis}")
    if half_extent <= 0:
        raise ValueError(f"half_extent must be positive, got {half_extent}")
    axis = np.linspace(-half_extent, half_extent, n_per_axis)
    zs, ys, xs = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
    return BasisPointSet(pts, n_per_axis=n_per_axis, half_extent=float(half_extent))


@dataclass(frozen=True)
class BpsEncoding:
    """Per-basis-point vectors to the surface, their magnitudes, and the
    interior flags. Entry order matches the generating BasisPointSet."""

    vectors: np.ndarray
    magnitudes: np.ndarray
    interior_mask: np.ndarray

    def __post_init__(self):
        vec = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        mag = np.ascontiguousarray(np.asarray(self.magnitudes, dtype=np.float64))
        mask = np.ascontiguousarray(np.asarray(self.interior_mask, dtype=bool))
        n = len(vec)
        if vec.shape != (n, 3) or mag.shape != (n,) or mask.shape != (n,):
            raise ValueError("vectors, magnitudes, interior_mask must be (N,3)/(N,)/(N,)")
        norms = np.sqrt(vec[:, 0] * vec[:, 0] + vec[:, 1] * vec[:, 1]
                        + vec[:, 2] * vec[:, 2])
        if np.any(np.abs(norms - mag) > 1e-12):
            raise ValueError("magnitudes do not match vector norms")
        if np.any(vec[mask] != 0.0):
            raise ValueError("interior entries must have zero vectors")
        for arr in (vec, mag, mask):
            arr.flags.writeable = False
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "magnitudes", mag)
        object.__setattr__(self, "interior_mask", mask)

    @property
    def num_points(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class EncodingDetail:
    """An encoding plus the query internals the gradient code needs."""

    encoding: BpsEncoding
    pose: Pose
    triangle_ids: np.ndarray     # closest triangle per basis point
    closest_world: np.ndarray    # closest surface point, world frame
    query_local: np.ndarray      # basis points pulled back to canonical frame


def magnitudes_only(enc: BpsEncoding) -> np.ndarray:
    """The magnitude channel of an encoding, order preserved."""
    return enc.magnitudes


def _resolve_bvh(mesh, bvh: Bvh | None) -> Bvh:
    if bvh is not None:
        return bvh
    if isinstance(mesh, Bvh):
        return mesh
    return build_bvh(mesh)


def encode_with_detail(bps: BasisPointSet, pose: Pose, mesh: TriangleMesh,
                       *, bvh: Bvh | None = None, interior: str = "zero",
                       method: str = "bvh") -> EncodingDetail:
    """encode_dynamic plus the internals (closest points, triangle ids)."""
    if interior not in ("zero", "skip"):
        raise ValueError(f"interior must be 'zero' or 'skip', got {interior!r}")
    tree = _resolve_bvh(mesh, bvh)
    mesh = tree.mesh
    q_local = np.ascontiguousarray(pose.inverse_transform_points(bps.points))
    tids, pts_local, dists = closest_points(tree, q_local, method=method)
    p_star = pts_local @ pose.rotation.T + pose.position
    vectors = p_star - bps.points

    if interior == "zero":
        if not mesh.watertight:
            raise ContainmentError(
                "interior='zero' needs a watertight mesh; encode with "
                "interior='skip' to treat every basis point as exterior")
        # containment of p_k in the posed surface == containment of the
        # pulled-back point in the canonical surface (rigid motion)
        mask = _parity_inside(tree, q_local, dists, method)
    else:
        if not mesh.watertight:
            warnings.warn("mesh is not watertight; treating every basis point "
                          "as exterior (interior='skip')", stacklevel=2)
        mask = np.zeros(len(q_local), dtype=bool)
    vectors[mask] = 0.0
    mags = np.sqrt(vectors[:, 0] * vectors[:, 0] + vectors[:, 1] * vectors[:, 1]
                   + vectors[:, 2] * vectors[:, 2])
    enc = BpsEncoding(vectors=vectors, magnitudes=mags, interior_mask=mask)
    return EncodingDetail(encoding=enc, pose=pose, triangle_ids=tids,
                          closest_world=p_star, query_local=q_local)


def encode_dynamic(bps: BasisPointSet, pose: Pose, mesh: TriangleMesh,
                   *, bvh: Bvh | None = None, interior: str = "zero",
                   method: str = "bvh") -> BpsEncoding:
    """Encoding of the mesh surface transformed by pose (R @ v + x)."""
    return encode_with_detail(bps, pose, mesh, bvh=bvh, interior=interior,
                              method=method).encoding


def encode_static(bps: BasisPointSet, mesh: TriangleMesh, *, bvh: Bvh | None = None,
                  interior: str = "zero", method: str = "bvh") -> BpsEncoding:
    """Encoding of the mesh in its canonical placement (identity pose)."""
    return encode_dynamic(bps, Pose.identity(), mesh, bvh=bvh,
                          interior=interior, method=method)


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if val < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {val}")
    return val


def encode_batch(bps: BasisPointSet, poses, meshes, *, workers: int | None = None,
                 interior: str = "zero", method: str = "bvh") -> list:
    """Encode a sequence of poses; output order always equals input order.

    poses: a sequence of Pose (with `meshes` a single mesh or Bvh) or of
    (Pose, mesh_id) pairs (with `meshes` a mapping id -> mesh or Bvh).
    Work is fanned out over threads; results land in per-pose slots, so any
    worker count yields bit-identical output to a sequential run.
    """
    if isinstance(meshes, (TriangleMesh, Bvh)):
        table = {None: meshes}
        entries = [(p, None) if isinstance(p, Pose) else tuple(p) for p in poses]
    else:
        table = dict(meshes)
        entries = [tuple(p) for p in poses]

    trees = {}
    for _, mid in entries:
        if mid not in table:
            raise KeyError(f"unknown mesh id {mid!r}")
        if mid not in trees:
            trees[mid] = _resolve_bvh(table[mid], None)

    def job(entry):
        pose, mid = entry
        return encode_dynamic(bps, pose, trees[mid].mesh, bvh=trees[mid],
                              interior=interior, method=method)

    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(entries) <= 1:
        return [job(e) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, entries))


# -- serialization ----------------------------------------------------------

def _floats(arr) -> list:
    return [float(v) for v in np.asarray(arr).ravel()]


def encoding_to_json(bps: BasisPointSet, entries) -> str:
    """JSON document for one or more (Pose, BpsEncoding) pairs."""
    payload = {
        "grid": bps.grid_metadata(),
        "points": [_floats(p) for p in bps.points],
        "entries": [
            {
                "pose": pose.to_dict(),
                "vectors": [_floats(v) for v in enc.vectors],
                "magnitudes": _floats(enc.magnitudes),
                "interior_mask": [bool(b) for b in enc.interior_mask],
            }
            for pose, enc in entries
        ],
    }
    return json.dumps(payload, indent=1)


def parse_encoding_json(text: str):
    """Inverse of encoding_to_json: (BasisPointSet, [(Pose, BpsEncoding), ...])."""
    try:
        payload = json.loads(text)
        grid = payload.get("grid", {})
        n = grid.get("n_per_axis")
        h = grid.get("half_extent")
        bps = BasisPointSet(np.array(payload["points"], dtype=np.float64),
                            n_per_axis=n, half_extent=h)
        out = []
        for entry in payload["entries"]:
            pose = Pose.from_dict(entry["pose"])
            enc = BpsEncoding(
                vectors=np.array(entry["vectors"], dtype=np.float64),
                magnitudes=np.array(entry["magnitudes"], dtype=np.float64),
                interior_mask=np.array(entry["interior_mask"], dtype=bool),
            )
            if enc.num_points != bps.num_points:
                raise ValueError(f"entry has {enc.num_points} rows for "
                                 f"{bps.num_points} basis points")
            out.append((pose, enc))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed encoding JSON: {exc}") from exc
    return bps, out


def encoding_to_csv(bps: BasisPointSet, enc: BpsEncoding) -> str:
    """Flat CSV: k, basis point, vector, magnitude, interior flag."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "px", "py", "pz", "vx", "vy", "vz", "mag", "interior"])
    for k in range(bps.num_points):
        p = bps.points[k]
        v = enc.vectors[k]
        writer.writerow([k, repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                         repr(float(v[0])), repr(float(v[1])), repr(float(v[2])),
                         repr(float(enc.magnitudes[k])), int(enc.interior_mask[k])])
    return buf.getvalue()


def parse_encoding_csv(text: str):
    """Inverse of encoding_to_csv: (points (N,3), BpsEncoding)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:9] != ["k", "px", "py", "pz", "vx", "vy", "vz", "mag", "interior"]:
        raise ValueError("malformed encoding CSV: missing or wrong header")
    pts, vecs, mags, mask = [], [], [], []
    try:
        for row in rows[1:]:
            if not row:
                continue
            pts.append([float(row[1]), float(row[2]), float(row[3])])
            vecs.append([float(row[4]), float(row[5]), float(row[6])])
            mags.append(float(row[7]))
            mask.append(bool(int(row[8])))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed encoding CSV row: {exc}") from exc
    if not pts:
        raise ValueError("encoding CSV holds no rows")
    enc = BpsEncoding(vectors=np.array(vecs), magnitudes=np.array(mags),
                      interior_mask=np.array(mask))
    return np.array(pts), enc


def check_grid_match(bps: BasisPointSet, observed_points: np.ndarray,
                     observed_meta: dict | None = None) -> None:
    """Raise GridMismatchError unless the observed encoding used this grid."""
    n_obs = len(observed_points)
    if n_obs != bps.num_points:
        raise GridMismatchError(
            f"observed encoding has {n_obs} basis points, expected {bps.num_points}")
    if observed_meta:
        for key in ("n_per_axis", "half_extent"):
            mine = bps.grid_metadata()[key]
            theirs = observed_meta.get(key)
            if theirs is not None and mine is not None and theirs != mine:
                raise GridMismatchError(
                    f"observed encoding grid {key}={theirs!r}, expected {mine!r}")
    if not np.allclose(observed_points, bps.points, rtol=0.0, atol=1e-12):
        raise GridMismatchError("observed encoding basis points differ from the "
                                "requested grid")

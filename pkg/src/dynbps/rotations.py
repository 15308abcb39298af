"""Rotation and pose utilities.

Conventions used throughout the package:
  - rotations are 3x3 matrices acting on column vectors (world = R @ local + x)
  - quaternions are (w, x, y, z), unit norm, canonicalized to w >= 0
  - tangent increments are world-frame and left-multiplied:
    apply_tangent(pose, dx, w) moves the rotation to exp([w]x) @ R
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoseError

ROTATION_TOL = 1e-9


def _check_rotation(R: np.ndarray, what: str = "rotation") -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise PoseError(f"{what} must be a 3x3 matrix, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise PoseError(f"{what} has non-finite entries")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > ROTATION_TOL:
        raise PoseError(f"{what} is not orthonormal (max |R'R - I| = {err:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > ROTATION_TOL:
        raise PoseError(f"{what} must have determinant +1, got {det!r}")
    return R


@dataclass(frozen=True)
class Pose:
    """Rigid placement: world point = rotation @ local point + position."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(-1)
        if pos.shape != (3,):
            raise PoseError(f"position must be a 3-vector, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise PoseError("position has non-finite entries")
        rot = np.ascontiguousarray(_check_rotation(self.rotation))
        pos = np.ascontiguousarray(pos)
        pos.flags.writeable = False
        rot.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def from_quaternion(cls, quaternion, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(position, dtype=np.float64),
                   quaternion_to_matrix(quaternion))

    def quaternion(self) -> np.ndarray:
        return matrix_to_quaternion(self.rotation)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        """Map local points to world: p @ R.T + x (row-vector form)."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.position

    def inverse_transform_points(self, points: np.ndarray) -> np.ndarray:
        """Map world points back to the local frame: (p - x) @ R."""
        return (np.asarray(points, dtype=np.float64) - self.position) @ self.rotation

    def to_dict(self) -> dict:
        return {"t": self.position.tolist(), "q": self.quaternion().tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        """Read {"t": [...], "q": [w,x,y,z]} or {"t": [...], "R": 3x3 rows}."""
        if not isinstance(data, dict):
            raise PoseError(f"pose must be a JSON object, got {type(data).__name__}")
        t = data.get("t", (0.0, 0.0, 0.0))
        if "q" in data and "R" in data:
            raise PoseError("pose gives both 'q' and 'R'; use one")
        if "q" in data:
            return cls.from_quaternion(data["q"], t)
        if "R" in data:
            return cls(np.asarray(t, dtype=np.float64), np.asarray(data["R"], dtype=np.float64))
        raise PoseError("pose needs a 'q' quaternion or an 'R' matrix")


@dataclass(frozen=True)
class RotationTangent:
    """Axis-angle increment at a base rotation, world frame, radians."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.omega, dtype=np.float64).reshape(-1))
        if w.shape != (3,) or not np.all(np.isfinite(w)):
            raise PoseError(f"tangent must be a finite 3-vector, got {self.omega!r}")
        w.flags.writeable = False
        object.__setattr__(self, "omega", w)


@dataclass(frozen=True)
class GoalSpec:
    """A target orientation for reorientation tasks."""

    rotation: np.ndarray

    def __post_init__(self):
        rot = np.ascontiguousarray(_check_rotation(self.rotation, "goal rotation"))
        rot.flags.writeable = False
        object.__setattr__(self, "rotation", rot)

    def relative_rotation(self, estimate: np.ndarray) -> np.ndarray:
        """Rotation still to perform: goal @ estimate.T (world frame)."""
        return self.rotation @ np.asarray(estimate, dtype=np.float64).T

    def angle_to(self, estimate: np.ndarray) -> float:
        return geodesic_distance(estimate, self.rotation)


def geodesic_distance(R1: np.ndarray, R2: np.ndarray) -> float:
    """Angle in [0, pi] of the rotation taking R1 to R2.

    arccos((trace(R1'R2) - 1) / 2), with the argument clamped so roundoff
    near 0 and pi cannot produce NaN.
    """
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    cos = 0.5 * (np.einsum("ij,ij->", R1, R2) - 1.0)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def quaternion_to_matrix(quaternion) -> np.ndarray:
    q = np.asarray(quaternion, dtype=np.float64).reshape(-1)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise PoseError(f"quaternion must be a finite 4-vector (w,x,y,z), got {quaternion!r}")
    norm = np.linalg.norm(q)
    if norm < 1e-12:
        raise PoseError("quaternion has (near) zero norm")
    if abs(norm - 1.0) > 1e-6:
        raise PoseError(f"quaternion norm {norm!r} too far from 1")
    w, x, y, z = q / norm
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w,x,y,z) of a rotation matrix, canonicalized to w >= 0.

    Uses the largest-pivot variant so the division is always well conditioned.
    """
    R = _check_rotation(R)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > max(R[0, 0], R[1, 1], R[2, 2]):
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    # q and -q encode the same rotation; pick a deterministic representative
    for v in q:
        if v > 0:
            break
        if v < 0:
            q = -q
            break
    return q


def _quaternions_to_matrices(q: np.ndarray) -> np.ndarray:
    """(n,4) unit quaternions to (n,3,3) matrices, vectorized."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((len(q), 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def sample_uniform_rotations(count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, 3, 3) Haar-uniform rotations from normalized Gaussian quaternions."""
    q = rng.standard_normal((count, 4))
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    # a 4D Gaussian lands at the origin with probability zero; guard anyway
    bad = norms[:, 0] < 1e-12
    while np.any(bad):
        q[bad] = rng.standard_normal((int(bad.sum()), 4))
        norms = np.linalg.norm(q, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-12
    return _quaternions_to_matrices(q / norms)


def sample_uniform_rotation(rng: np.random.Generator) -> np.ndarray:
    return sample_uniform_rotations(1, rng)[0]


def _build_octahedral() -> np.ndarray:
    from itertools import permutations, product

    mats = []
    for perm in permutations(range(3)):
        for signs in product((-1, 1), repeat=3):
            M = np.zeros((3, 3), dtype=np.int64)
            for row, (col, sg) in enumerate(zip(perm, signs)):
                M[row, col] = sg
            if round(np.linalg.det(M)) == 1:
                mats.append(M)
    mats.sort(key=lambda m: tuple(m.ravel()))
    out = np.array(mats, dtype=np.float64)
    out.flags.writeable = False
    return out


_OCTAHEDRAL = _build_octahedral()


def octahedral_group() -> np.ndarray:
    """The 24 proper rotations of the cube as a read-only (24, 3, 3) array.

    Entries are exactly -1, 0, or 1, so products and comparisons are exact
    in float64. Order is lexicographic by the flattened matrix.
    """
    return _OCTAHEDRAL


def box_symmetry_group(extents, rel_tol: float = 1e-12) -> np.ndarray:
    """Octahedral elements that map an axis-aligned box of these extents to itself.

    A signed permutation sending axis j to axis i preserves the box iff
    extents[i] == extents[j] (within rel_tol relatively). A cube keeps all
    24, a square prism 8, a box with three distinct extents 4.
    """
    ext = np.asarray(extents, dtype=np.float64)
    if ext.shape != (3,) or np.any(ext <= 0):
        raise ValueError(f"extents must be 3 positive lengths, got {extents!r}")
    scale = ext.max()
    keep = []
    for M in octahedral_group():
        rows, cols = np.nonzero(M)
        if np.all(np.abs(ext[rows] - ext[cols]) <= rel_tol * scale):
            keep.append(M)
    return np.array(keep)


def distance_mod_symmetry(estimate: np.ndarray, truth: np.ndarray,
                          group: np.ndarray | None = None) -> float:
    """min over symmetry elements S of geodesic_distance(estimate @ S, truth).

    With no group (or identity-only), this is the plain geodesic distance.
    """
    if group is None:
        return geodesic_distance(estimate, truth)
    group = np.asarray(group, dtype=np.float64)
    if group.ndim == 2:
        group = group[None]
    return min(geodesic_distance(estimate @ S, truth) for S in group)


def skew(omega) -> np.ndarray:
    """Cross-product matrix: skew(w) @ v == cross(w, v)."""
    x, y, z = np.asarray(omega, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_so3(omega) -> np.ndarray:
    """Rodrigues exponential of an axis-angle vector.

    The sinc forms stay exact through theta = 0, so no small-angle branch.
    """
    w = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    K = skew(w)
    a = np.sinc(theta / np.pi)                      # sin(t)/t
    b = 0.5 * np.sinc(theta / (2.0 * np.pi)) ** 2   # (1-cos(t))/t^2
    return np.eye(3) + a * K + b * (K @ K)


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
    return U @ Vt


def apply_tangent(pose: Pose, dx, omega) -> Pose:
    """Step a pose by a world-frame increment: x + dx, exp([w]x) @ R.

    The rotation product is projected back onto SO(3) so repeated small
    steps cannot drift out of the Pose validity tolerance.
    """
    if isinstance(omega, RotationTangent):
        omega = omega.omega
    dx = np.asarray(dx, dtype=np.float64).reshape(3)
    R = project_to_rotation(exp_so3(omega) @ pose.rotation)
    return Pose(pose.position + dx, R)

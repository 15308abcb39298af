"""Analytic pose derivatives of encoding magnitudes and of the magnitude gap.

The derivative of a point-to-surface distance holds the closest point fixed
(envelope theorem): with u_k the unit vector from basis point k to its
closest posed-surface point, the magnitude gradient is u_k with respect to
position and (p*_k - x) x u_k with respect to a world-frame rotation
tangent (the convention of rotations.apply_tangent). Entries are masked
invalid where no one-sided derivative exists: interior points and contact
(magnitude below 1e-9 m).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvh import Bvh, barycentric_coordinates
from .encoding import BasisPointSet, EncodingDetail, encode_with_detail
from .mesh import TriangleMesh
from .objectives import magnitude_gap
from .rotations import Pose

MIN_GRAD_MAGNITUDE = 1e-9
EDGE_BARY_TOL = 1e-7  # barycentric slack when classifying face/edge/vertex regions


@dataclass(frozen=True)
class PoseJacobian:
    """Per-basis-point derivatives of the encoding magnitudes.

    d_position[k] is d|v_k|/dx (dimensionless, norm 1 on valid entries);
    d_rotation[k] is d|v_k|/dw in meters/radian for the left world tangent.
    Invalid entries (interior or contact) are zeroed and flagged.
    """

    d_position: np.ndarray
    d_rotation: np.ndarray
    valid: np.ndarray
    magnitudes: np.ndarray


def grad_magnitudes(bps: BasisPointSet, pose: Pose, mesh: TriangleMesh, *,
                    bvh: Bvh | None = None, method: str = "bvh",
                    detail: EncodingDetail | None = None) -> PoseJacobian:
    if detail is None:
        detail = encode_with_detail(bps, pose, mesh, bvh=bvh, method=method)
    enc = detail.encoding
    mags = enc.magnitudes
    valid = (~enc.interior_mask) & (mags >= MIN_GRAD_MAGNITUDE)

    u = np.zeros_like(enc.vectors)
    u[valid] = enc.vectors[valid] / mags[valid, None]
    arm = detail.closest_world - pose.position
    d_rot = np.cross(arm, u)
    d_rot[~valid] = 0.0
    return PoseJacobian(d_position=u, d_rotation=d_rot, valid=valid, magnitudes=mags)


def grad_bps_distance(observed_mags, bps: BasisPointSet, pose: Pose,
                      mesh: TriangleMesh, *, bvh: Bvh | None = None,
                      method: str = "bvh"):
    """Magnitude-gap loss and its pose subgradient.

    Returns (value, d/dx (3,), d/dw (3,)). The value is the mean absolute
    magnitude difference over every basis point; the gradient applies the
    sign subgradient (sign(0) = 0) through grad_magnitudes, with invalid
    entries contributing zero.
    """
    observed = np.asarray(observed_mags, dtype=np.float64).reshape(-1)
    if observed.shape != (bps.num_points,):
        raise ValueError(f"observed magnitudes have shape {observed.shape}, "
                         f"expected ({bps.num_points},)")
    if np.any(observed < 0.0):
        raise ValueError("observed magnitudes must be nonnegative")
    detail = encode_with_detail(bps, pose, mesh, bvh=bvh, method=method)
    jac = grad_magnitudes(bps, pose, mesh, detail=detail)

    value = magnitude_gap(observed, jac.magnitudes)
    sign = np.sign(jac.magnitudes - observed)
    sign[~jac.valid] = 0.0
    scale = 1.0 / bps.num_points
    g_pos = scale * (sign[:, None] * jac.d_position).sum(axis=0)
    g_rot = scale * (sign[:, None] * jac.d_rotation).sum(axis=0)
    return value, g_pos, g_rot


def closest_point_regions(bps: BasisPointSet, pose: Pose, mesh: TriangleMesh, *,
                          bvh: Bvh | None = None, method: str = "bvh",
                          detail: EncodingDetail | None = None) -> list:
    """A discrete fingerprint of each basis point's closest-point region.

    Per point: "interior", "contact", or (triangle id, active-feature bits)
    where the bits mark barycentric coordinates near zero (face / edge /
    vertex classification). Gradient discontinuities coincide with changes
    in this fingerprint, which is what the finite-difference suite checks.
    """
    if detail is None:
        detail = encode_with_detail(bps, pose, mesh, bvh=bvh, method=method)
    enc = detail.encoding
    local_closest = (detail.closest_world - pose.position) @ pose.rotation
    tri_pts = mesh.triangle_points
    out = []
    for k in range(enc.num_points):
        if enc.interior_mask[k]:
            out.append("interior")
            continue
        if enc.magnitudes[k] < MIN_GRAD_MAGNITUDE:
            out.append("contact")
            continue
        tid = int(detail.triangle_ids[k])
        a, b, c = tri_pts[tid]
        bary = barycentric_coordinates(a, b, c, local_closest[k])
        bits = tuple(bool(v < EDGE_BARY_TOL) for v in bary)
        out.append((tid, bits))
    return out

"""Dynamic basis-point-set encodings of posed triangle meshes.

A fixed grid of basis points encodes a surface through the vectors to its
nearest surface points. Posing the surface rigidly and differentiating the
encoding with respect to the pose gives cheap analytic gradients, which is
enough to recover poses from observed encodings by descent. This package
provides the mesh tooling, the encoder, the gradients, the scalar
objectives, and a small CLI around them.

The closest-point and ray-parity kernels exist twice: a compiled extension
and a pure numpy fallback, selected at import (see dynbps._kernels). Both
produce bit-identical results.
"""

from ._kernels import available_backends, backend_name, set_backend
from .bench import BenchReport, compare_backends, result_checksum, run_benchmark
from .bvh import (Bvh, SurfacePoint, barycentric_coordinates, build_bvh,
                  closest_point_on_mesh, closest_point_on_triangle,
                  closest_points, contains_point, contains_points)
from .encoding import (BasisPointSet, BpsEncoding, EncodingDetail,
                       check_grid_match, default_workers, encode_batch,
                       encode_dynamic, encode_static, encode_with_detail,
                       encoding_to_csv, encoding_to_json, magnitudes_only,
                       make_grid, parse_encoding_csv, parse_encoding_json)
from .errors import (ContainmentError, DynbpsError, GridMismatchError,
                     MeshParseError, PoseError)
from .gradients import (PoseJacobian, closest_point_regions, grad_bps_distance,
                        grad_magnitudes)
from .mesh import (TriangleMesh, ValidationReport, load_mesh, parse_obj,
                   parse_stl, save_obj, validate)
from .objectives import (NllInputs, RewardParams, TrajectoryStep, bps_distance,
                         is_success, magnitude_gap, nll_loss, reward,
                         reward_terms)
from .recovery import RecoveryConfig, RecoveryResult, recover_pose, run_trials
from .rotations import (GoalSpec, Pose, RotationTangent, apply_tangent,
                        box_symmetry_group, distance_mod_symmetry, exp_so3,
                        geodesic_distance, matrix_to_quaternion,
                        octahedral_group, project_to_rotation,
                        quaternion_to_matrix, sample_uniform_rotation,
                        sample_uniform_rotations, skew)
from .shapes import make_box, make_icosphere, make_lblock

__version__ = "0.1.0"

__all__ = [
    "BasisPointSet", "BenchReport", "BpsEncoding", "Bvh", "ContainmentError",
    "DynbpsError", "EncodingDetail", "GoalSpec", "GridMismatchError",
    "MeshParseError", "NllInputs", "Pose", "PoseError", "PoseJacobian",
    "RecoveryConfig", "RecoveryResult", "RewardParams", "RotationTangent",
    "SurfacePoint", "TrajectoryStep", "TriangleMesh", "ValidationReport",
    "apply_tangent", "available_backends", "backend_name",
    "barycentric_coordinates", "box_symmetry_group", "bps_distance",
    "build_bvh", "check_grid_match", "closest_point_on_mesh",
    "closest_point_on_triangle", "closest_point_regions", "closest_points",
    "compare_backends", "contains_point", "contains_points", "default_workers",
    "distance_mod_symmetry", "encode_batch", "encode_dynamic", "encode_static",
    "encode_with_detail", "encoding_to_csv", "encoding_to_json", "exp_so3",
    "geodesic_distance", "grad_bps_distance", "grad_magnitudes", "is_success",
    "load_mesh", "magnitude_gap", "magnitudes_only", "make_box", "make_grid",
    "make_icosphere", "make_lblock", "matrix_to_quaternion", "nll_loss",
    "octahedral_group", "parse_encoding_csv", "parse_encoding_json",
    "parse_obj", "parse_stl", "project_to_rotation", "quaternion_to_matrix",
    "recover_pose", "result_checksum", "reward", "reward_terms",
    "run_benchmark", "run_trials", "sample_uniform_rotation",
    "sample_uniform_rotations", "save_obj", "set_backend", "skew", "validate",
]

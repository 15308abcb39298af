"""Scalar objectives: magnitude-gap distance, Gaussian NLL, reorientation
reward with one-sided progress clipping, and the success predicate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bvh import Bvh
from .encoding import BasisPointSet, encode_dynamic
from .mesh import TriangleMesh
from .rotations import Pose

N_DOF = 12
SUCCESS_ANGLE = 0.4  # radians, strict upper bound

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def magnitude_gap(observed, actual) -> float:
    """Mean absolute difference between two magnitude channels (meters).

    Symmetric in its arguments and zero exactly when the channels match,
    which makes it invariant to any rotation in the encoded mesh's symmetry
    group. This is the value channel shared with gradients.grad_bps_distance.
    """
    observed = np.asarray(observed, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if observed.shape != actual.shape:
        raise ValueError(f"magnitude shapes differ: {observed.shape} vs {actual.shape}")
    return float(np.mean(np.abs(observed - actual)))


def bps_distance(pred_pose: Pose, true_mags, bps: BasisPointSet,
                 mesh: TriangleMesh, *, bvh: Bvh | None = None,
                 method: str = "bvh") -> float:
    """Mean magnitude gap between an observed encoding and a candidate pose."""
    true_mags = np.asarray(true_mags, dtype=np.float64).reshape(-1)
    if np.any(true_mags < 0.0):
        raise ValueError("true magnitudes must be nonnegative")
    enc = encode_dynamic(bps, pred_pose, mesh, bvh=bvh, method=method)
    return magnitude_gap(true_mags, enc.magnitudes)


@dataclass(frozen=True)
class NllInputs:
    """Per-timestep distances and their Gaussian scales.

    All four arrays share one length L; scalar sigmas broadcast. The loss
    sums every entry and normalizes by `horizon`, which defaults to L - 1
    (L entries read as timesteps 0..L-1, normalizer the final index). A
    single-entry input needs an explicit horizon.
    """

    d_v: np.ndarray
    d_R: np.ndarray
    sigma_v: np.ndarray
    sigma_R: np.ndarray
    horizon: int | None = None

    def __post_init__(self):
        dv = np.atleast_1d(np.asarray(self.d_v, dtype=np.float64))
        dr = np.atleast_1d(np.asarray(self.d_R, dtype=np.float64))
        if dv.ndim != 1 or dv.shape != dr.shape or len(dv) == 0:
            raise ValueError("d_v and d_R must be equal-length nonempty 1D arrays")
        sv = np.broadcast_to(np.asarray(self.sigma_v, dtype=np.float64), dv.shape).copy()
        sr = np.broadcast_to(np.asarray(self.sigma_R, dtype=np.float64), dv.shape).copy()
        if np.any(sv <= 0.0) or np.any(sr <= 0.0):
            raise ValueError("sigmas must be strictly positive")
        horizon = self.horizon
        if horizon is None:
            horizon = len(dv) - 1
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon} "
                             f"(single-entry inputs need an explicit horizon)")
        for arr in (dv, dr, sv, sr):
            arr.flags.writeable = False
        object.__setattr__(self, "d_v", dv)
        object.__setattr__(self, "d_R", dr)
        object.__setattr__(self, "sigma_v", sv)
        object.__setattr__(self, "sigma_R", sr)
        object.__setattr__(self, "horizon", int(horizon))


def _log_phi(d: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    # log of the zero-mean Normal pdf, numerically stable form
    ratio = d / sigma
    return -0.5 * ratio * ratio - np.log(sigma) - _HALF_LOG_2PI


def nll_loss(inputs: NllInputs) -> float:
    """Negative log-likelihood of the distance traces under zero-mean Normals.

    -(1/horizon) * sum over entries of [log phi(d_v | sigma_v) +
    log phi(d_R | sigma_R)].
    """
    total = np.sum(_log_phi(inputs.d_v, inputs.sigma_v)
                   + _log_phi(inputs.d_R, inputs.sigma_R))
    return float(-total / inputs.horizon)


@dataclass(frozen=True)
class RewardParams:
    """Reorientation reward coefficients and the progress clip."""

    lam_theta: float = 1.0
    lam_x: float = 8.0
    lam_q: float = 1.0 / 6.0
    theta_clip: float = 0.1

    def __post_init__(self):
        for name in ("lam_theta", "lam_x", "lam_q", "theta_clip"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v!r}")


@dataclass(frozen=True)
class TrajectoryStep:
    """One trajectory sample: angle to goal, object position, joint angles,
    plus the episode's initial references the penalties are measured from."""

    theta: float
    position: np.ndarray
    joints: np.ndarray
    initial_position: np.ndarray
    initial_joints: np.ndarray

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta!r}")
        pos = np.asarray(self.position, dtype=np.float64).reshape(-1)
        jnt = np.asarray(self.joints, dtype=np.float64).reshape(-1)
        pos0 = np.asarray(self.initial_position, dtype=np.float64).reshape(-1)
        jnt0 = np.asarray(self.initial_joints, dtype=np.float64).reshape(-1)
        if pos.shape != (3,) or pos0.shape != (3,):
            raise ValueError("positions must be 3-vectors")
        if jnt.shape != (N_DOF,) or jnt0.shape != (N_DOF,):
            raise ValueError(f"joint vectors must have length {N_DOF}, "
                             f"got {jnt.shape} and {jnt0.shape}")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "joints", jnt)
        object.__setattr__(self, "initial_position", pos0)
        object.__setattr__(self, "initial_joints", jnt0)


def reward_terms(prev: TrajectoryStep, curr: TrajectoryStep,
                 params: RewardParams | None = None) -> dict:
    """Reward decomposition: rotation progress (clipped one-sidedly: gains
    cap at theta_clip, regressions are penalized in full), position-drift
    penalty, and the quartic joint-deviation penalty."""
    if params is None:
        params = RewardParams()
    if not (np.array_equal(prev.initial_position, curr.initial_position)
            and np.array_equal(prev.initial_joints, curr.initial_joints)):
        raise ValueError("steps do not share initial references")
    rotation = params.lam_theta * min(prev.theta - curr.theta, params.theta_clip)
    drift_prev = float(np.linalg.norm(prev.position - prev.initial_position))
    drift_curr = float(np.linalg.norm(curr.position - curr.initial_position))
    position = -params.lam_x * (drift_curr - drift_prev)
    dev = curr.joints - curr.initial_joints
    joints = -params.lam_q * float(np.sum(dev ** 4))
    return {
        "rotation": rotation,
        "position": position,
        "joints": joints,
        "total": rotation + position + joints,
    }


def reward(prev: TrajectoryStep, curr: TrajectoryStep,
           params: RewardParams | None = None) -> float:
    return reward_terms(prev, curr, params)["total"]


def is_success(theta_final: float, threshold: float = SUCCESS_ANGLE) -> bool:
    """True iff the final angle to goal is strictly below the threshold."""
    if not (0.0 <= theta_final <= math.pi):
        raise ValueError(f"theta must lie in [0, pi], got {theta_final!r}")
    return theta_final < threshold

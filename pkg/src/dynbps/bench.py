"""Benchmark harness for the encoding kernels.

Times brute-force against BVH-backed batch encoding (and sequential against
threaded) over seeded random poses. Correctness comes first: results are
checksummed and a timing is only meaningful when every variant produced
byte-identical encodings. Wall times naturally vary run to run; the
checksums never do.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .bvh import build_bvh
from .encoding import BasisPointSet, encode_batch, make_grid
from .mesh import TriangleMesh
from .rotations import Pose, sample_uniform_rotations


@dataclass(frozen=True)
class BenchReport:
    """One benchmark run. speedup = brute_seconds / bvh_seconds; the
    checksums_match flag gates whether the timings mean anything."""

    mesh_id: str
    backend: str
    num_triangles: int
    num_poses: int
    num_queries: int
    threads: int
    brute_seconds: float
    bvh_seconds: float
    parallel_seconds: float
    speedup: float
    encodings_per_second: float
    checksum_brute: str
    checksum_bvh: str
    checksum_parallel: str
    checksums_match: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def result_checksum(encodings) -> str:
    """sha256 over the raw bytes of the encodings, order-sensitive."""
    h = hashlib.sha256()
    for enc in encodings:
        h.update(enc.vectors.tobytes())
        h.update(enc.magnitudes.tobytes())
        h.update(np.ascontiguousarray(enc.interior_mask, dtype=np.uint8).tobytes())
    return h.hexdigest()


def bench_poses(count: int, seed: int) -> list:
    """Seeded random poses: uniform rotations, translations in [-2, 2] cm."""
    rng = np.random.default_rng(seed)
    rotations = sample_uniform_rotations(count, rng)
    translations = rng.uniform(-0.02, 0.02, (count, 3))
    return [Pose(t, r) for t, r in zip(translations, rotations)]


def run_benchmark(mesh: TriangleMesh, bps: BasisPointSet | None = None, *,
                  n_poses: int = 20, seed: int = 0, threads: int = 1,
                  mesh_id: str = "mesh", interior: str = "zero") -> BenchReport:
    from ._kernels import backend_name

    if bps is None:
        bps = make_grid()
    tree = build_bvh(mesh)
    poses = bench_poses(n_poses, seed)

    t0 = time.perf_counter()
    enc_brute = encode_batch(bps, poses, tree, workers=1, interior=interior,
                             method="brute")
    t_brute = time.perf_counter() - t0

    t0 = time.perf_counter()
    enc_bvh = encode_batch(bps, poses, tree, workers=1, interior=interior,
                           method="bvh")
    t_bvh = time.perf_counter() - t0

    t0 = time.perf_counter()
    enc_par = encode_batch(bps, poses, tree, workers=max(threads, 1),
                           interior=interior, method="bvh")
    t_par = time.perf_counter() - t0

    sums = [result_checksum(e) for e in (enc_brute, enc_bvh, enc_par)]
    return BenchReport(
        mesh_id=mesh_id,
        backend=backend_name(),
        num_triangles=mesh.num_triangles,
        num_poses=n_poses,
        num_queries=n_poses * bps.num_points,
        threads=threads,
        brute_seconds=t_brute,
        bvh_seconds=t_bvh,
        parallel_seconds=t_par,
        speedup=t_brute / t_bvh if t_bvh > 0 else float("inf"),
        encodings_per_second=n_poses / t_bvh if t_bvh > 0 else float("inf"),
        checksum_brute=sums[0],
        checksum_bvh=sums[1],
        checksum_parallel=sums[2],
        checksums_match=len(set(sums)) == 1,
    )


def compare_backends(mesh: TriangleMesh, bps: BasisPointSet | None = None, *,
                     n_poses: int = 20, seed: int = 0, threads: int = 1,
                     mesh_id: str = "mesh") -> dict:
    """Run the benchmark once per available backend; restores the backend.

    Returns {backend name: BenchReport}. Cross-backend checksums are part
    of the determinism contract and can be compared directly.
    """
    from ._kernels import available_backends, backend_name, set_backend

    current = backend_name()
    reports = {}
    try:
        for name in available_backends():
            set_backend(name)
            reports[name] = run_benchmark(mesh, bps, n_poses=n_poses, seed=seed,
                                          threads=threads, mesh_id=mesh_id)
    finally:
        set_backend(current)
    return reports

"""End-to-end CLI runs through main(argv): codes, formats, determinism."""

import csv
import io
import json

import numpy as np
import pytest

from dynbps import (
    Pose,
    encode_dynamic,
    make_box,
    make_grid,
    parse_encoding_csv,
    parse_encoding_json,
    save_obj,
)
from dynbps.cli import main

CUBE_SIDE = (0.1, 0.1, 0.1)
POSE_JSON = '{"t": [0.004, -0.002, 0.001], "q": [0.9689124217106447, 0.0, 0.0, 0.24740395925452294]}'


@pytest.fixture(scope="module")
def cube_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "cube.obj"
    save_obj(make_box(CUBE_SIDE), path)
    return str(path)


@pytest.fixture(scope="module")
def open_obj(tmp_path_factory):
    mesh = make_box(CUBE_SIDE)
    path = tmp_path_factory.mktemp("meshes") / "open.obj"
    lines = [f"v {v[0]!r} {v[1]!r} {v[2]!r}" for v in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles[:-1]]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEncode:
    def test_csv_shape(self, capsys, cube_obj):
        code, out, err = run(capsys, "encode", "--mesh", cube_obj)
        assert code == 0
        lines = out.strip().split("\n")
        assert len(lines) == 65
        assert lines[0] == "k,px,py,pz,vx,vy,vz,mag,interior"

    def test_reruns_are_byte_identical(self, capsys, cube_obj):
        _, out1, _ = run(capsys, "encode", "--mesh", cube_obj, "--pose", POSE_JSON)
        _, out2, _ = run(capsys, "encode", "--mesh", cube_obj, "--pose", POSE_JSON)
        assert out1 == out2

    def test_csv_matches_library(self, capsys, cube_obj):
        code, out, _ = run(capsys, "encode", "--mesh", cube_obj,
                           "--pose", POSE_JSON)
        assert code == 0
        pts, enc = parse_encoding_csv(out)
        bps = make_grid()
        pose = Pose.from_dict(json.loads(POSE_JSON))
        ref = encode_dynamic(bps, pose, make_box(CUBE_SIDE))
        assert np.array_equal(pts, bps.points)
        assert np.array_equal(enc.vectors, ref.vectors)
        assert np.array_equal(enc.interior_mask, ref.interior_mask)

    def test_json_round_trip(self, capsys, cube_obj):
        code, out, _ = run(capsys, "encode", "--mesh", cube_obj,
                           "--format", "json")
        assert code == 0
        bps, entries = parse_encoding_json(out)
        assert bps.num_points == 64
        assert len(entries) == 1
        ref = encode_dynamic(make_grid(), Pose.identity(), make_box(CUBE_SIDE))
        assert np.array_equal(entries[0][1].vectors, ref.vectors)

    def test_pose_from_file(self, capsys, cube_obj, tmp_path):
        pose_file = tmp_path / "pose.json"
        pose_file.write_text(POSE_JSON)
        _, via_file, _ = run(capsys, "encode", "--mesh", cube_obj,
                             "--pose", str(pose_file))
        _, inline, _ = run(capsys, "encode", "--mesh", cube_obj,
                           "--pose", POSE_JSON)
        assert via_file == inline

    def test_out_file_equals_stdout(self, capsys, cube_obj, tmp_path):
        dest = tmp_path / "enc.csv"
        code, out, _ = run(capsys, "encode", "--mesh", cube_obj)
        code2, silent, _ = run(capsys, "encode", "--mesh", cube_obj,
                               "--out", str(dest))
        assert code == code2 == 0
        assert silent == ""
        assert dest.read_text() == out

    def test_custom_grid(self, capsys, cube_obj):
        code, out, _ = run(capsys, "encode", "--mesh", cube_obj,
                           "--grid", "3", "--half-extent", "0.09")
        assert code == 0
        assert len(out.strip().split("\n")) == 28

    def test_open_mesh_needs_skip(self, capsys, open_obj):
        code, _, err = run(capsys, "encode", "--mesh", open_obj)
        assert code == 3
        assert "watertight" in err
        with pytest.warns(UserWarning, match="watertight"):
            code, out, _ = run(capsys, "encode", "--mesh", open_obj,
                               "--interior", "skip")
        assert code == 0
        _, enc = parse_encoding_csv(out)
        assert not enc.interior_mask.any()

    def test_missing_mesh_is_data_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "encode", "--mesh", str(tmp_path / "no.obj"))
        assert code == 3
        assert "error:" in err

    def test_malformed_pose_is_data_error(self, capsys, cube_obj):
        code, _, err = run(capsys, "encode", "--mesh", cube_obj,
                           "--pose", '{"t": [0, 0]}')
        assert code == 3
        assert "error:" in err


class TestRecover:
    def observed_file(self, capsys, cube_obj, tmp_path, fmt="csv", pose=None):
        dest = tmp_path / f"obs.{fmt}"
        argv = ["encode", "--mesh", cube_obj, "--format", fmt,
                "--out", str(dest)]
        if pose:
            argv += ["--pose", pose]
        assert main(argv) == 0
        capsys.readouterr()
        return str(dest)

    def test_perfect_observation_converges_immediately(self, capsys, cube_obj,
                                                       tmp_path):
        obs = self.observed_file(capsys, cube_obj, tmp_path)
        code, out, _ = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", obs)
        assert code == 0
        report = json.loads(out)
        (trial,) = report["trials"]
        assert trial["converged"]
        assert trial["iterations"] == 0
        assert trial["final_dv"] == 0.0
        assert report["aggregate"]["success_fraction"] == 1.0

    def test_json_observation_and_real_descent(self, capsys, cube_obj, tmp_path):
        obs = self.observed_file(capsys, cube_obj, tmp_path, fmt="json",
                                 pose=POSE_JSON)
        code, out, _ = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", obs, "--symmetry", "cube")
        assert code == 0
        report = json.loads(out)
        (trial,) = report["trials"]
        assert trial["converged"]
        assert trial["initial_dv"] > trial["final_dv"]
        assert trial["final_dv"] < 1e-5
        assert trial["monotone"]

    def test_trials_are_seeded(self, capsys, cube_obj, tmp_path):
        obs = self.observed_file(capsys, cube_obj, tmp_path)
        argv = ("recover", "--mesh", cube_obj, "--observed", obs,
                "--trials", "3", "--perturb-rot", "0.1",
                "--perturb-trans", "0.003", "--seed", "5")
        _, out1, _ = run(capsys, *argv)
        _, out2, _ = run(capsys, *argv)
        assert out1 == out2
        report = json.loads(out1)
        assert report["aggregate"]["n_trials"] == 3
        assert report["aggregate"]["all_monotone"]

    def test_grid_mismatch_reports_both_counts(self, capsys, cube_obj, tmp_path):
        dest = tmp_path / "obs27.csv"
        assert main(["encode", "--mesh", cube_obj, "--grid", "3",
                     "--out", str(dest)]) == 0
        capsys.readouterr()
        code, _, err = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", str(dest))
        assert code == 3
        assert "27" in err and "64" in err

    def test_unknown_symmetry_is_data_error(self, capsys, cube_obj, tmp_path):
        obs = self.observed_file(capsys, cube_obj, tmp_path)
        code, _, err = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", obs, "--symmetry", "dodecahedron")
        assert code == 3
        assert "symmetry" in err

    def test_box_symmetry_flag(self, capsys, cube_obj, tmp_path):
        obs = self.observed_file(capsys, cube_obj, tmp_path)
        code, out, _ = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", obs, "--symmetry", "box:0.1,0.1,0.1")
        assert code == 0
        assert json.loads(out)["aggregate"]["success_fraction"] == 1.0

    def test_solver_config_file(self, capsys, cube_obj, tmp_path):
        obs = self.observed_file(capsys, cube_obj, tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"max_iters": 7, "dv_tol": 1e-9}')
        code, out, _ = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", obs, "--config", str(cfg))
        assert code == 0
        assert json.loads(out)["config"]["max_iters"] == 7

    def test_missing_observed_file(self, capsys, cube_obj, tmp_path):
        code, _, err = run(capsys, "recover", "--mesh", cube_obj,
                           "--observed", str(tmp_path / "nope.csv"))
        assert code == 3


class TestBench:
    def test_single_backend_report(self, capsys, cube_obj):
        code, out, _ = run(capsys, "bench", "--mesh", cube_obj,
                           "--poses", "3", "--threads", "2")
        assert code == 0
        report = json.loads(out)
        assert report["checksums_match"]
        assert report["num_poses"] == 3
        assert report["checksum_brute"] == report["checksum_bvh"]
        assert report["brute_seconds"] > 0.0

    def test_both_backends_agree(self, capsys, cube_obj):
        code, out, _ = run(capsys, "bench", "--mesh", cube_obj,
                           "--poses", "2", "--backend", "both")
        assert code == 0
        payload = json.loads(out)
        sums = {r["checksum_bvh"] for r in payload.values()}
        assert len(sums) == 1
        assert all(r["checksums_match"] for r in payload.values())

    def test_explicit_fallback_backend(self, capsys, cube_obj):
        code, out, _ = run(capsys, "bench", "--mesh", cube_obj,
                           "--poses", "2", "--backend", "fallback")
        assert code == 0
        assert json.loads(out)["backend"] == "fallback"


class TestGroup:
    def test_json_form(self, capsys):
        code, out, _ = run(capsys, "group")
        assert code == 0
        entries = json.loads(out)
        assert len(entries) == 24
        mats = []
        for e in entries:
            R = np.array(e["R"])
            assert R.dtype.kind == "i"
            assert np.array_equal(R @ R.T, np.eye(3, dtype=int))
            assert round(np.linalg.det(R)) == 1
            q = np.array(e["q"])
            assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
            mats.append(tuple(R.ravel().tolist()))
        assert len(set(mats)) == 24

    def test_csv_form(self, capsys):
        code, out, _ = run(capsys, "group", "--format", "csv")
        assert code == 0
        rows = [r for r in csv.reader(io.StringIO(out)) if r]
        assert len(rows) == 24
        for row in rows:
            assert len(row) == 4
            q = np.array([float(v) for v in row])
            assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)


class TestReward:
    HEADER = "theta,px,py,pz," + ",".join(f"j{i}" for i in range(12))

    def trajectory_file(self, tmp_path, rows, header=True):
        path = tmp_path / "traj.csv"
        lines = [self.HEADER] if header else []
        lines += [",".join(repr(float(v)) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
        return str(path)

    def spot_rows(self):
        z12 = [0.0] * 12
        return [
            [0.5, 0.0, 0.0, 0.0] + z12,
            [0.3, 0.0, 0.0, 0.0] + z12,            # clipped gain: +0.1
            [0.5, 0.0, 0.0, 0.0] + z12,            # full regression: -0.2
            [0.5, 0.01, 0.0, 0.0] + [0.1] * 12,    # drift and joints: -0.0802
        ]

    def test_spot_values(self, capsys, tmp_path):
        traj = self.trajectory_file(tmp_path, self.spot_rows())
        code, out, _ = run(capsys, "reward", "--trajectory", traj)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 3
        totals = [float(r["total"]) for r in rows]
        assert totals[0] == pytest.approx(0.1, abs=1e-12)
        assert totals[1] == pytest.approx(-0.2, abs=1e-12)
        assert totals[2] == pytest.approx(-0.0802, abs=1e-12)
        assert float(rows[-1]["cumulative"]) == pytest.approx(-0.1802, abs=1e-12)

    def test_headerless_trajectory(self, capsys, tmp_path):
        traj = self.trajectory_file(tmp_path, self.spot_rows(), header=False)
        code, out, _ = run(capsys, "reward", "--trajectory", traj)
        assert code == 0
        assert len(out.strip().split("\n")) == 4

    def test_params_override(self, capsys, tmp_path):
        traj = self.trajectory_file(tmp_path, self.spot_rows()[:2])
        params = tmp_path / "params.json"
        params.write_text('{"lam_theta": 2.0, "theta_clip": 0.3}')
        code, out, _ = run(capsys, "reward", "--trajectory", traj,
                           "--params", str(params))
        assert code == 0
        (row,) = list(csv.DictReader(io.StringIO(out)))
        assert float(row["rotation"]) == pytest.approx(0.4, abs=1e-12)

    def test_empty_trajectory(self, capsys, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        code, _, err = run(capsys, "reward", "--trajectory", str(path))
        assert code == 3
        assert "empty trajectory" in err

    def test_single_row_rejected(self, capsys, tmp_path):
        traj = self.trajectory_file(tmp_path, self.spot_rows()[:1])
        code, _, err = run(capsys, "reward", "--trajectory", traj)
        assert code == 3
        assert "at least 2 steps" in err

    def test_short_row_names_line(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.5,0,0,0\n0.4,0,0,0\n")
        code, _, err = run(capsys, "reward", "--trajectory", str(path))
        assert code == 3
        assert "row 1" in err and "16 columns" in err

    def test_non_numeric_cell_names_line(self, capsys, tmp_path):
        rows = self.spot_rows()[:2]
        traj = self.trajectory_file(tmp_path, rows)
        text = open(traj).read().replace("0.3", "zero.three")
        path = traj.replace("traj", "bad")
        open(path, "w").write(text)
        code, _, err = run(capsys, "reward", "--trajectory", path)
        assert code == 3
        assert "row 2" in err


class TestExitCodes:
    def test_usage_errors_exit_2(self, capsys):
        assert run(capsys, "encode")[0] == 2          # missing --mesh
        assert run(capsys, "unknown-command")[0] == 2
        assert run(capsys)[0] == 2                    # no subcommand

    def test_help_exits_0(self, capsys):
        assert run(capsys, "--help")[0] == 0
        assert run(capsys, "encode", "--help")[0] == 0

    def test_bad_choice_exits_2(self, capsys, cube_obj):
        code, _, _ = run(capsys, "encode", "--mesh", cube_obj,
                         "--format", "xml")
        assert code == 2

import json

import numpy as np
import pytest

from gripperdesign.cli import main
from gripperdesign.config import PipelineConfig, config_from_dict, load_config
from gripperdesign.demo import write_demo_task, write_enclosed_task
from gripperdesign.errors import UngraspableComponentError
from gripperdesign.mesh import save_ply
from gripperdesign.meshgen import make_cylinder
from gripperdesign.pipeline import run_pipeline, validate_report


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    task_path, config_path = write_demo_task(root)
    out = root / "out"
    report = run_pipeline(task_path, config_path, out_dir=out,
                          export_visuals=True)
    return root, task_path, config_path, out, report


class TestConfig:
    def test_defaults_follow_method_values(self):
        cfg = PipelineConfig()
        assert cfg.sdf.rays_per_face == 30
        assert cfg.sdf.cone_angle_deg == 120.0
        assert cfg.optimizer.stroke_two_finger_mm == 48.0
        assert cfg.optimizer.stroke_three_finger_mm == 8.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"sdf": {"raysss": 10}})

    def test_hash_stable_and_sensitive(self):
        a = PipelineConfig()
        b = PipelineConfig()
        assert a.sha256() == b.sha256()
        b.seed = 99
        assert a.sha256() != b.sha256()

    def test_grasp_depths_stay_below_shortest_finger(self):
        cfg = PipelineConfig()
        assert max(cfg.grasp_depths_mm()) < min(cfg.assembly.finger_length_ladder_mm)

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"sdf": {"cone_angle_deg": 270}})


class TestPipeline:
    def test_report_written_and_valid(self, demo_run):
        _, _, _, out, report = demo_run
        validate_report(report)
        on_disk = json.loads((out / "report.json").read_text())
        assert on_disk == json.loads(json.dumps(report, sort_keys=True))
        assert (out / "summary.csv").exists()

    def test_every_component_assigned(self, demo_run):
        *_, report = demo_run
        opt = report["optimization"]
        actives = {op["active"] for op in report["operations"]}
        assert set(opt["assignment"]) == actives
        for cid, j in opt["assignment"].items():
            assert j in opt["selected"]

    def test_sleeve_requires_longer_fingers_than_block(self, demo_run):
        *_, report = demo_run
        mins = {c["component"]: min(s["min_finger_length_mm"]
                                    for s in c["segments"])
                for c in report["constraints"]}
        # the pillar keeps protruding above the sleeve: palm must stay clear
        assert mins["sleeve"] > mins["block"]

    def test_visual_files_exist(self, demo_run):
        _, _, _, out, report = demo_run
        for comp in report["components"]:
            assert (out / "visuals" / f"{comp['id']}_segments.ply").exists()
            assert (out / "visuals" / f"{comp['id']}_sdf.ply").exists()
            assert (out / "figures" / f"{comp['id']}_sdf_hist.png").exists()
        assert (out / "figures" / "coverage_matrix.png").exists()
        assert (out / "figures" / "grippers.png").exists()
        for op in report["operations"]:
            assert (out / "visuals" / f"op{op['index']}_grasp.ply").exists()

    def test_segment_ply_one_color_per_segment(self, demo_run):
        _, _, _, out, report = demo_run
        comp = max(report["components"], key=lambda c: c["segment_count"])
        colors = set()
        for line in (out / "visuals" / f"{comp['id']}_segments.ply").read_text().splitlines():
            tokens = line.split()
            if len(tokens) == 7 and tokens[0] == "3":
                colors.add(tuple(tokens[4:]))
        assert len(colors) == comp["segment_count"]

    def test_primitive_belt_matches_fitted_radius(self, demo_run):
        _, _, _, out, report = demo_run
        comp = next(c for c in report["components"] if c["id"] == "pillar")
        prim = next(s["primitive"] for s in comp["segments"]
                    if s["primitive"] and s["primitive"]["kind"] == "cylinder")
        cyl = prim["cylinder"]
        from gripperdesign.mesh import load_mesh
        belt = load_mesh(out / "visuals" / "pillar_primitives.ply")
        rel = belt.vertices - np.asarray(cyl["axis_point_mm"])
        axis = np.asarray(cyl["axis_dir"])
        radial = np.linalg.norm(rel - np.outer(rel @ axis, axis), axis=1)
        assert np.abs(radial - cyl["radius_mm"]).max() < 1e-6

    def test_cached_rerun_is_identical(self, demo_run):
        root, task_path, config_path, out, _ = demo_run
        first = (out / "report.json").read_bytes()
        run_pipeline(task_path, config_path, out_dir=out)  # hits the cache
        assert (out / "report.json").read_bytes() == first
        assert list((out / "cache").glob("*.npz"))

    def test_matrix_rows_cover_every_component(self, demo_run):
        *_, report = demo_run
        matrix = np.asarray(report["optimization"]["matrix"])
        assert (matrix.sum(axis=1) >= 1).all()

    def test_affordance_exclusion_flows_through_report(self, tmp_path):
        from gripperdesign.assembly import load_assembly_task
        from gripperdesign.meshgen import make_stepped_cylinder
        from gripperdesign.pipeline import analyze_component
        from gripperdesign.assembly import AssemblyComponent

        shaft = make_stepped_cylinder([(12.0, 10.0), (6.0, 25.0)], n_sides=32,
                                      ring_height=3.0)
        (tmp_path / "meshes").mkdir()
        save_ply(shaft, tmp_path / "meshes" / "shaft.ply")
        config = config_from_dict(
            {"clustering": {"cluster_count_overrides": {"shaft": 2}},
             "grasping": {"n_rotations": 8}})
        # discover which segments are grasp-capable, then forbid one of them
        probe = analyze_component(
            AssemblyComponent("shaft", "shaft", "shaft.ply", shaft), config)
        capable = [s.index for s in probe.segments if s.selection is not None]
        assert len(capable) >= 2
        banned = capable[0]
        pose = np.eye(4)
        hover = pose.copy()
        hover[2, 3] = 60.0
        task = {
            "components": [{"id": "shaft", "name": "shaft",
                            "mesh_path": "meshes/shaft.ply"}],
            "operations": [{"active": "shaft", "passive": [],
                            "T_before": [float(v) for v in hover.reshape(-1)],
                            "T_after": [float(v) for v in pose.reshape(-1)]}],
            "exclusions": [{"component": "shaft", "segment_index": banned,
                            "reason": "functional surface"}],
        }
        (tmp_path / "task.json").write_text(json.dumps(task))
        report = run_pipeline(tmp_path / "task.json", config,
                              out_dir=tmp_path / "out")
        graspable = {g["segment_index"]
                     for g in report["operations"][0]["graspable_segments"]}
        assert banned not in graspable
        assert graspable  # the remaining capable segment still carries the part
        seg_entry = next(s for s in report["components"][0]["segments"]
                         if s["index"] == banned)
        assert seg_entry["excluded"] is True
        assert seg_entry["exclusion_reason"] == "functional surface"

    def test_enclosed_component_aborts_with_name(self, tmp_path):
        task_path = write_enclosed_task(tmp_path)
        with pytest.raises(UngraspableComponentError) as err:
            run_pipeline(task_path, tmp_path / "config.json",
                         out_dir=tmp_path / "out")
        assert err.value.component_id == "puck"
        assert err.value.operation_index == 0


class TestCli:
    def test_design_exit_zero(self, demo_run):
        root, task_path, config_path, *_ = demo_run
        rc = main(["design", "--task", str(task_path),
                   "--config", str(config_path),
                   "--out", str(root / "cli_out")])
        assert rc == 0
        assert (root / "cli_out" / "report.json").exists()

    def test_infeasible_exit_two(self, tmp_path, capsys):
        task_path = write_enclosed_task(tmp_path)
        rc = main(["design", "--task", str(task_path),
                   "--config", str(tmp_path / "config.json"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "puck" in capsys.readouterr().err

    def test_segment_fit_grasps_subcommands(self, tmp_path, capsys):
        mesh_path = tmp_path / "part.ply"
        save_ply(make_cylinder(9.0, 30.0, n_sides=24, n_height=3), mesh_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"clustering": {"cluster_count": 1}}))
        assert main(["segment", "--mesh", str(mesh_path), "--config", str(cfg),
                     "--out", str(tmp_path / "seg")]) == 0
        seg_out = json.loads(capsys.readouterr().out.split("segment/sdf")[0])
        assert seg_out["segment_count"] >= 1
        assert (tmp_path / "seg" / "part_segments.ply").exists()

        assert main(["fit", "--mesh", str(mesh_path), "--config", str(cfg)]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert any(r["primitive"] == "cylinder" for r in rows)

        assert main(["grasps", "--mesh", str(mesh_path), "--config", str(cfg)]) == 0
        grasps = json.loads(capsys.readouterr().out)
        assert grasps and all("pose" in g for g in grasps)

    def test_solve_subcommand(self, tmp_path, capsys):
        problem = {
            "component_ids": ["a", "b"],
            "matrix": [[1, 0], [1, 1]],
            "params": [
                {"fingers": 3, "min_width_mm": 14.0, "max_width_mm": 22.0,
                 "finger_length_mm": 30.0},
                {"fingers": 2, "min_width_mm": 0.0, "max_width_mm": 33.0,
                 "finger_length_mm": 30.0},
            ],
        }
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(problem))
        assert main(["solve", "--problem", str(path)]) == 0
        sol = json.loads(capsys.readouterr().out)
        assert sol["cardinality"] == 1
        assert sol["selected"] == [0]

    def test_bad_mesh_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.obj"
        bad.write_text("v 0 0 0\nf 1 2 3\n")
        rc = main(["segment", "--mesh", str(bad)])
        assert rc == 1
        assert "error" in capsys.readouterr().err


def test_load_config_from_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5, "optimizer": {"width_samples": 4}}))
    cfg = load_config(path)
    assert cfg.seed == 5
    assert cfg.optimizer.width_samples == 4
    assert cfg.sdf.rays_per_face == 30

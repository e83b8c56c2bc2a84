import json
import math

import numpy as np
import pytest

from gripperdesign.assembly import (AssemblyComponent, ComponentConstraint,
                                    SegmentConstraint,
                                    apply_affordance_exclusions,
                                    derive_constraints, graspable_segments,
                                    load_assembly_task)
from gripperdesign.collision import brute_force_collision
from gripperdesign.errors import TaskError
from gripperdesign.geometry import make_transform, pose_ladder
from gripperdesign.grasping import build_gripper_solid, generate_three_finger_grasps
from gripperdesign.mesh import save_ply
from gripperdesign.meshgen import make_box, make_cylinder
from gripperdesign.primitives import (THREE_FINGER, FittedCylinder,
                                      PrimitiveSelection)


def _pose16(x=0.0, y=0.0, z=0.0):
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return [float(v) for v in t.reshape(-1)]


def _write_task(tmp_path, components, operations, exclusions=()):
    meshes = tmp_path / "meshes"
    meshes.mkdir(exist_ok=True)
    entries = []
    for cid, mesh in components:
        save_ply(mesh, meshes / f"{cid}.ply")
        entries.append({"id": cid, "name": cid, "mesh_path": f"meshes/{cid}.ply"})
    task = {"components": entries, "operations": operations,
            "exclusions": list(exclusions)}
    path = tmp_path / "task.json"
    path.write_text(json.dumps(task))
    return path


class TestTaskLoading:
    def test_peg_into_block(self, tmp_path):
        path = _write_task(
            tmp_path,
            [("block", make_box((30, 30, 20))), ("peg", make_cylinder(5, 25))],
            [{"active": "peg", "passive": ["block"],
              "T_before": _pose16(z=60), "T_after": _pose16(z=10)}])
        task = load_assembly_task(path)
        assert len(task.operations) == 1
        assert task.operations[0].active_id == "peg"
        assert [pid for pid, _ in task.operations[0].passive] == ["block"]
        assert task.base_ids == ["block"]

    def test_unknown_component_rejected(self, tmp_path):
        path = _write_task(
            tmp_path, [("block", make_box((30, 30, 20)))],
            [{"active": "ghost", "passive": ["block"],
              "T_before": _pose16(), "T_after": _pose16()}])
        with pytest.raises(TaskError):
            load_assembly_task(path)

    def test_passive_set_must_match_assembled(self, tmp_path):
        path = _write_task(
            tmp_path,
            [("a", make_box((10, 10, 10))), ("b", make_box((10, 10, 10))),
             ("c", make_box((10, 10, 10)))],
            [{"active": "b", "passive": ["a"],
              "T_before": _pose16(z=50), "T_after": _pose16(z=10)},
             {"active": "c", "passive": ["a"],  # must be [a, b]
              "T_before": _pose16(z=50), "T_after": _pose16(z=20)}])
        with pytest.raises(TaskError):
            load_assembly_task(path)

    def test_non_rigid_transform_rejected(self, tmp_path):
        bad = np.eye(4)
        bad[0, 0] = 2.0
        path = _write_task(
            tmp_path, [("a", make_box((10, 10, 10)))],
            [{"active": "a", "passive": [],
              "T_before": [float(v) for v in bad.reshape(-1)],
              "T_after": _pose16()}])
        with pytest.raises(TaskError):
            load_assembly_task(path)

    def test_duplicate_active_rejected(self, tmp_path):
        path = _write_task(
            tmp_path, [("a", make_box((10, 10, 10)))],
            [{"active": "a", "passive": [], "T_before": _pose16(z=10),
              "T_after": _pose16()},
             {"active": "a", "passive": ["a"], "T_before": _pose16(z=10),
              "T_after": _pose16()}])
        with pytest.raises(TaskError):
            load_assembly_task(path)

    def test_thirteen_component_chain(self, tmp_path):
        # stand-in meshes; the passive set grows by one component per step
        comps = [(f"c{k:02d}", make_box((8, 8, 8), center=(12.0 * k, 0, 0)))
                 for k in range(13)]
        ops = []
        for k in range(13):
            ops.append({"active": f"c{k:02d}",
                        "passive": [f"c{j:02d}" for j in range(k)],
                        "T_before": _pose16(z=40.0), "T_after": _pose16()})
        task = load_assembly_task(_write_task(tmp_path, comps, ops))
        assert len(task.operations) == 13
        sizes = [len(op.passive) for op in task.operations]
        assert sizes == list(range(13))
        assert task.base_ids == []


class TestExclusions:
    def test_exclusion_removes_segment(self):
        kept, applied = apply_affordance_exclusions(4, [(2, "gear teeth")])
        assert kept == [0, 1, 3]
        assert applied == [(2, "gear teeth")]

    def test_empty_is_identity(self):
        kept, applied = apply_affordance_exclusions(3, [])
        assert kept == [0, 1, 2]
        assert applied == []

    def test_out_of_range_errors(self):
        with pytest.raises(TaskError):
            apply_affordance_exclusions(3, [(5, "nope")])

    def test_all_excluded_leaves_nothing(self):
        kept, _ = apply_affordance_exclusions(2, [(0, "a"), (1, "b")])
        assert kept == []


def _puck_setup(radius=8.0, height=16.0):
    """A standing cylinder with hand-built fit and 3-finger candidates."""
    fit = FittedCylinder(np.array([0.0, 0.0, height / 2]),
                         np.array([0.0, 0.0, 1.0]), radius, height, 1.0, True)
    cands = generate_three_finger_grasps(fit, n_rotations=4, n_axial=3)
    for c in cands:
        c.segment_index = 0
    selection = PrimitiveSelection(0, "cylinder", THREE_FINGER, 2 * radius,
                                   fit.axis_dir, fit, None, 1.0, 1.0)
    mesh = make_cylinder(radius, height, n_sides=24)
    comp = AssemblyComponent("puck", "puck", "puck.ply", mesh)
    return comp, fit, cands, selection


class _Op:
    def __init__(self, active_id, passive, t_before, t_after, index=0):
        self.index = index
        self.active_id = active_id
        self.passive = passive
        self.t_before = t_before
        self.t_after = t_after


LADDER = [10.0, 20.0, 30.0, 40.0, 50.0]


class TestGraspableSegments:
    def test_no_obstacles_every_candidate_segment_returned(self):
        comp, _, cands, _ = _puck_setup()
        op = _Op("puck", [], make_transform(translation=[0, 0, 60.0]),
                 make_transform())
        out = graspable_segments(op, {"puck": comp}, {0: cands}, LADDER)
        assert [g.segment_index for g in out] == [0]
        assert out[0].min_finger_length == 10.0
        assert out[0].max_finger_length == math.inf

    def test_witness_is_collision_free_at_every_ladder_pose(self):
        comp, _, cands, _ = _puck_setup()
        wall = make_box((6.0, 60.0, 60.0), center=(20.0, 0.0, 30.0), resolution=2)
        obs_comp = AssemblyComponent("wall", "wall", "wall.ply", wall)
        op = _Op("puck", [("wall", np.eye(4))],
                 make_transform(translation=[0, 0, 60.0]), make_transform())
        out = graspable_segments(op, {"puck": comp, "wall": obs_comp},
                                 {0: cands}, LADDER)
        assert out
        g = out[0]
        solid = build_gripper_solid(g.witness.gripper_type, g.witness.width,
                                    g.min_finger_length)
        for pose_t in pose_ladder(op.t_before, op.t_after, 5):
            boxes = solid.posed(pose_t @ g.witness.pose)
            assert not brute_force_collision(boxes, [wall])

    def test_full_enclosure_blocks_everything(self):
        comp, _, cands, _ = _puck_setup()
        lid = make_box((80.0, 80.0, 6.0), center=(0.0, 0.0, 30.0), resolution=2)
        obs = AssemblyComponent("lid", "lid", "lid.ply", lid)
        op = _Op("puck", [("lid", np.eye(4))],
                 make_transform(translation=[0, 0, 80.0]), make_transform())
        out = graspable_segments(op, {"puck": comp, "lid": obs}, {0: cands}, LADDER)
        assert out == []

    def test_added_obstacle_never_helps(self):
        comp, _, cands, _ = _puck_setup()
        before = make_transform(translation=[0, 0, 60.0])
        after = make_transform()
        free_op = _Op("puck", [], before, after)
        free = graspable_segments(free_op, {"puck": comp}, {0: cands}, LADDER)
        floor = make_box((100.0, 100.0, 8.0), center=(0.0, 0.0, -4.0), resolution=2)
        obs = AssemblyComponent("floor", "floor", "floor.ply", floor)
        walled_op = _Op("puck", [("floor", np.eye(4))], before, after)
        walled = graspable_segments(walled_op, {"puck": comp, "floor": obs},
                                    {0: cands}, LADDER)
        free_ids = {g.segment_index for g in free}
        walled_ids = {g.segment_index for g in walled}
        assert walled_ids <= free_ids
        free_min = {g.segment_index: g.min_finger_length for g in free}
        for g in walled:
            assert g.min_finger_length >= free_min[g.segment_index]


class TestDeriveConstraints:
    def test_free_standing_gets_unbounded_window(self):
        comp, _, cands, selection = _puck_setup()
        op = _Op("puck", [], make_transform(translation=[0, 0, 60.0]),
                 make_transform())
        out = graspable_segments(op, {"puck": comp}, {0: cands}, LADDER)
        constraint, dropped = derive_constraints(op, out, {0: selection})
        assert dropped == []
        assert len(constraint.segments) == 1
        seg = constraint.segments[0]
        assert seg.fingers == 3
        assert seg.width == pytest.approx(16.0)
        assert seg.min_finger_length == 10.0
        assert seg.max_finger_length == math.inf

    def test_sleeve_over_shaft_raises_min_length(self):
        # grasping a short sleeve while a shaft keeps protruding h above it:
        # the palm sits on the shaft tip unless the fingers outreach h
        comp, _, cands, selection = _puck_setup(radius=12.0, height=16.0)
        shaft = make_cylinder(5.0, 40.0, n_sides=16)  # protrudes 24 above puck
        obs = AssemblyComponent("shaft", "shaft", "shaft.ply", shaft)
        op = _Op("puck", [("shaft", np.eye(4))],
                 make_transform(translation=[0, 0, 70.0]), make_transform())
        out = graspable_segments(op, {"puck": comp, "shaft": obs}, {0: cands},
                                 LADDER)
        assert out
        protrusion = 40.0 - 16.0
        assert out[0].min_finger_length > protrusion - 16.0  # contact can sit high
        constraint, _ = derive_constraints(op, out, {0: selection})
        assert constraint.segments[0].min_finger_length == out[0].min_finger_length

    def test_deeper_collar_means_longer_fingers(self):
        comp, _, cands, selection = _puck_setup()
        op_args = (make_transform(translation=[0, 0, 70.0]), make_transform())
        mins = []
        for wall_h in (0.0, 30.0):
            if wall_h == 0.0:
                op = _Op("puck", [], *op_args)
                out = graspable_segments(op, {"puck": comp}, {0: cands}, LADDER)
            else:
                from gripperdesign.meshgen import make_tub
                collar = make_tub(18.0, wall_h, wall_thickness=5.0,
                                  floor_thickness=4.0, resolution=2)
                obs = AssemblyComponent("collar", "collar", "collar.ply", collar)
                op = _Op("puck", [("collar", np.eye(4))], *op_args)
                out = graspable_segments(op, {"puck": comp, "collar": obs},
                                         {0: cands}, LADDER)
            assert out
            mins.append(out[0].min_finger_length)
        assert mins[1] > mins[0]

    def test_union_of_segment_constraints(self):
        segs = [SegmentConstraint("c", 0, 3, 20.0, 10.0, math.inf),
                SegmentConstraint("c", 2, 2, 12.0, 10.0, 40.0)]
        cc = ComponentConstraint("c", segs)
        assert {s.segment_index for s in cc.segments} == {0, 2}

    def test_degenerate_window_rejected(self):
        with pytest.raises(ValueError):
            SegmentConstraint("c", 0, 3, 20.0, 30.0, 30.0)

    def test_bad_finger_count_rejected(self):
        with pytest.raises(ValueError):
            SegmentConstraint("c", 0, 4, 20.0, 10.0, 20.0)

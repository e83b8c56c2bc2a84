"""Assembly task model, graspable-segment selection, and gripper constraints.

An assembly is an ordered list of operations; each operation moves one
active component from a pre-assembly pose to its assembled pose while the
previously assembled components sit fixed as obstacles. A segment is
graspable in an operation when at least one generated grasp stays
collision-free at every pose of the interpolated path, and the surviving
witness grasp yields the finger-length window for that segment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collision import CollisionScene, check_collision
from .errors import TaskError
from .geometry import is_rigid, pose_ladder
from .grasping import (GraspCandidate, GripperGeometry, build_gripper_solid,
                       find_parallel_facet_pairs, generate_three_finger_grasps,
                       generate_two_finger_grasps, planar_cluster)
from .mesh import TriangleMesh, load_mesh
from .primitives import THREE_FINGER, PrimitiveSelection


@dataclass
class AssemblyComponent:
    component_id: str
    name: str
    mesh_path: str
    mesh: TriangleMesh


@dataclass
class AssemblyOperation:
    index: int
    active_id: str
    passive: list[tuple[str, np.ndarray]]   # (component id, world pose)
    t_before: np.ndarray
    t_after: np.ndarray


@dataclass
class AssemblyTask:
    components: dict[str, AssemblyComponent]
    operations: list[AssemblyOperation]
    exclusions: dict[str, list[tuple[int, str]]]  # component -> (segment, reason)
    base_ids: list[str] = field(default_factory=list)


def _parse_transform(raw, where: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.size != 16:
        raise TaskError(f"{where}: transform must have 16 row-major numbers")
    t = arr.reshape(4, 4)
    if not is_rigid(t, tol=1e-9):
        raise TaskError(f"{where}: transform is not a rigid motion")
    return t


def load_assembly_task(path) -> AssemblyTask:
    """Parse and validate the JSON task file.

    Mesh paths resolve relative to the task file. The passive set of each
    operation must equal the base components (never active) plus everything
    assembled earlier; passive components sit at the final pose of the
    operation that placed them (base components at identity).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TaskError(f"cannot read task file '{path}': {exc}") from exc

    components: dict[str, AssemblyComponent] = {}
    for entry in data.get("components", []):
        cid = str(entry["id"])
        if cid in components:
            raise TaskError(f"duplicate component id '{cid}'")
        mesh_path = (path.parent / entry["mesh_path"]).resolve()
        mesh = load_mesh(mesh_path)
        components[cid] = AssemblyComponent(cid, str(entry.get("name", cid)),
                                            str(entry["mesh_path"]), mesh)
    if not components:
        raise TaskError("task defines no components")

    raw_ops = data.get("operations", [])
    if not raw_ops:
        raise TaskError("task defines no operations")
    actives = [str(op["active"]) for op in raw_ops]
    for cid in actives:
        if cid not in components:
            raise TaskError(f"operation references unknown component '{cid}'")
    if len(set(actives)) != len(actives):
        raise TaskError("a component appears as active in more than one operation")
    base_ids = sorted(set(components) - set(actives))

    final_pose: dict[str, np.ndarray] = {cid: np.eye(4) for cid in base_ids}
    operations: list[AssemblyOperation] = []
    assembled = list(base_ids)
    for k, op in enumerate(raw_ops):
        active = str(op["active"])
        passive_ids = [str(p) for p in op.get("passive", [])]
        for pid in passive_ids:
            if pid not in components:
                raise TaskError(f"operation {k}: unknown passive component '{pid}'")
        if sorted(passive_ids) != sorted(assembled):
            raise TaskError(
                f"operation {k}: passive set {sorted(passive_ids)} does not match "
                f"previously assembled components {sorted(assembled)}")
        t_before = _parse_transform(op["T_before"], f"operation {k} T_before")
        t_after = _parse_transform(op["T_after"], f"operation {k} T_after")
        passive = [(pid, final_pose[pid]) for pid in sorted(passive_ids)]
        operations.append(AssemblyOperation(k, active, passive, t_before, t_after))
        final_pose[active] = t_after
        assembled.append(active)

    exclusions: dict[str, list[tuple[int, str]]] = {}
    for entry in data.get("exclusions", []):
        cid = str(entry["component"])
        if cid not in components:
            raise TaskError(f"exclusion references unknown component '{cid}'")
        exclusions.setdefault(cid, []).append(
            (int(entry["segment_index"]), str(entry.get("reason", ""))))
    return AssemblyTask(components, operations, exclusions, base_ids)


def apply_affordance_exclusions(segment_count: int,
                                exclusions: list[tuple[int, str]]
                                ) -> tuple[list[int], list[tuple[int, str]]]:
    """Drop manually excluded segments; returns (kept indices, applied records)."""
    excluded = {}
    for idx, reason in exclusions:
        if not 0 <= idx < segment_count:
            raise TaskError(f"exclusion index {idx} out of range "
                            f"(component has {segment_count} segments)")
        excluded[idx] = reason
    kept = [i for i in range(segment_count) if i not in excluded]
    return kept, sorted(excluded.items())


# ---------------------------------------------------------------------------
# Graspability and constraints
# ---------------------------------------------------------------------------

@dataclass
class SegmentConstraint:
    component_id: str
    segment_index: int
    fingers: int                    # 2 or 3
    width: float                    # characteristic opening width, mm
    min_finger_length: float
    max_finger_length: float        # math.inf when unbounded

    def __post_init__(self):
        if self.fingers not in (2, 3):
            raise ValueError("fingers must be 2 or 3")
        if self.width <= 0:
            raise ValueError("width must be > 0")
        if not self.min_finger_length < self.max_finger_length:
            raise ValueError("finger length window must be non-degenerate")


@dataclass
class ComponentConstraint:
    component_id: str
    segments: list[SegmentConstraint]


@dataclass
class GraspableSegment:
    segment_index: int
    witness: GraspCandidate
    min_finger_length: float
    max_finger_length: float        # math.inf when every ladder length works
    ladder_feasible: list[float]


def generate_segment_candidates(segment_mesh: TriangleMesh, parent_faces: np.ndarray,
                                full_mesh: TriangleMesh,
                                selection: PrimitiveSelection,
                                n_rotations: int = 12,
                                depths=(2.0, 5.0, 8.0),
                                n_axial: int = 3,
                                angle_tol_deg: float = 10.0,
                                min_facet_area: float = 25.0,
                                max_width: float = 200.0) -> list[GraspCandidate]:
    """Grasp candidates for one segment, typed by its primitive selection."""
    if selection.gripper_type == THREE_FINGER:
        cands = generate_three_finger_grasps(selection.cylinder,
                                             n_rotations=n_rotations,
                                             n_axial=n_axial)
    else:
        facets = planar_cluster(segment_mesh, angle_tol_deg)
        pairs = find_parallel_facet_pairs(segment_mesh, facets, angle_tol_deg,
                                          min_area=min_facet_area,
                                          max_width=max_width)
        cands = []
        for pair in pairs:
            cands.extend(generate_two_finger_grasps(pair, n_rotations=n_rotations,
                                                    depths=depths))
    for c in cands:
        c.segment_index = selection.segment_index
    return cands


def _candidate_feasible(candidate: GraspCandidate, length: float,
                        solid_cache: dict, geometry: GripperGeometry,
                        ladder_poses: list[np.ndarray],
                        scene: CollisionScene,
                        finger_dead: dict) -> bool:
    """Collision-free at every ladder pose with fingers long enough to reach."""
    if candidate.depth > length:
        return False
    key = (candidate.gripper_type, round(candidate.width, 9), length)
    if key not in solid_cache:
        solid_cache[key] = build_gripper_solid(candidate.gripper_type,
                                               candidate.width, length, geometry)
    solid = solid_cache[key]
    fingers, palm = solid.boxes[1:], solid.boxes[:1]
    for pose_t in ladder_poses:
        world = pose_t @ candidate.pose
        # fingers only grow with length, so a finger hit rules out longer fingers
        if check_collision([b.transformed(world) for b in fingers], scene):
            finger_dead[id(candidate)] = True
            return False
        if check_collision([b.transformed(world) for b in palm], scene):
            return False
    return True


def graspable_segments(operation: AssemblyOperation,
                       components: dict[str, AssemblyComponent],
                       candidates_per_segment: dict[int, list[GraspCandidate]],
                       finger_length_ladder: list[float],
                       geometry: GripperGeometry | None = None,
                       path_samples: int = 5) -> list[GraspableSegment]:
    """Segments of the active component with a collision-free witness grasp.

    Grasps are held rigidly by the moving component along the interpolated
    path; obstacles are the passive components at their assembled poses. The
    ladder of finger lengths is scanned in increasing order so the stored
    minimum is the smallest feasible length, which keeps the constraint
    monotone under added obstacles.
    """
    geometry = geometry or GripperGeometry()
    scene = CollisionScene.from_posed(
        [(components[pid].mesh, pose) for pid, pose in operation.passive])
    ladder_poses = pose_ladder(operation.t_before, operation.t_after, path_samples)
    ladder = sorted(finger_length_ladder)
    results: list[GraspableSegment] = []
    for seg_index in sorted(candidates_per_segment):
        cands = candidates_per_segment[seg_index]
        solid_cache: dict = {}
        finger_dead: dict = {}

        def feasible_at(cand, length, dead=None):
            # the dead-marking shortcut is only sound when lengths ascend
            return _candidate_feasible(cand, length, solid_cache, geometry,
                                       ladder_poses, scene,
                                       finger_dead if dead is None else dead)

        min_length = None
        at_min: list[GraspCandidate] = []
        for length in ladder:
            at_min = [c for c in cands
                      if not finger_dead.get(id(c)) and feasible_at(c, length)]
            if at_min:
                min_length = length
                break
        if min_length is None:
            continue
        # among candidates alive at the minimal length, prefer the one whose
        # feasible window reaches highest (checked top-down, so an unbounded
        # witness costs one extra collision check)
        witness = None
        witness_max = -math.inf
        for cand in at_min:
            for length in reversed(ladder):
                if length < min_length:
                    break
                if length == min_length or feasible_at(cand, length, dead={}):
                    if length > witness_max:
                        witness, witness_max = cand, length
                    break
            if witness_max == ladder[-1]:
                break
        feasible = [lv for lv in ladder
                    if lv == min_length
                    or (min_length < lv <= witness_max
                        and feasible_at(witness, lv, dead={}))]
        max_len = math.inf if witness_max == ladder[-1] else witness_max
        results.append(GraspableSegment(seg_index, witness, min_length,
                                        max_len, feasible))
    return results


def derive_constraints(operation: AssemblyOperation,
                       graspables: list[GraspableSegment],
                       selections: dict[int, PrimitiveSelection]
                       ) -> tuple[ComponentConstraint, list[tuple[int, str]]]:
    """Per-segment gripper constraints for the operation's active component.

    Segments whose feasible finger-length window collapses to a point are
    dropped (the window is open on both sides); drops are reported.
    """
    constraints: list[SegmentConstraint] = []
    dropped: list[tuple[int, str]] = []
    for g in graspables:
        sel = selections[g.segment_index]
        fingers = 3 if sel.gripper_type == THREE_FINGER else 2
        if not g.min_finger_length < g.max_finger_length:
            dropped.append((g.segment_index,
                            "single feasible finger length leaves an empty window"))
            continue
        constraints.append(SegmentConstraint(
            operation.active_id, g.segment_index, fingers, sel.width,
            g.min_finger_length, g.max_finger_length))
    return ComponentConstraint(operation.active_id, constraints), dropped

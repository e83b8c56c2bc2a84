"""End-to-end orchestration: segment, fit, filter, plan, and optimize.

Stage order: load -> smooth -> diameter field -> soft/hard clustering ->
segments -> affordance filter -> primitive fits -> per-operation grasp
search under the assembly path -> constraint derivation -> parameter
sampling -> exact cover. Per-component segmentation results are cached on
disk keyed by mesh bytes, the relevant config slice, and the seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import (AssemblyComponent, AssemblyTask, ComponentConstraint,
                       GraspableSegment, apply_affordance_exclusions,
                       derive_constraints, generate_segment_candidates,
                       graspable_segments, load_assembly_task)
from .config import PipelineConfig, load_config
from .errors import DegenerateInputError, UngraspableComponentError
from .grasping import GripperGeometry
from .mesh import TriangleMesh, smooth_mesh
from .primitives import (FittedBox, FittedCylinder, PrimitiveSelection,
                         detect_box_face_emptiness, fit_cylinder_ransac,
                         fit_oriented_box, sample_surface_points,
                         select_primitive)
from .raycast import BvhAccelerator
from .segmentation import (SdfField, SegmentLabeling, compute_sdf,
                           fill_missing_sdf, hard_cluster,
                           select_cluster_count, soft_cluster,
                           split_into_segments)
from .setcover import (CoverProblem, CoverSolution, build_coefficients,
                       compute_bounds, minimize_grippers, params_to_dict,
                       sample_params)


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class SegmentAnalysis:
    index: int
    parent_faces: np.ndarray
    submesh: TriangleMesh
    points: np.ndarray
    normals: np.ndarray
    cylinder: FittedCylinder | None = None
    box: FittedBox | None = None
    selection: PrimitiveSelection | None = None
    ungraspable_reason: str | None = None


@dataclass
class ComponentAnalysis:
    component_id: str
    mesh: TriangleMesh                 # smoothed working mesh
    sdf: SdfField
    labeling: SegmentLabeling
    cluster_count: int
    mixture_means_mm: list[float]
    segments: list[SegmentAnalysis] = field(default_factory=list)
    kept_segments: list[int] = field(default_factory=list)
    exclusion_records: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class OperationResult:
    index: int
    active_id: str
    passive_ids: list[str]
    graspables: list[GraspableSegment]
    dropped: list[tuple[int, str]]
    constraint: ComponentConstraint


# ---------------------------------------------------------------------------
# Per-component analysis
# ---------------------------------------------------------------------------

def _segment_cache_key(component: AssemblyComponent, config: PipelineConfig) -> str:
    relevant = {
        "smoothing": config.smoothing.__dict__,
        "sdf": config.sdf.__dict__,
        "clustering": {k: (sorted(v.items()) if isinstance(v, dict) else v)
                       for k, v in config.clustering.__dict__.items()},
        "seed": config.seed,
    }
    h = hashlib.sha256()
    h.update(component.mesh.vertices.tobytes())
    h.update(component.mesh.faces.tobytes())
    h.update(json.dumps(relevant, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def _segment_component(component: AssemblyComponent, config: PipelineConfig,
                       cache_dir: Path | None):
    """Smoothed mesh plus segmentation products, cached on disk when possible."""
    cache_file = None
    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_file = cache_dir / f"{component.component_id}_{_segment_cache_key(component, config)}.npz"
    mesh = smooth_mesh(component.mesh, config.smoothing.iterations,
                       config.smoothing.strength)
    if cache_file is not None and cache_file.exists():
        data = np.load(cache_file)
        labeling = SegmentLabeling(data["labels"], int(data["segment_count"]),
                                   data["cluster_of_segment"])
        return mesh, SdfField(data["sdf"]), labeling, int(data["k"]), \
            [float(x) for x in data["means_mm"]]

    seed = _stable_seed(config.seed, component.component_id)
    accel = BvhAccelerator(mesh)
    sdf = fill_missing_sdf(mesh, compute_sdf(
        mesh, accel, rays_per_face=config.sdf.rays_per_face,
        cone_angle_deg=config.sdf.cone_angle_deg, seed=seed))
    cl = config.clustering
    k = cl.cluster_count_overrides.get(component.component_id) or cl.cluster_count
    if k is None:
        k = select_cluster_count(sdf, cl.cluster_count_candidates, seed=seed,
                                 max_iters=cl.max_iters, restarts=cl.restarts)
    k = min(k, len(np.unique(sdf.values)))
    soft = soft_cluster(sdf, k, seed=seed, max_iters=cl.max_iters,
                        restarts=cl.restarts)
    labels = hard_cluster(mesh, soft, cl.smoothness)
    min_faces = max(1, int(math.ceil(cl.min_segment_fraction * len(mesh.faces))))
    labeling = split_into_segments(mesh, labels, min_faces=min_faces)
    means_mm = [float(x) for x in soft.means_mm]
    if cache_file is not None:
        np.savez(cache_file, sdf=sdf.values, labels=labeling.labels,
                 segment_count=labeling.segment_count,
                 cluster_of_segment=labeling.cluster_of_segment,
                 k=k, means_mm=np.array(means_mm))
    return mesh, sdf, labeling, k, means_mm


def analyze_component(component: AssemblyComponent, config: PipelineConfig,
                      cache_dir: Path | None = None) -> ComponentAnalysis:
    """Segment one component and fit a primitive to every segment."""
    mesh, sdf, labeling, k, means_mm = _segment_component(component, config,
                                                          cache_dir)
    analysis = ComponentAnalysis(component.component_id, mesh, sdf, labeling,
                                 k, means_mm)
    fit = config.fitting
    for seg_index in range(labeling.segment_count):
        faces = labeling.faces_of(seg_index)
        submesh, parent = mesh.submesh(faces)
        seed = _stable_seed(config.seed, component.component_id, seg_index)
        points, normals = sample_surface_points(submesh, fit.sample_points,
                                                seed=seed)
        seg = SegmentAnalysis(seg_index, parent, submesh, points, normals)
        diag = submesh.bbox_diagonal
        tol = float(np.clip(fit.ransac_tol_fraction * diag,
                            fit.ransac_tol_min_mm, fit.ransac_tol_max_mm))
        try:
            seg.cylinder = fit_cylinder_ransac(points, normals, distance_tol=tol,
                                               max_iters=fit.ransac_max_iters,
                                               seed=seed)
        except DegenerateInputError:
            seg.cylinder = None
        try:
            seg.box = fit_oriented_box(points)
            seg.box.face_nonempty = detect_box_face_emptiness(
                points, seg.box, shell_tol=fit.shell_tol_fraction * diag,
                coverage_threshold=fit.coverage_threshold,
                grid=fit.occupancy_grid)
        except DegenerateInputError:
            seg.box = None
        seg.selection = select_primitive(points, seg_index, seg.cylinder, seg.box)
        if seg.selection is None:
            seg.ungraspable_reason = "no primitive with a graspable surface"
        analysis.segments.append(seg)
    return analysis


# ---------------------------------------------------------------------------
# Per-operation grasp search
# ---------------------------------------------------------------------------

def evaluate_operation(operation, task: AssemblyTask,
                       analyses: dict[str, ComponentAnalysis],
                       config: PipelineConfig) -> OperationResult:
    analysis = analyses[operation.active_id]
    kept, records = apply_affordance_exclusions(
        analysis.labeling.segment_count,
        task.exclusions.get(operation.active_id, []))
    analysis.kept_segments = kept
    analysis.exclusion_records = records
    g = config.grasping
    depths = tuple(config.grasp_depths_mm())
    candidates: dict[int, list] = {}
    for seg_index in kept:
        seg = analysis.segments[seg_index]
        if seg.selection is None:
            continue
        cands = generate_segment_candidates(
            seg.submesh, seg.parent_faces, analysis.mesh, seg.selection,
            n_rotations=g.n_rotations, depths=depths, n_axial=g.n_axial,
            angle_tol_deg=g.angle_tol_deg, min_facet_area=g.min_facet_area_mm2,
            max_width=g.max_pair_width_mm)
        if cands:
            candidates[seg_index] = cands
    geometry = GripperGeometry(g.finger_thickness_mm, g.finger_width_mm,
                               tuple(g.palm_size_mm))
    graspables = graspable_segments(
        operation, task.components, candidates,
        list(config.assembly.finger_length_ladder_mm), geometry,
        path_samples=config.assembly.path_samples)
    if not graspables:
        raise UngraspableComponentError(
            operation.active_id, operation.index,
            "every grasp candidate collides along the assembly path"
            if candidates else "no segment offers grasp candidates")
    constraint, dropped = derive_constraints(operation, graspables,
                                             {s.index: s.selection
                                              for s in analysis.segments
                                              if s.selection is not None})
    if not constraint.segments:
        raise UngraspableComponentError(
            operation.active_id, operation.index,
            "all witness grasps have degenerate finger-length windows")
    return OperationResult(operation.index, operation.active_id,
                           [pid for pid, _ in operation.passive],
                           graspables, dropped, constraint)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def _cylinder_dict(c: FittedCylinder) -> dict:
    return {"axis_point_mm": [float(v) for v in c.axis_point],
            "axis_dir": [float(v) for v in c.axis_dir],
            "radius_mm": float(c.radius), "height_mm": float(c.height),
            "inlier_fraction": float(c.inlier_fraction),
            "lateral_surface_nonempty": bool(c.lateral_surface_nonempty)}


def _box_dict(b: FittedBox) -> dict:
    return {"center_mm": [float(v) for v in b.center],
            "axes": [[float(v) for v in row] for row in b.axes],
            "half_extents_mm": [float(v) for v in b.half_extents],
            "face_nonempty": [bool(v) for v in b.face_nonempty]
            if b.face_nonempty is not None else None}


def build_report(task: AssemblyTask, config: PipelineConfig,
                 analyses: dict[str, ComponentAnalysis],
                 op_results: list[OperationResult],
                 bounds, params, problem: CoverProblem,
                 solution: CoverSolution, task_sha256: str) -> dict:
    components = []
    for cid, comp in task.components.items():
        a = analyses[cid]
        excluded = dict(a.exclusion_records)
        segments = []
        for seg in a.segments:
            sel = seg.selection
            segments.append({
                "index": seg.index,
                "face_count": int(len(seg.parent_faces)),
                "area_mm2": float(a.mesh.face_areas[seg.parent_faces].sum()),
                "excluded": seg.index in excluded,
                "exclusion_reason": excluded.get(seg.index),
                "ungraspable_reason": seg.ungraspable_reason,
                "primitive": None if sel is None else {
                    "kind": sel.kind,
                    "gripper_type": sel.gripper_type,
                    "width_mm": float(sel.width),
                    "hull_volume_mm3": float(sel.hull_volume),
                    "primitive_volume_mm3": float(sel.primitive_volume),
                    "cylinder": _cylinder_dict(sel.cylinder) if sel.cylinder else None,
                    "box": _box_dict(sel.box) if sel.box else None,
                },
            })
        components.append({
            "id": cid, "name": comp.name, "mesh_path": comp.mesh_path,
            "face_count": int(len(comp.mesh.faces)),
            "dropped_degenerate_faces": int(comp.mesh.dropped_degenerate_faces),
            "cluster_count": a.cluster_count,
            "mixture_means_mm": a.mixture_means_mm,
            "segment_count": a.labeling.segment_count,
            "segments": segments,
        })

    operations = []
    for r in op_results:
        graspable = []
        for g in r.graspables:
            graspable.append({
                "segment_index": g.segment_index,
                "min_finger_length_mm": float(g.min_finger_length),
                "max_finger_length_mm": _finite_or_none(g.max_finger_length),
                "feasible_ladder_mm": [float(x) for x in g.ladder_feasible],
                "witness": {
                    "gripper_type": g.witness.gripper_type,
                    "width_mm": float(g.witness.width),
                    "depth_mm": float(g.witness.depth),
                    "pose": [float(x) for x in g.witness.pose.reshape(-1)],
                    "contacts_mm": [[float(v) for v in c] for c in g.witness.contacts],
                },
            })
        operations.append({
            "index": r.index, "active": r.active_id, "passive": r.passive_ids,
            "graspable_segments": graspable,
            "dropped_segments": [{"segment_index": i, "reason": why}
                                 for i, why in r.dropped],
        })

    constraints = []
    for r in op_results:
        constraints.append({
            "component": r.constraint.component_id,
            "segments": [{
                "segment_index": s.segment_index,
                "fingers": s.fingers,
                "width_mm": float(s.width),
                "min_finger_length_mm": float(s.min_finger_length),
                "max_finger_length_mm": _finite_or_none(s.max_finger_length),
            } for s in r.constraint.segments],
        })

    selected_params = [problem.params[j] for j in solution.selected]
    grippers = []
    for rank, j in enumerate(solution.selected):
        covers = [cid for cid, pj in solution.assignment.items() if pj == j]
        grippers.append({"rank": rank, "param_index": j,
                         **params_to_dict(problem.params[j]),
                         "assigned_components": sorted(covers)})

    return {
        "version": "1",
        "provenance": {
            "tool": "gripperdesign",
            "tool_version": __version__,
            "seed": config.seed,
            "config_sha256": config.sha256(),
            "task_sha256": task_sha256,
        },
        "components": components,
        "operations": operations,
        "constraints": constraints,
        "optimization": {
            "strokes_mm": {"2": config.optimizer.stroke_two_finger_mm,
                           "3": config.optimizer.stroke_three_finger_mm},
            "width_margin_mm": config.optimizer.width_margin_mm,
            "bounds": [{
                "fingers": b.fingers,
                "max_width_upper_mm": float(b.max_width_upper),
                "max_width_lower_mm": float(b.max_width_lower),
                "length_upper_mm": float(b.length_upper),
                "length_lower_mm": float(b.length_lower),
            } for b in (bounds[f] for f in sorted(bounds))],
            "params": [params_to_dict(p) for p in params],
            "component_order": list(problem.component_ids),
            "matrix": problem.matrix.astype(int).tolist(),
            "selected": list(solution.selected),
            "assignment": dict(solution.assignment),
            "cardinality": solution.cardinality,
        },
        "grippers": grippers,
        "selected_param_count": len(selected_params),
    }


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def run_pipeline(task_path, config: PipelineConfig | str | Path | None = None,
                 out_dir: str | Path | None = None, export_visuals: bool = False,
                 use_cache: bool = True) -> dict:
    """Run every stage on a task file and write the report (plus visuals).

    Raises UngraspableComponentError / InfeasibleCoverError naming the
    offending component when the task cannot be completed.
    """
    if config is None or isinstance(config, (str, Path)):
        config = load_config(config)
    task_path = Path(task_path)
    task = load_assembly_task(task_path)
    task_sha = hashlib.sha256(task_path.read_bytes()).hexdigest()
    out_path = Path(out_dir) if out_dir is not None else None
    cache_dir = out_path / "cache" if (out_path is not None and use_cache) else None

    analyses = {cid: analyze_component(comp, config, cache_dir)
                for cid, comp in task.components.items()}
    op_results = [evaluate_operation(op, task, analyses, config)
                  for op in task.operations]

    constraints = [r.constraint for r in op_results]
    bounds = compute_bounds(constraints, config.strokes,
                            margin=config.optimizer.width_margin_mm)
    counts = {f: (config.optimizer.width_samples, config.optimizer.length_samples)
              for f in bounds}
    params = sample_params(bounds, counts, config.strokes)
    problem = build_coefficients(constraints, params)
    solution = minimize_grippers(problem)
    report = build_report(task, config, analyses, op_results, bounds, params,
                          problem, solution, task_sha)
    validate_report(report)

    if out_path is not None:
        from .report import export_visual_files, write_report_files
        out_path.mkdir(parents=True, exist_ok=True)
        write_report_files(report, out_path)
        if export_visuals:
            export_visual_files(task, config, analyses, op_results, report,
                                out_path)
    return report


def validate_report(report: dict) -> None:
    """Check the report against the schema shipped with the package."""
    import jsonschema

    schema_path = Path(__file__).parent / "schemas" / "report_schema.json"
    schema = json.loads(schema_path.read_text())
    jsonschema.validate(report, schema)
